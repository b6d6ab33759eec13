//! seforge command line: train synthetic environments, evaluate them, run
//! the experiment suites, and gate releases with the oracle verification
//! suite.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use seforge_core::agents::AgentKind;
use seforge_core::config::{load_run_config, RunConfig};
use seforge_core::experiments::{
    export, suite_baseline, suite_histograms, suite_robustness, HpMode, SuiteOutput,
};
use seforge_core::nes::{run_nes, InnerLoopEvaluator, NesSetup};
use seforge_core::synth::SyntheticEnvSpec;
use seforge_core::verify;

const USAGE: &str = "\
seforge - learn synthetic training environments for RL tasks

USAGE:
    seforge <command> [flags]

COMMANDS:
    train-se      run the evolution search and save the best SE checkpoint
    eval-se       train default agents on a saved SE and report test returns
    baseline      train agents directly on the real task (control condition)
    robustness    train hyperparameter-sampled agents on a set of SEs
    transfer      robustness suite with a different agent kind
    histograms    next-state/reward distribution study for one SE
    verify        run the oracle verification suite (CI gate)

GLOBAL FLAGS:
    --config <file>    run configuration (see configs/)
    --seed <u64>       run seed (default 0)
    --workers <n>      parallel workers (default: cpu count);
                       env SEFORGE_THREADS overrides
    --out <dir>        output directory (default runs/)

COMMAND FLAGS:
    --se <path>        SE checkpoint (eval-se, histograms)
    --se-dir <dir>     directory of SE checkpoints (robustness, transfer)
    --agent <kind>     ddqn | dueling_ddqn | td3_discrete
    --n-se <n>         cap the number of SEs drawn from --se-dir
    --n-agents <n>     agents per SE / baseline runs
    --max-episodes <n> training episode cap for suite agents (default 1000)

EXIT CODES:
    0 success, 2 configuration or usage error, 3 verification failure
";

fn fail_usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}\n\n{USAGE}");
    ExitCode::from(2)
}

#[derive(Debug, Default)]
struct Args {
    command: String,
    config: Option<PathBuf>,
    seed: u64,
    workers: Option<usize>,
    out: Option<PathBuf>,
    se: Option<PathBuf>,
    se_dir: Option<PathBuf>,
    agent: Option<String>,
    n_se: Option<usize>,
    n_agents: Option<usize>,
    max_episodes: Option<usize>,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    let mut args = Args { command: argv[0].clone(), ..Args::default() };
    let mut it = argv[1..].iter();
    while let Some(flag) = it.next() {
        let mut value = |name: &str| {
            it.next().ok_or_else(|| format!("flag {name} needs a value")).cloned()
        };
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(value("--config")?)),
            "--seed" => {
                args.seed = value("--seed")?
                    .parse()
                    .map_err(|_| "--seed needs an unsigned integer".to_string())?
            }
            "--workers" => {
                args.workers = Some(
                    value("--workers")?
                        .parse()
                        .map_err(|_| "--workers needs a positive integer".to_string())?,
                )
            }
            "--out" => args.out = Some(PathBuf::from(value("--out")?)),
            "--se" => args.se = Some(PathBuf::from(value("--se")?)),
            "--se-dir" => args.se_dir = Some(PathBuf::from(value("--se-dir")?)),
            "--agent" => args.agent = Some(value("--agent")?),
            "--n-se" => {
                args.n_se = Some(
                    value("--n-se")?
                        .parse()
                        .map_err(|_| "--n-se needs a positive integer".to_string())?,
                )
            }
            "--n-agents" => {
                args.n_agents = Some(
                    value("--n-agents")?
                        .parse()
                        .map_err(|_| "--n-agents needs a positive integer".to_string())?,
                )
            }
            "--max-episodes" => {
                args.max_episodes = Some(
                    value("--max-episodes")?
                        .parse()
                        .map_err(|_| "--max-episodes needs a positive integer".to_string())?,
                )
            }
            other => return Err(format!("unknown flag '{other}'")),
        }
    }
    Ok(args)
}

fn workers(args: &Args) -> Result<usize, String> {
    if let Ok(env) = std::env::var("SEFORGE_THREADS") {
        return env
            .parse::<usize>()
            .map_err(|_| format!("SEFORGE_THREADS='{env}' is not a positive integer"))
            .and_then(|w| if w == 0 { Err("SEFORGE_THREADS must be >= 1".into()) } else { Ok(w) });
    }
    Ok(args.workers.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }))
}

fn out_dir(args: &Args) -> std::io::Result<PathBuf> {
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_config(args: &Args) -> Result<RunConfig, String> {
    let path = args.config.as_ref().ok_or("--config is required for this command")?;
    load_run_config(path).map_err(|e| e.to_string())
}

fn agent_kind(args: &Args, default: AgentKind) -> Result<AgentKind, String> {
    match &args.agent {
        None => Ok(default),
        Some(name) => AgentKind::from_name(name)
            .ok_or_else(|| format!("unknown agent kind '{name}' (ddqn, dueling_ddqn, td3_discrete)")),
    }
}

fn cmd_train_se(args: &Args) -> Result<ExitCode, String> {
    let cfg = load_config(args)?;
    let workers = workers(args)?;
    let out = out_dir(args).map_err(|e| e.to_string())?;
    let task = cfg.task;

    let ckpt = out.join(format!("se_{}_seed{}.json", task.name(), args.seed));
    let setup = NesSetup {
        task,
        nes: cfg.nes.clone(),
        se_hidden: cfg.se_hidden.clone(),
        se_activation: cfg.se_activation,
        workers,
        consecutive_solved_to_stop: 3,
        checkpoint_path: Some(ckpt.clone()),
    };
    let mut evaluator = InnerLoopEvaluator::new(
        task,
        cfg.search_agent.clone(),
        seforge_core::agents::AgentConfig::defaults(AgentKind::Ddqn),
    );
    evaluator.hp_variation = cfg.hp_variation;
    evaluator.max_train_episodes = cfg.max_train_episodes;
    evaluator.acceptance_max_episodes = cfg.acceptance_eval_max_episodes;
    evaluator.stop = cfg.early_out;
    evaluator.n_test = cfg.test_episodes;

    let log_path = out.join(format!("train_se_{}_seed{}.jsonl", task.name(), args.seed));
    let mut log = fs::File::create(&log_path).map_err(|e| e.to_string())?;
    eprintln!(
        "searching {} SE: population {}, up to {} iterations, {} workers",
        task.name(),
        cfg.nes.population,
        cfg.nes.iterations,
        workers
    );
    let result = run_nes(&setup, &evaluator, args.seed, &mut |report| {
        let line = serde_json::to_string(report).expect("report serializes");
        writeln!(log, "{line}").expect("run log write");
        log.flush().ok();
        eprintln!(
            "gen {:>3}: mean_eval {:>8.2}  best member {:>8.2}  update norm {:.4}  ({} ms)",
            report.generation,
            report.mean_eval,
            report.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            report.update_norm,
            report.wall_ms
        );
    })
    .map_err(|e| e.to_string())?;

    result.best.save(&ckpt).map_err(|e| e.to_string())?;
    println!(
        "best SE from iteration {} (acceptance eval {:.2}) -> {}",
        result.best.meta.nes_iteration,
        result.best.meta.eval_score,
        ckpt.display()
    );
    println!("run log: {}", log_path.display());
    Ok(ExitCode::SUCCESS)
}

fn load_se_for(args: &Args, cfg: &RunConfig) -> Result<SyntheticEnvSpec, String> {
    let path = args.se.as_ref().ok_or("--se <checkpoint> is required")?;
    SyntheticEnvSpec::load_for_task(path, cfg.task).map_err(|e| e.to_string())
}

fn se_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "se".into())
}

fn write_suite(out: &Path, prefix: &str, suite: &SuiteOutput) -> Result<(), String> {
    let evals = out.join(format!("{prefix}_evals.csv"));
    export::write_evals_csv(&evals, &suite.records).map_err(|e| e.to_string())?;
    let returns = out.join(format!("{prefix}_returns.csv"));
    export::write_returns_csv(&returns, &suite.records).map_err(|e| e.to_string())?;
    let summary = out.join(format!("{prefix}_summary.json"));
    export::write_summary_json(&summary, &suite.summary).map_err(|e| e.to_string())?;
    println!(
        "{prefix}: {} records, mean return {:.2} (std {:.2}), mean episodes {:.1}, mean train steps {:.0}",
        suite.summary.n_records,
        suite.summary.return_mean,
        suite.summary.return_std,
        suite.summary.mean_episodes,
        suite.summary.mean_env_steps
    );
    println!("wrote {}, {}, {}", evals.display(), returns.display(), summary.display());
    Ok(())
}

fn cmd_eval_se(args: &Args) -> Result<ExitCode, String> {
    let cfg = load_config(args)?;
    let spec = load_se_for(args, &cfg)?;
    let kind = agent_kind(args, AgentKind::Ddqn)?;
    let n_agents = args.n_agents.unwrap_or(10);
    let workers = workers(args)?;
    let out = out_dir(args).map_err(|e| e.to_string())?;
    let id = se_stem(args.se.as_ref().expect("checked by load_se_for"));

    let suite = suite_robustness(
        &[(id.clone(), spec)],
        kind,
        cfg.task,
        n_agents,
        HpMode::Defaults,
        args.max_episodes.unwrap_or(1000),
        args.seed,
        workers,
    )?;
    for r in &suite.records {
        println!(
            "agent {:>2}: mean return {:>8.2}  episodes {:>4}  train steps {:>7}",
            r.record_index, r.mean_return, r.episodes_used, r.env_steps_used
        );
    }
    write_suite(&out, &format!("eval_{id}"), &suite)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_baseline(args: &Args) -> Result<ExitCode, String> {
    let cfg = load_config(args)?;
    let kind = agent_kind(args, AgentKind::Ddqn)?;
    let n_agents = args.n_agents.unwrap_or(400);
    let workers = workers(args)?;
    let out = out_dir(args).map_err(|e| e.to_string())?;
    let suite = suite_baseline(
        kind,
        cfg.task,
        n_agents,
        HpMode::Sampled,
        args.max_episodes.unwrap_or(1000),
        args.seed,
        workers,
    )?;
    write_suite(&out, &format!("baseline_{}_{}", cfg.task.name(), kind.name()), &suite)?;
    Ok(ExitCode::SUCCESS)
}

fn collect_se_set(
    args: &Args,
    cfg: &RunConfig,
) -> Result<Vec<(String, SyntheticEnvSpec)>, String> {
    let dir = args.se_dir.as_ref().ok_or("--se-dir <dir> is required")?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    if let Some(cap) = args.n_se {
        paths.truncate(cap);
    }
    let mut set = Vec::with_capacity(paths.len());
    for path in &paths {
        let spec = SyntheticEnvSpec::load_for_task(path, cfg.task).map_err(|e| e.to_string())?;
        set.push((se_stem(path), spec));
    }
    if set.is_empty() {
        return Err(format!("no SE checkpoints found in {}", dir.display()));
    }
    Ok(set)
}

fn cmd_robustness(args: &Args, transfer: bool) -> Result<ExitCode, String> {
    let cfg = load_config(args)?;
    let default_kind = if transfer { AgentKind::DuelingDdqn } else { AgentKind::Ddqn };
    let kind = agent_kind(args, default_kind)?;
    let n_agents = args.n_agents.unwrap_or(10);
    let workers = workers(args)?;
    let out = out_dir(args).map_err(|e| e.to_string())?;
    let set = collect_se_set(args, &cfg)?;
    let suite = suite_robustness(
        &set,
        kind,
        cfg.task,
        n_agents,
        HpMode::Sampled,
        args.max_episodes.unwrap_or(1000),
        args.seed,
        workers,
    )?;
    let label = if transfer { "transfer" } else { "robustness" };
    write_suite(&out, &format!("{label}_{}_{}", cfg.task.name(), kind.name()), &suite)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_histograms(args: &Args) -> Result<ExitCode, String> {
    let cfg = load_config(args)?;
    let spec = load_se_for(args, &cfg)?;
    let n_agents = args.n_agents.unwrap_or(10);
    let workers = workers(args)?;
    let out = out_dir(args).map_err(|e| e.to_string())?;
    let study =
        suite_histograms(&spec, cfg.task, n_agents, args.max_episodes.unwrap_or(1000), args.seed, workers)?;
    println!(
        "tuples: {} synthetic training, {} real test, {} SE replay",
        study.n_tuples[0], study.n_tuples[1], study.n_tuples[2]
    );
    let written = export::write_histogram_study(&out, &study).map_err(|e| e.to_string())?;
    for path in written {
        println!("wrote {path}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify() -> ExitCode {
    let results = verify::run_all();
    let mut all_passed = true;
    for check in &results {
        println!("{}", check.line());
        all_passed &= check.passed;
    }
    if all_passed {
        println!("verification passed ({} checks)", results.len());
        ExitCode::SUCCESS
    } else {
        println!("verification FAILED");
        ExitCode::from(3)
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if argv.is_empty() {
        return fail_usage("missing command");
    }
    if argv[0] == "--help" || argv[0] == "-h" || argv[0] == "help" {
        println!("{USAGE}");
        return ExitCode::SUCCESS;
    }
    let args = match parse_args(&argv) {
        Ok(args) => args,
        Err(msg) => return fail_usage(&msg),
    };
    let result = match args.command.as_str() {
        "train-se" => cmd_train_se(&args),
        "eval-se" => cmd_eval_se(&args),
        "baseline" => cmd_baseline(&args),
        "robustness" => cmd_robustness(&args, false),
        "transfer" => cmd_robustness(&args, true),
        "histograms" => cmd_histograms(&args),
        "verify" => return cmd_verify(),
        other => return fail_usage(&format!("unknown command '{other}'")),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

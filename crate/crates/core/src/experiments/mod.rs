//! The experiment suites: robustness/transfer studies on sets of learned
//! synthetic environments, the real-environment baseline, and the
//! distribution-shift histogram study.

pub mod export;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agents::{build_agent, AgentConfig, AgentKind, Transition};
use crate::env::Task;
use crate::hp::{HpSampler, SampledHps};
use crate::seed;
use crate::synth::{SyntheticEnv, SyntheticEnvSpec};
use crate::train::{
    evaluate_agent_logged, train_agent, StopHeuristic, TrainOptions, DEFAULT_TEST_EPISODES,
};

/// Outcome of training one agent configuration and testing it on the real
/// task for ten episodes.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    /// Which SE the agent trained on, or "real" for the baseline.
    pub se_id: String,
    pub record_index: usize,
    pub agent_kind: AgentKind,
    pub hps: SampledHps,
    pub returns: Vec<f64>,
    pub mean_return: f64,
    pub episodes_used: usize,
    pub env_steps_used: u64,
    pub eval_steps_used: u64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SuiteSummary {
    pub schema_version: u32,
    pub task: String,
    pub agent_kind: String,
    pub n_records: usize,
    pub n_returns: usize,
    /// Mean and standard deviation over every individual test return.
    pub return_mean: f64,
    pub return_std: f64,
    pub mean_episodes: f64,
    pub mean_env_steps: f64,
    pub mean_eval_steps: f64,
}

#[derive(Debug)]
pub struct SuiteOutput {
    pub records: Vec<EvalRecord>,
    pub summary: SuiteSummary,
}

fn summarize(task: Task, agent_kind: AgentKind, records: &[EvalRecord]) -> SuiteSummary {
    let all_returns: Vec<f64> = records.iter().flat_map(|r| r.returns.iter().copied()).collect();
    let n = all_returns.len().max(1) as f64;
    let mean = all_returns.iter().sum::<f64>() / n;
    let var = all_returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let nr = records.len().max(1) as f64;
    SuiteSummary {
        schema_version: 1,
        task: task.name().to_string(),
        agent_kind: agent_kind.name().to_string(),
        n_records: records.len(),
        n_returns: all_returns.len(),
        return_mean: mean,
        return_std: var.sqrt(),
        mean_episodes: records.iter().map(|r| r.episodes_used as f64).sum::<f64>() / nr,
        mean_env_steps: records.iter().map(|r| r.env_steps_used as f64).sum::<f64>() / nr,
        mean_eval_steps: records.iter().map(|r| r.eval_steps_used as f64).sum::<f64>() / nr,
    }
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

/// Whether suite agents draw the varied hyperparameter subset or keep the
/// defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpMode {
    Sampled,
    Defaults,
}

fn train_and_record(
    se: Option<(&str, &SyntheticEnvSpec)>,
    record_index: usize,
    agent_kind: AgentKind,
    task: Task,
    hp_mode: HpMode,
    max_episodes: usize,
    run_seed: u64,
    pair_seed: u64,
) -> Result<EvalRecord, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(&[run_seed, pair_seed]));
    let base = AgentConfig::defaults(agent_kind);
    let cfg = match hp_mode {
        HpMode::Sampled => HpSampler::default().apply(&base, &mut rng),
        HpMode::Defaults => base,
    };
    let hps = SampledHps {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        hidden_size: cfg.hidden_size,
        hidden_layers: cfg.hidden_layers,
    };
    let agent_seed = rng.next_u64();
    let mut agent = build_agent(agent_kind, &cfg, &task.spec(), agent_seed);

    let mut env: Box<dyn crate::env::Environment> = match se {
        Some((_, spec)) => Box::new(SyntheticEnv::new(spec.clone()).map_err(|e| e.to_string())?),
        None => task.make_env(),
    };
    let opts = TrainOptions {
        max_episodes,
        stop: Some(StopHeuristic::default()),
        log_transitions: false,
    };
    let report = train_agent(agent.as_mut(), env.as_mut(), &opts, &mut rng)
        .map_err(|e| e.to_string())?;

    let mut real = task.make_env();
    let eval = evaluate_agent_logged(
        agent.as_ref(),
        real.as_mut(),
        DEFAULT_TEST_EPISODES,
        &mut rng,
        None,
    )
    .map_err(|e| e.to_string())?;

    Ok(EvalRecord {
        se_id: se.map(|(id, _)| id.to_string()).unwrap_or_else(|| "real".to_string()),
        record_index,
        agent_kind,
        hps,
        mean_return: eval.mean,
        returns: eval.returns,
        episodes_used: report.episodes_used,
        env_steps_used: report.env_steps_used,
        eval_steps_used: report.eval_steps_used + eval.steps,
    })
}

/// Train `n_agents` hyperparameter-sampled agents on every SE in the set and
/// evaluate each on the real task. The transfer study is this suite with a
/// different agent kind substituted.
pub fn suite_robustness(
    se_set: &[(String, SyntheticEnvSpec)],
    agent_kind: AgentKind,
    task: Task,
    n_agents: usize,
    hp_mode: HpMode,
    max_episodes: usize,
    run_seed: u64,
    workers: usize,
) -> Result<SuiteOutput, String> {
    let pool = thread_pool(workers);
    let records: Result<Vec<EvalRecord>, String> = pool.install(|| {
        (0..se_set.len() * n_agents)
            .into_par_iter()
            .map(|idx| {
                let se_idx = idx / n_agents;
                let (id, spec) = &se_set[se_idx];
                let pair_seed = seed::mix(&[se_idx as u64, (idx % n_agents) as u64]);
                train_and_record(
                    Some((id.as_str(), spec)),
                    idx,
                    agent_kind,
                    task,
                    hp_mode,
                    max_episodes,
                    run_seed,
                    pair_seed,
                )
            })
            .collect()
    });
    let records = records?;
    let summary = summarize(task, agent_kind, &records);
    Ok(SuiteOutput { records, summary })
}

/// The no-SE control: hyperparameter-sampled agents trained directly on the
/// real environment with the solved-reward stop rule.
pub fn suite_baseline(
    agent_kind: AgentKind,
    task: Task,
    n_agents: usize,
    hp_mode: HpMode,
    max_episodes: usize,
    run_seed: u64,
    workers: usize,
) -> Result<SuiteOutput, String> {
    let pool = thread_pool(workers);
    let records: Result<Vec<EvalRecord>, String> = pool.install(|| {
        (0..n_agents)
            .into_par_iter()
            .map(|idx| {
                let pair_seed = seed::mix(&[u64::MAX, idx as u64]);
                train_and_record(
                    None,
                    idx,
                    agent_kind,
                    task,
                    hp_mode,
                    max_episodes,
                    run_seed,
                    pair_seed,
                )
            })
            .collect()
    });
    let records = records?;
    let summary = summarize(task, agent_kind, &records);
    Ok(SuiteOutput { records, summary })
}

/// Which environment produced a logged tuple.
pub const SERIES_SYNTHETIC_TRAINING: usize = 0; // agent training on the SE
pub const SERIES_REAL_TEST: usize = 1; // trained agent tested on the real env
pub const SERIES_SE_REPLAY: usize = 2; // real (s, a) pairs replayed through the SE

/// Binned next-state / reward distributions from the three tuple sources.
#[derive(Debug, Clone)]
pub struct HistogramSeries {
    /// "s0".."s{n-1}" or "reward".
    pub dim_name: String,
    /// 51 edges delimiting 50 uniform bins over the pooled range.
    pub bin_edges: Vec<f64>,
    /// Counts per source: [synthetic training, real test, SE replay].
    pub counts: [Vec<u64>; 3],
}

impl HistogramSeries {
    pub fn occupied_bins(&self, series: usize) -> usize {
        self.counts[series].iter().filter(|c| **c > 0).count()
    }

    /// 1-Wasserstein distance between two normalized binned distributions.
    pub fn wasserstein(&self, a: usize, b: usize) -> f64 {
        let total_a: f64 = self.counts[a].iter().sum::<u64>() as f64;
        let total_b: f64 = self.counts[b].iter().sum::<u64>() as f64;
        let bin_width = self.bin_edges[1] - self.bin_edges[0];
        let mut cdf_a = 0.0;
        let mut cdf_b = 0.0;
        let mut dist = 0.0;
        for i in 0..self.counts[a].len() {
            cdf_a += self.counts[a][i] as f64 / total_a;
            cdf_b += self.counts[b][i] as f64 / total_b;
            dist += (cdf_a - cdf_b).abs() * bin_width;
        }
        dist
    }
}

#[derive(Debug)]
pub struct HistogramStudy {
    pub task: Task,
    pub series: Vec<HistogramSeries>,
    pub n_tuples: [usize; 3],
}

pub const HISTOGRAM_BINS: usize = 50;

fn bin_values(dim_name: &str, sets: [&[f64]; 3]) -> HistogramSeries {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for set in &sets {
        for v in *set {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi <= lo {
        // degenerate pooled range: widen symmetrically so everything lands
        // in one interior bin
        hi = lo + 1.0;
        lo -= 1.0;
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| lo + i as f64 * width).collect();
    let mut counts = [vec![0u64; HISTOGRAM_BINS], vec![0u64; HISTOGRAM_BINS], vec![0u64; HISTOGRAM_BINS]];
    for (set_idx, set) in sets.iter().enumerate() {
        for v in *set {
            let mut bin = ((v - lo) / width) as usize;
            if bin >= HISTOGRAM_BINS {
                bin = HISTOGRAM_BINS - 1;
            }
            counts[set_idx][bin] += 1;
        }
    }
    HistogramSeries { dim_name: dim_name.to_string(), bin_edges: edges, counts }
}

/// Train `n_agents` default-hyperparameter DDQN agents on one SE, logging
/// every training tuple; test each for ten real episodes, logging those
/// tuples; replay the real (s, a) pairs through the SE. Bin the next-state
/// dimensions and the reward of all three tuple sets over pooled ranges.
pub fn suite_histograms(
    se: &SyntheticEnvSpec,
    task: Task,
    n_agents: usize,
    max_episodes: usize,
    run_seed: u64,
    workers: usize,
) -> Result<HistogramStudy, String> {
    let pool = thread_pool(workers);
    let per_agent: Result<Vec<(Vec<Transition>, Vec<Transition>)>, String> = pool.install(|| {
        (0..n_agents)
            .into_par_iter()
            .map(|idx| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed::mix(&[run_seed, 0x4157, idx as u64]));
                let cfg = AgentConfig::defaults(AgentKind::Ddqn);
                let agent_seed = rng.next_u64();
                let mut agent = build_agent(AgentKind::Ddqn, &cfg, &task.spec(), agent_seed);
                let mut env =
                    SyntheticEnv::new(se.clone()).map_err(|e| e.to_string())?;
                let opts = TrainOptions {
                    max_episodes,
                    stop: Some(StopHeuristic::default()),
                    log_transitions: true,
                };
                let report = train_agent(agent.as_mut(), &mut env, &opts, &mut rng)
                    .map_err(|e| e.to_string())?;

                let mut real = task.make_env();
                let mut test_log = Vec::new();
                evaluate_agent_logged(
                    agent.as_ref(),
                    real.as_mut(),
                    DEFAULT_TEST_EPISODES,
                    &mut rng,
                    Some(&mut test_log),
                )
                .map_err(|e| e.to_string())?;
                Ok((report.transitions, test_log))
            })
            .collect()
    });
    let per_agent = per_agent?;

    let mut synthetic: Vec<Transition> = Vec::new();
    let mut real_test: Vec<Transition> = Vec::new();
    for (train_log, test_log) in per_agent {
        synthetic.extend(train_log);
        real_test.extend(test_log);
    }

    // Replay the exact real (s, a) pairs through the SE.
    let replayed: Result<Vec<(Vec<f64>, f64)>, String> = real_test
        .iter()
        .map(|t| se.se_step(&t.state, t.action).map_err(|e| e.to_string()))
        .collect();
    let replayed = replayed?;

    let obs_dim = task.spec().obs_dim;
    let mut series = Vec::with_capacity(obs_dim + 1);
    for d in 0..obs_dim {
        let blue: Vec<f64> = synthetic.iter().map(|t| t.next_state[d]).collect();
        let orange: Vec<f64> = real_test.iter().map(|t| t.next_state[d]).collect();
        let green: Vec<f64> = replayed.iter().map(|(s, _)| s[d]).collect();
        series.push(bin_values(&format!("s{d}"), [&blue, &orange, &green]));
    }
    let blue: Vec<f64> = synthetic.iter().map(|t| t.reward).collect();
    let orange: Vec<f64> = real_test.iter().map(|t| t.reward).collect();
    let green: Vec<f64> = replayed.iter().map(|(_, r)| *r).collect();
    series.push(bin_values("reward", [&blue, &orange, &green]));

    Ok(HistogramStudy {
        task,
        series,
        n_tuples: [synthetic.len(), real_test.len(), replayed.len()],
    })
}

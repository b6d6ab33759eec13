//! The outer evolution loop: population sampling, score transformation,
//! parameter updates, and deterministic parallel member evaluation.

mod transform;

pub use transform::{registry as transform_registry, ScoreTransform, TransformKind};

use std::fmt;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{build_agent, AgentConfig};
use crate::env::{EnvError, Task};
use crate::hp::HpSampler;
use crate::mlp::{perturb, Activation, FlatParams, MlpError};
use crate::seed;
use crate::synth::{se_architecture, SeMeta, SynthError, SyntheticEnv, SyntheticEnvSpec};
use crate::train::{evaluate_agent, train_agent, StopHeuristic, TrainOptions, DEFAULT_TEST_EPISODES};

// Stream tags keeping the independent RNG streams of a run apart.
const INIT_STREAM: u64 = 0xA11CE;
const NOISE_STREAM: u64 = 0x4015E;
const MEAN_STREAM: u64 = 0x3EA7;

#[derive(Debug)]
pub enum NesError {
    BadConfig(String),
    Dim(MlpError),
    Synth(SynthError),
    Env(EnvError),
    /// Every member of a generation failed; there is no score floor to fall
    /// back to.
    AllMembersFailed { generation: usize },
    MeanEvalFailed { generation: usize, message: String },
}

impl fmt::Display for NesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NesError::BadConfig(msg) => write!(f, "bad NES config: {msg}"),
            NesError::Dim(e) => write!(f, "{e}"),
            NesError::Synth(e) => write!(f, "{e}"),
            NesError::Env(e) => write!(f, "{e}"),
            NesError::AllMembersFailed { generation } => {
                write!(f, "all population members failed in generation {generation}")
            }
            NesError::MeanEvalFailed { generation, message } => {
                write!(f, "mean evaluation failed in generation {generation}: {message}")
            }
        }
    }
}

impl std::error::Error for NesError {}

impl From<MlpError> for NesError {
    fn from(e: MlpError) -> Self {
        NesError::Dim(e)
    }
}

impl From<SynthError> for NesError {
    fn from(e: SynthError) -> Self {
        NesError::Synth(e)
    }
}

impl From<EnvError> for NesError {
    fn from(e: EnvError) -> Self {
        NesError::Env(e)
    }
}

/// Outer-loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NesConfig {
    /// Step size alpha.
    pub step_size: f64,
    /// Perturbation standard deviation sigma.
    pub sigma: f64,
    /// Population size n_p.
    pub population: usize,
    /// Outer-loop iteration budget n_o.
    pub iterations: usize,
    pub mirrored: bool,
    pub transform: TransformKind,
}

impl NesConfig {
    pub fn validate(&self) -> Result<(), NesError> {
        if self.step_size <= 0.0 || self.sigma <= 0.0 {
            return Err(NesError::BadConfig("step size and sigma must be positive".into()));
        }
        if self.population < 2 {
            return Err(NesError::BadConfig("population must be at least 2".into()));
        }
        if self.mirrored && self.population % 2 != 0 {
            return Err(NesError::BadConfig("mirrored sampling needs an even population".into()));
        }
        if self.iterations == 0 {
            return Err(NesError::BadConfig("need at least one iteration".into()));
        }
        Ok(())
    }
}

/// Draw the population's perturbation directions: standard-normal vectors,
/// unscaled (sigma is applied at perturbation and update time). Mirrored
/// sampling stores the fresh draws in the first half and their negations in
/// the second, so `noises[i + n/2] == -noises[i]`.
pub fn sample_noises(
    dim: usize,
    cfg: &NesConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<FlatParams>, NesError> {
    cfg.validate()?;
    let fresh = if cfg.mirrored { cfg.population / 2 } else { cfg.population };
    let mut out: Vec<FlatParams> = Vec::with_capacity(cfg.population);
    for _ in 0..fresh {
        let values: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        out.push(FlatParams::new(values));
    }
    if cfg.mirrored {
        for i in 0..cfg.population / 2 {
            let neg: Vec<f64> = out[i].as_slice().iter().map(|v| -v).collect();
            out.push(FlatParams::new(neg));
        }
    }
    Ok(out)
}

/// Weighted-sum parameter update:
/// `psi' = psi + alpha / (n_p * sigma) * sum_i w_i * eps_i`.
/// Members are accumulated in index order so parallel and serial runs agree
/// bit for bit; zero-weight members are skipped outright, leaving psi
/// untouched when every weight is zero.
pub fn update_se(
    psi: &FlatParams,
    noises: &[FlatParams],
    weights: &[f64],
    cfg: &NesConfig,
) -> Result<FlatParams, NesError> {
    if noises.len() != weights.len() {
        return Err(NesError::BadConfig(format!(
            "{} noises but {} weights",
            noises.len(),
            weights.len()
        )));
    }
    let scale = cfg.step_size / (noises.len() as f64 * cfg.sigma);
    let mut out = psi.clone();
    for (eps, w) in noises.iter().zip(weights) {
        if eps.len() != psi.len() {
            return Err(NesError::Dim(MlpError::LengthMismatch {
                expected: psi.len(),
                got: eps.len(),
            }));
        }
        if *w == 0.0 {
            continue;
        }
        let coeff = scale * w;
        for (o, e) in out.as_mut_slice().iter_mut().zip(eps.as_slice()) {
            *o += coeff * e;
        }
    }
    Ok(out)
}

/// Per-iteration record, one line of the run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    /// Raw member scores F_i.
    pub scores: Vec<f64>,
    /// Transformed update weights.
    pub transformed: Vec<f64>,
    pub update_norm: f64,
    /// Acceptance evaluation of the unperturbed mean parameters.
    pub mean_eval: f64,
    pub wall_ms: u64,
    /// Members whose evaluation failed and were scored at the population
    /// minimum.
    pub failed_members: Vec<usize>,
}

/// How one perturbed SE is scored. Implementations must be deterministic
/// functions of (spec, seed) for run reproducibility.
pub trait SeEvaluator: Sync {
    /// Train a fresh agent on the SE, then score it on the real task.
    fn evaluate_member(&self, spec: &SyntheticEnvSpec, seed: u64) -> Result<f64, String>;

    /// Acceptance evaluation of the unperturbed mean parameters (default
    /// hyperparameters, no variation).
    fn evaluate_mean(&self, spec: &SyntheticEnvSpec, seed: u64) -> Result<f64, String>;
}

/// The production evaluator: the full inner training loop plus greedy
/// evaluation on the real environment.
pub struct InnerLoopEvaluator {
    pub task: Task,
    /// Agent configuration used for population members.
    pub search_agent: AgentConfig,
    /// Agent configuration for the mean-parameter acceptance evaluation.
    pub default_agent: AgentConfig,
    /// Sample the varied hyperparameter subset per member.
    pub hp_variation: bool,
    pub sampler: HpSampler,
    pub max_train_episodes: usize,
    /// Episode cap for the acceptance evaluation. A synthetic environment
    /// worth accepting trains its agent well inside this budget; a lower cap
    /// only shortens the hopeless cases.
    pub acceptance_max_episodes: usize,
    pub stop: StopHeuristic,
    pub n_test: usize,
}

impl InnerLoopEvaluator {
    pub fn new(task: Task, search_agent: AgentConfig, default_agent: AgentConfig) -> Self {
        InnerLoopEvaluator {
            task,
            search_agent,
            default_agent,
            hp_variation: false,
            sampler: HpSampler::default(),
            max_train_episodes: 1000,
            acceptance_max_episodes: 1000,
            stop: StopHeuristic::default(),
            n_test: DEFAULT_TEST_EPISODES,
        }
    }

    fn train_and_score(
        &self,
        spec: &SyntheticEnvSpec,
        cfg: AgentConfig,
        max_episodes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, String> {
        let mut env = SyntheticEnv::new(spec.clone()).map_err(|e| e.to_string())?;
        let task_spec = self.task.spec();
        let agent_seed = rng.next_u64();
        let mut agent = build_agent(cfg.agent_kind, &cfg, &task_spec, agent_seed);
        let opts = TrainOptions {
            max_episodes,
            stop: Some(self.stop),
            log_transitions: false,
        };
        train_agent(agent.as_mut(), &mut env, &opts, rng).map_err(|e| e.to_string())?;
        let mut real = self.task.make_env();
        let eval = evaluate_agent(agent.as_ref(), real.as_mut(), self.n_test, rng)
            .map_err(|e| e.to_string())?;
        Ok(eval.mean)
    }
}

impl SeEvaluator for InnerLoopEvaluator {
    fn evaluate_member(&self, spec: &SyntheticEnvSpec, seed: u64) -> Result<f64, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = if self.hp_variation {
            self.sampler.apply(&self.search_agent, &mut rng)
        } else {
            self.search_agent.clone()
        };
        self.train_and_score(spec, cfg, self.max_train_episodes, &mut rng)
    }

    fn evaluate_mean(&self, spec: &SyntheticEnvSpec, seed: u64) -> Result<f64, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.train_and_score(
            spec,
            self.default_agent.clone(),
            self.acceptance_max_episodes,
            &mut rng,
        )
    }
}

/// Everything `run_nes` needs besides the evaluator.
#[derive(Debug, Clone)]
pub struct NesSetup {
    pub task: Task,
    pub nes: NesConfig,
    pub se_hidden: Vec<usize>,
    pub se_activation: Activation,
    pub workers: usize,
    /// Stop once the mean parameters' acceptance evaluation reaches the
    /// solved threshold this many generations in a row. 0 disables.
    pub consecutive_solved_to_stop: usize,
    /// Write the best-so-far checkpoint here whenever it improves, so long
    /// runs survive interruption.
    pub checkpoint_path: Option<std::path::PathBuf>,
}

#[derive(Debug)]
pub struct NesRunResult {
    /// The mean parameters with the best acceptance evaluation seen.
    pub best: SyntheticEnvSpec,
    pub reports: Vec<GenerationReport>,
    pub stopped_early: bool,
}

/// Run the full outer loop: perturb, train, score, transform, update.
///
/// Member i of generation g draws its RNG stream from
/// (run_seed, g, i), and scores are aggregated in member order, so any
/// worker count yields bit-identical parameter trajectories.
pub fn run_nes<E: SeEvaluator>(
    setup: &NesSetup,
    evaluator: &E,
    run_seed: u64,
    on_generation: &mut dyn FnMut(&GenerationReport),
) -> Result<NesRunResult, NesError> {
    let cfg = &setup.nes;
    cfg.validate()?;
    let task_spec = setup.task.spec();
    let arch = se_architecture(&task_spec, setup.se_hidden.clone(), setup.se_activation)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed::mix(&[run_seed, INIT_STREAM]));
    let psi0 = arch.init_params(&mut init_rng);
    let template = SyntheticEnvSpec::new(
        task_spec.clone(),
        arch,
        psi0,
        SeMeta { nes_iteration: 0, eval_score: 0.0, run_seed },
    )?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(setup.workers.clamp(1, cfg.population))
        .build()
        .map_err(|e| NesError::BadConfig(format!("thread pool: {e}")))?;

    let dim = template.params.len();
    let mut psi = template.params.clone();
    let mut reports: Vec<GenerationReport> = Vec::new();
    let mut best: Option<(f64, FlatParams, u64)> = None;
    let mut consecutive = 0usize;
    let mut stopped_early = false;

    // Generation g's acceptance evaluation scores the parameters produced by
    // g's update — the same parameters generation g+1 perturbs — so it runs
    // concurrently with g+1's member batch instead of serializing after it.
    // Seeds are fixed per (run, generation, role), so the overlap cannot
    // change any value, only the wall clock.
    struct PendingReport {
        generation: usize,
        scores: Vec<f64>,
        transformed: Vec<f64>,
        update_norm: f64,
        failed_members: Vec<usize>,
    }

    let mut pending: Option<PendingReport> = None;
    let mut stop_now = false;

    let mut finish_pending = |p: PendingReport,
                              mean_eval: f64,
                              wall_ms: u64,
                              psi: &FlatParams,
                              best: &mut Option<(f64, FlatParams, u64)>,
                              consecutive: &mut usize|
     -> bool {
        if best.as_ref().map_or(true, |(b, _, _)| mean_eval > *b) {
            *best = Some((mean_eval, psi.clone(), p.generation as u64));
            if let Some(path) = &setup.checkpoint_path {
                let snapshot = SyntheticEnvSpec::new(
                    task_spec.clone(),
                    template.arch.clone(),
                    psi.clone(),
                    SeMeta {
                        nes_iteration: p.generation as u64,
                        eval_score: mean_eval,
                        run_seed,
                    },
                );
                match snapshot {
                    Ok(spec) => {
                        if let Err(e) = spec.save(path) {
                            eprintln!("warning: checkpoint write failed: {e}");
                        }
                    }
                    Err(e) => eprintln!("warning: checkpoint snapshot failed: {e}"),
                }
            }
        }
        let report = GenerationReport {
            generation: p.generation,
            scores: p.scores,
            transformed: p.transformed,
            update_norm: p.update_norm,
            mean_eval,
            wall_ms,
            failed_members: p.failed_members,
        };
        on_generation(&report);
        reports.push(report);
        if mean_eval >= task_spec.solved_reward {
            *consecutive += 1;
        } else {
            *consecutive = 0;
        }
        setup.consecutive_solved_to_stop > 0
            && *consecutive >= setup.consecutive_solved_to_stop
    };

    for generation in 0..cfg.iterations {
        let started = Instant::now();
        let mut noise_rng =
            ChaCha8Rng::seed_from_u64(seed::mix(&[run_seed, generation as u64, NOISE_STREAM]));
        let noises = sample_noises(dim, cfg, &mut noise_rng)?;

        let psi_ref = &psi;
        let template_ref = &template;
        let pending_seed = pending
            .as_ref()
            .map(|p| seed::mix(&[run_seed, p.generation as u64, MEAN_STREAM]));
        let (outcomes, pending_mean): (Vec<Result<f64, String>>, Option<Result<f64, String>>) =
            pool.install(|| {
                rayon::join(
                    || {
                        noises
                            .par_iter()
                            .enumerate()
                            .map(|(i, eps)| {
                                let params = perturb(psi_ref, eps, cfg.sigma)
                                    .map_err(|e| e.to_string())?;
                                let spec = template_ref.with_params(params);
                                evaluator.evaluate_member(
                                    &spec,
                                    seed::member_seed(run_seed, generation as u64, i as u64),
                                )
                            })
                            .collect()
                    },
                    || {
                        pending_seed.map(|s| {
                            evaluator.evaluate_mean(&template_ref.with_params(psi_ref.clone()), s)
                        })
                    },
                )
            });

        if let Some(p) = pending.take() {
            let gen = p.generation;
            let mean_eval = pending_mean
                .expect("mean evaluation scheduled alongside members")
                .map_err(|e| NesError::MeanEvalFailed { generation: gen, message: e })?;
            let wall_ms = started.elapsed().as_millis() as u64;
            if finish_pending(p, mean_eval, wall_ms, &psi, &mut best, &mut consecutive) {
                stopped_early = true;
                stop_now = true;
            }
        }
        if stop_now {
            break;
        }

        let succeeded: Vec<f64> =
            outcomes.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        if succeeded.is_empty() {
            return Err(NesError::AllMembersFailed { generation });
        }
        let floor = succeeded.iter().cloned().fold(f64::INFINITY, f64::min);
        let failed_members: Vec<usize> = outcomes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_err())
            .map(|(i, _)| i)
            .collect();
        let scores: Vec<f64> = outcomes.into_iter().map(|r| r.unwrap_or(floor)).collect();

        let transformed = cfg.transform.strategy().transform(&scores);
        // The update consumes the perturbation vectors eps_i = sigma * n_i
        // (eps_i ~ N(0, sigma^2 I), member i trained on psi + eps_i), exactly
        // the values the members saw.
        let perturbations: Vec<FlatParams> = noises
            .iter()
            .map(|n| FlatParams::new(n.as_slice().iter().map(|v| cfg.sigma * v).collect()))
            .collect();
        let new_psi = update_se(&psi, &perturbations, &transformed, cfg)?;
        let update_norm = new_psi
            .as_slice()
            .iter()
            .zip(psi.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        psi = new_psi;

        pending = Some(PendingReport {
            generation,
            scores,
            transformed,
            update_norm,
            failed_members,
        });
    }

    // Drain the last generation's acceptance evaluation.
    if let Some(p) = pending.take() {
        let started = Instant::now();
        let gen = p.generation;
        let mean_eval = evaluator
            .evaluate_mean(
                &template.with_params(psi.clone()),
                seed::mix(&[run_seed, gen as u64, MEAN_STREAM]),
            )
            .map_err(|e| NesError::MeanEvalFailed { generation: gen, message: e })?;
        let wall_ms = started.elapsed().as_millis() as u64;
        if finish_pending(p, mean_eval, wall_ms, &psi, &mut best, &mut consecutive) {
            stopped_early = true;
        }
    }

    let (eval_score, params, nes_iteration) = best.expect("at least one generation ran");
    let best_spec = SyntheticEnvSpec::new(
        task_spec,
        template.arch.clone(),
        params,
        SeMeta { nes_iteration, eval_score, run_seed },
    )?;
    Ok(NesRunResult { best: best_spec, reports, stopped_early })
}

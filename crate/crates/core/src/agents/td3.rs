//! TD3 adapted to discrete action spaces.
//!
//! The actor produces logits over actions and is equipped with a
//! Gumbel-Softmax distribution with a learned temperature, which keeps the
//! executed action discrete while the critic input stays differentiable.
//! Twin critics take `concat(state, soft_action)` — soft probability
//! vectors, not one-hot encodings. The actor (and its temperature) update
//! every `policy_delay` critic steps by ascending the first critic.

use rand::{Rng, RngCore};

use super::{
    argmax, ActMode, Agent, AgentConfig, AgentError, AgentKind, ChosenAction, QNetworkPair,
    ReplayBuffer, Transition,
};
use crate::agents::Adam;
use crate::env::TaskSpec;
use crate::mlp::{GradientBuffer, MlpArchitecture};

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sample_gumbel(rng: &mut dyn RngCore) -> f64 {
    // u in (0, 1); clamp away from both endpoints to keep logs finite.
    let u: f64 = rng.gen::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    -(-u.ln()).ln()
}

/// Draw a Gumbel-Softmax sample over `logits`: a probability vector whose
/// argmax follows the softmax distribution as the temperature goes to zero.
pub fn gumbel_softmax(
    logits: &[f64],
    temperature: f64,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>, AgentError> {
    if temperature <= 0.0 {
        return Err(AgentError::InvalidTemperature(temperature));
    }
    let z: Vec<f64> = logits.iter().map(|l| (l + sample_gumbel(rng)) / temperature).collect();
    Ok(softmax(&z))
}

/// Backward through `soft = softmax((logits + g) / T)` given `d_soft`.
/// Returns (d_logits, dT). `z` are the tempered pre-softmax values.
fn gumbel_soft_backward(soft: &[f64], z: &[f64], temperature: f64, d_soft: &[f64]) -> (Vec<f64>, f64) {
    let inner: f64 = d_soft.iter().zip(soft.iter()).map(|(d, y)| d * y).sum();
    let dz: Vec<f64> = soft.iter().zip(d_soft.iter()).map(|(y, d)| y * (d - inner)).collect();
    let d_logits: Vec<f64> = dz.iter().map(|v| v / temperature).collect();
    let d_temp: f64 = dz.iter().zip(z.iter()).map(|(dzi, zi)| dzi * (-zi / temperature)).sum();
    (d_logits, d_temp)
}

#[derive(Debug, Clone)]
struct Td3Transition {
    state: Vec<f64>,
    soft: Vec<f64>,
    reward: f64,
    next_state: Vec<f64>,
    terminal: bool,
}

pub struct Td3Agent {
    cfg: AgentConfig,
    obs_dim: usize,
    n_actions: usize,
    actor: QNetworkPair,
    /// Temperature is learned in log space so it stays positive.
    log_temp: f64,
    log_temp_target: f64,
    critic1: QNetworkPair,
    critic2: QNetworkPair,
    adam_actor: Adam,
    adam_temp: Adam,
    adam_c1: Adam,
    adam_c2: Adam,
    buffer: ReplayBuffer<Td3Transition>,
    grads_actor: GradientBuffer,
    grads_c1: GradientBuffer,
    grads_c2: GradientBuffer,
    critic_scratch: GradientBuffer,
    critic_steps: u64,
    collecting: bool,
}

impl Td3Agent {
    pub fn new(cfg: AgentConfig, task: &TaskSpec, rng: &mut dyn RngCore) -> Td3Agent {
        cfg.validate().expect("agent config");
        let actor_arch =
            MlpArchitecture::new(task.obs_dim, cfg.hidden_sizes(), task.n_actions, cfg.activation)
                .expect("actor architecture");
        let critic_arch = MlpArchitecture::new(
            task.obs_dim + task.n_actions,
            cfg.hidden_sizes(),
            1,
            cfg.activation,
        )
        .expect("critic architecture");
        let actor = QNetworkPair::new(actor_arch, rng);
        let critic1 = QNetworkPair::new(critic_arch.clone(), rng);
        let critic2 = QNetworkPair::new(critic_arch, rng);
        let log_temp = cfg.gumbel_start_temperature.ln();
        Td3Agent {
            obs_dim: task.obs_dim,
            n_actions: task.n_actions,
            adam_actor: Adam::new(cfg.learning_rate, actor.online.len()),
            adam_temp: Adam::new(cfg.learning_rate, 1),
            adam_c1: Adam::new(cfg.learning_rate, critic1.online.len()),
            adam_c2: Adam::new(cfg.learning_rate, critic2.online.len()),
            grads_actor: GradientBuffer::for_arch(&actor.arch),
            grads_c1: GradientBuffer::for_arch(&critic1.arch),
            grads_c2: GradientBuffer::for_arch(&critic2.arch),
            critic_scratch: GradientBuffer::for_arch(&critic1.arch),
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            log_temp,
            log_temp_target: log_temp,
            critic_steps: 0,
            collecting: cfg.initial_episodes > 0,
            actor,
            critic1,
            critic2,
            cfg,
        }
    }

    fn temperature(&self) -> f64 {
        self.log_temp.exp()
    }

    fn critic_input(&self, state: &[f64], soft: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.obs_dim + self.n_actions);
        input.extend_from_slice(state);
        input.extend_from_slice(soft);
        input
    }

    fn q_value(&self, pair: &QNetworkPair, online: bool, input: &[f64]) -> f64 {
        let params = if online { &pair.online } else { &pair.target };
        pair.arch.forward(params, input).expect("critic forward")[0]
    }

    /// Clipped double-Q target from the target actor's soft action.
    fn td_target(&self, t: &Td3Transition, rng: &mut dyn RngCore) -> f64 {
        if t.terminal {
            return t.reward;
        }
        let logits =
            self.actor.arch.forward(&self.actor.target, &t.next_state).expect("actor forward");
        let soft = gumbel_softmax(&logits, self.log_temp_target.exp(), rng).expect("target action");
        let input = self.critic_input(&t.next_state, &soft);
        let q1 = self.q_value(&self.critic1, false, &input);
        let q2 = self.q_value(&self.critic2, false, &input);
        t.reward + self.cfg.discount * q1.min(q2)
    }

    /// Gradients of `scale * Q1(s, soft(actor(s), gumbels))` with respect to
    /// the actor parameters (accumulated into `grads`) and the
    /// log-temperature (returned). Also returns the Q value itself.
    fn actor_backward_single(
        &mut self,
        state: &[f64],
        gumbels: &[f64],
        scale: f64,
    ) -> (f64, f64) {
        let temp = self.temperature();
        let trace_a =
            self.actor.arch.forward_traced(&self.actor.online, state).expect("actor forward");
        let logits = trace_a.output().to_vec();
        let z: Vec<f64> = logits.iter().zip(gumbels.iter()).map(|(l, g)| (l + g) / temp).collect();
        let soft = softmax(&z);
        let input = self.critic_input(state, &soft);
        let trace_q = self
            .critic1
            .arch
            .forward_traced(&self.critic1.online, &input)
            .expect("critic forward");
        let q = trace_q.output()[0];

        self.critic_scratch.zero();
        let d_input = self
            .critic1
            .arch
            .backward(&self.critic1.online, &trace_q, &[scale], &mut self.critic_scratch)
            .expect("critic backward");
        let d_soft = &d_input[self.obs_dim..];
        let (d_logits, d_temp) = gumbel_soft_backward(&soft, &z, temp, d_soft);
        self.actor
            .arch
            .backward(&self.actor.online, &trace_a, &d_logits, &mut self.grads_actor)
            .expect("actor backward");
        // chain through T = exp(log_temp)
        (q, d_temp * temp)
    }
}

impl Agent for Td3Agent {
    fn kind(&self) -> AgentKind {
        AgentKind::DiscreteTd3
    }

    fn act(&self, obs: &[f64], mode: ActMode, rng: &mut dyn RngCore) -> ChosenAction {
        match mode {
            ActMode::Explore => {
                // While collecting, zero logits make the argmax of the Gumbel
                // sample uniform over actions.
                let logits = if self.collecting {
                    vec![0.0; self.n_actions]
                } else {
                    self.actor.arch.forward(&self.actor.online, obs).expect("actor forward")
                };
                let soft = gumbel_softmax(&logits, self.temperature(), rng).expect("sample");
                ChosenAction { action: argmax(&soft), soft: Some(soft) }
            }
            ActMode::Greedy => {
                let logits =
                    self.actor.arch.forward(&self.actor.online, obs).expect("actor forward");
                let tempered: Vec<f64> = logits.iter().map(|l| l / self.temperature()).collect();
                ChosenAction { action: argmax(&logits), soft: Some(softmax(&tempered)) }
            }
        }
    }

    fn observe(&mut self, transition: Transition, chosen: &ChosenAction) {
        let soft = chosen
            .soft
            .clone()
            .expect("TD3 transitions need the soft action recorded at act() time");
        self.buffer.push(Td3Transition {
            state: transition.state,
            soft,
            reward: transition.reward,
            next_state: transition.next_state,
            terminal: transition.terminal,
        });
    }

    fn train_step(&mut self, rng: &mut dyn RngCore) -> Option<f64> {
        if self.collecting || self.buffer.len() < self.cfg.batch_size {
            return None;
        }
        let batch = self.cfg.batch_size;

        self.grads_c1.zero();
        self.grads_c2.zero();
        let mut loss = 0.0;
        for _ in 0..batch {
            let t = self.buffer.sample(rng).clone();
            let y = self.td_target(&t, rng);
            let input = self.critic_input(&t.state, &t.soft);
            for (pair, grads) in [
                (&self.critic1, &mut self.grads_c1),
                (&self.critic2, &mut self.grads_c2),
            ] {
                let trace = pair.arch.forward_traced(&pair.online, &input).expect("forward");
                let diff = trace.output()[0] - y;
                loss += diff * diff;
                let upstream = [2.0 * diff / batch as f64];
                pair.arch.backward(&pair.online, &trace, &upstream, grads).expect("backward");
            }
        }
        self.adam_c1.step(&mut self.critic1.online, &self.grads_c1);
        self.adam_c2.step(&mut self.critic2.online, &self.grads_c2);
        self.critic_steps += 1;

        if self.critic_steps % self.cfg.policy_delay as u64 == 0 {
            self.grads_actor.zero();
            let mut d_log_temp = 0.0;
            let scale = -1.0 / batch as f64; // ascend Q by descending -Q
            for _ in 0..batch {
                let state = self.buffer.sample(rng).state.clone();
                let gumbels: Vec<f64> = (0..self.n_actions).map(|_| sample_gumbel(rng)).collect();
                let (_, dlt) = self.actor_backward_single(&state, &gumbels, scale);
                d_log_temp += dlt;
            }
            self.adam_actor.step(&mut self.actor.online, &self.grads_actor);
            self.adam_temp.step_scalar(&mut self.log_temp, d_log_temp);

            let tau = self.cfg.target_update_rate;
            self.actor.soft_update(tau);
            self.critic1.soft_update(tau);
            self.critic2.soft_update(tau);
            self.log_temp_target = (1.0 - tau) * self.log_temp_target + tau * self.log_temp;
        }

        Some(loss / (2.0 * batch as f64))
    }

    fn begin_episode(&mut self, episode_index: usize) {
        self.collecting = episode_index < self.cfg.initial_episodes;
    }
}

//! Double DQN with optional dueling value/advantage streams.
//!
//! The TD target decouples selection from evaluation:
//! `y = r + gamma * (1 - terminal) * Q_target(s', argmax_a Q_online(s', a))`.
//! The dueling variant shares the hidden trunk and splits the final layer
//! into a scalar value output and one advantage output per action.

use rand::{Rng, RngCore};

use super::{
    argmax, epsilon_schedule, uniform_action, ActMode, Agent, AgentConfig, AgentKind,
    ChosenAction, QNetworkPair, ReplayBuffer, Transition,
};
use crate::env::TaskSpec;
use crate::mlp::{FlatParams, GradientBuffer, MlpArchitecture};
use crate::agents::Adam;

/// Mean-subtracted dueling aggregation: `Q_a = V + A_a - mean(A)`.
pub fn aggregate_dueling(value: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + a - mean).collect()
}

pub struct DqnAgent {
    cfg: AgentConfig,
    dueling: bool,
    n_actions: usize,
    net: QNetworkPair,
    adam: Adam,
    buffer: ReplayBuffer<Transition>,
    grads: GradientBuffer,
    eps: f64,
    collecting: bool,
}

impl DqnAgent {
    pub fn new(cfg: AgentConfig, task: &TaskSpec, dueling: bool, rng: &mut dyn RngCore) -> DqnAgent {
        cfg.validate().expect("agent config");
        let out_dim = if dueling { task.n_actions + 1 } else { task.n_actions };
        let arch = MlpArchitecture::new(task.obs_dim, cfg.hidden_sizes(), out_dim, cfg.activation)
            .expect("agent architecture");
        let net = QNetworkPair::new(arch, rng);
        let adam = Adam::new(cfg.learning_rate, net.online.len());
        let grads = GradientBuffer::for_arch(&net.arch);
        let buffer = ReplayBuffer::new(cfg.replay_capacity);
        let eps = cfg.eps_init;
        let collecting = cfg.initial_episodes > 0;
        DqnAgent { cfg, dueling, n_actions: task.n_actions, net, adam, buffer, grads, eps, collecting }
    }

    fn q_values(&self, params: &FlatParams, obs: &[f64]) -> Vec<f64> {
        let raw = self.net.arch.forward(params, obs).expect("q forward");
        if self.dueling {
            aggregate_dueling(raw[0], &raw[1..])
        } else {
            raw
        }
    }

    /// Map an upstream gradient on Q back onto the raw network outputs.
    fn head_upstream(&self, d_q: &[f64]) -> Vec<f64> {
        if !self.dueling {
            return d_q.to_vec();
        }
        let n = self.n_actions as f64;
        let total: f64 = d_q.iter().sum();
        let mut up = Vec::with_capacity(self.n_actions + 1);
        up.push(total); // value output feeds every Q equally
        for d in d_q {
            up.push(d - total / n);
        }
        up
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Online-network Q values for an observation.
    pub fn online_q_values(&self, obs: &[f64]) -> Vec<f64> {
        self.q_values(&self.net.online, obs)
    }
}

impl Agent for DqnAgent {
    fn kind(&self) -> AgentKind {
        if self.dueling {
            AgentKind::DuelingDdqn
        } else {
            AgentKind::Ddqn
        }
    }

    fn act(&self, obs: &[f64], mode: ActMode, rng: &mut dyn RngCore) -> ChosenAction {
        let action = match mode {
            ActMode::Explore => {
                if self.collecting || rng.gen::<f64>() < self.eps {
                    uniform_action(self.n_actions, rng)
                } else {
                    argmax(&self.q_values(&self.net.online, obs))
                }
            }
            ActMode::Greedy => argmax(&self.q_values(&self.net.online, obs)),
        };
        ChosenAction::discrete(action)
    }

    fn observe(&mut self, transition: Transition, _chosen: &ChosenAction) {
        self.buffer.push(transition);
    }

    fn train_step(&mut self, rng: &mut dyn RngCore) -> Option<f64> {
        if self.collecting || self.buffer.len() < self.cfg.batch_size {
            return None;
        }
        let batch = self.cfg.batch_size;
        self.grads.zero();
        let mut loss = 0.0;
        for _ in 0..batch {
            let t = self.buffer.sample(rng).clone();
            let trace = self.net.arch.forward_traced(&self.net.online, &t.state).expect("forward");
            let q_pred = if self.dueling {
                aggregate_dueling(trace.output()[0], &trace.output()[1..])
            } else {
                trace.output().to_vec()
            };
            let target = if t.terminal {
                t.reward
            } else {
                let next_online = self.q_values(&self.net.online, &t.next_state);
                let best = argmax(&next_online);
                let next_target = self.q_values(&self.net.target, &t.next_state);
                t.reward + self.cfg.discount * next_target[best]
            };
            let diff = q_pred[t.action] - target;
            loss += diff * diff;
            let mut d_q = vec![0.0; self.n_actions];
            d_q[t.action] = 2.0 * diff / batch as f64;
            let upstream = self.head_upstream(&d_q);
            self.net
                .arch
                .backward(&self.net.online, &trace, &upstream, &mut self.grads)
                .expect("backward");
        }
        self.adam.step(&mut self.net.online, &self.grads);
        self.net.soft_update(self.cfg.target_update_rate);
        Some(loss / batch as f64)
    }

    fn begin_episode(&mut self, episode_index: usize) {
        self.collecting = episode_index < self.cfg.initial_episodes;
        self.eps = epsilon_schedule(&self.cfg, episode_index);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Task;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_agent(dueling: bool) -> DqnAgent {
        let mut cfg = AgentConfig::defaults(if dueling {
            AgentKind::DuelingDdqn
        } else {
            AgentKind::Ddqn
        });
        cfg.hidden_size = 8;
        cfg.hidden_layers = 1;
        cfg.batch_size = 1;
        cfg.initial_episodes = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        DqnAgent::new(cfg, &Task::CartPole.spec(), dueling, &mut rng)
    }

    #[test]
    fn dueling_aggregation_examples() {
        assert_eq!(aggregate_dueling(1.0, &[2.0, 2.0]), vec![1.0, 1.0]);
        assert_eq!(aggregate_dueling(0.0, &[1.0, -1.0]), vec![1.0, -1.0]);
    }

    #[test]
    fn dueling_argmax_ignores_constant_advantage_shifts() {
        let adv = [0.3, -1.2, 0.9];
        let base = aggregate_dueling(0.5, &adv);
        for c in [-10.0, -0.5, 2.0, 1e6] {
            let shifted: Vec<f64> = adv.iter().map(|a| a + c).collect();
            let q = aggregate_dueling(0.5, &shifted);
            assert_eq!(argmax(&base), argmax(&q));
        }
    }

    #[test]
    fn greedy_action_is_argmax_with_lowest_index_ties() {
        assert_eq!(argmax(&[0.2, 0.9]), 1);
        assert_eq!(argmax(&[0.7, 0.7]), 0);
        assert_eq!(argmax(&[-1.0, -1.0, -1.0]), 0);
    }

    #[test]
    fn full_epsilon_explores_uniformly() {
        let mut agent = tiny_agent(false);
        agent.cfg.eps_init = 1.0;
        agent.cfg.eps_decay = 1.0;
        agent.begin_episode(0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0u32; 2];
        let n = 10_000;
        for _ in 0..n {
            counts[agent.act(&[0.0; 4], ActMode::Explore, &mut rng).action] += 1;
        }
        let expected = n as f64 / 2.0;
        let sigma = (n as f64 * 0.25).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn near_zero_discount_reduces_to_reward_regression() {
        let mut agent = tiny_agent(false);
        agent.cfg.discount = 1e-300; // config requires gamma > 0
        agent.net.online = FlatParams::zeros(agent.net.online.len());
        agent.net.target = agent.net.online.clone();
        let obs = vec![0.1, -0.2, 0.05, 0.0];
        let chosen = ChosenAction::discrete(0);
        // Q(s, a) = 0 everywhere, r = 1: the TD target is 1 and the loss
        // before the step is exactly 1.
        agent.observe(
            Transition {
                state: obs.clone(),
                action: 0,
                reward: 1.0,
                next_state: obs.clone(),
                terminal: false,
            },
            &chosen,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let loss = agent.train_step(&mut rng).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn train_step_is_noop_when_buffer_small() {
        let mut agent = tiny_agent(false);
        agent.cfg.batch_size = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(agent.train_step(&mut rng).is_none());
    }

    #[test]
    fn dueling_gradients_match_finite_differences() {
        // Chain-rule check across the aggregation head: d loss / d params of
        // (Q[a] - y)^2 against central differences on a few coordinates.
        let agent = tiny_agent(true);
        let obs = vec![0.2, -0.4, 0.6, -0.1];
        let action = 1;
        let y = 0.7;

        let loss_for = |params: &FlatParams| {
            let raw = agent.net.arch.forward(params, &obs).unwrap();
            let q = aggregate_dueling(raw[0], &raw[1..]);
            (q[action] - y) * (q[action] - y)
        };

        let trace = agent.net.arch.forward_traced(&agent.net.online, &obs).unwrap();
        let q = aggregate_dueling(trace.output()[0], &trace.output()[1..]);
        let mut d_q = vec![0.0; agent.n_actions];
        d_q[action] = 2.0 * (q[action] - y);
        let upstream = agent.head_upstream(&d_q);
        let mut grads = GradientBuffer::for_arch(&agent.net.arch);
        agent.net.arch.backward(&agent.net.online, &trace, &upstream, &mut grads).unwrap();

        let h = 1e-6;
        for idx in [0usize, 3, 10, 20, grads.as_slice().len() - 1] {
            let mut plus = agent.net.online.clone();
            plus.as_mut_slice()[idx] += h;
            let mut minus = agent.net.online.clone();
            minus.as_mut_slice()[idx] -= h;
            let fd = (loss_for(&plus) - loss_for(&minus)) / (2.0 * h);
            let an = grads.as_slice()[idx];
            let mag = an.abs().max(fd.abs());
            if mag > 1e-4 {
                assert!((an - fd).abs() / mag < 1e-5, "coord {idx}: {an} vs {fd}");
            }
        }
    }
}

//! Random agent-hyperparameter sampling for the robustness studies.

use rand::{Rng, RngCore};

use crate::agents::AgentConfig;

/// Sampling ranges for the varied hyperparameter subset. Learning rate is
/// continuous log-uniform; batch and hidden size are log-uniform integers
/// (uniform in log space, then rounded); layer count is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct HpSampler {
    pub learning_rate: (f64, f64),
    pub batch_size: (usize, usize),
    pub hidden_size: (usize, usize),
    pub hidden_layers: (usize, usize),
}

impl Default for HpSampler {
    fn default() -> Self {
        HpSampler {
            learning_rate: (1e-3 / 3.0, 3e-3),
            batch_size: (42, 384),
            hidden_size: (42, 384),
            hidden_layers: (1, 3),
        }
    }
}

fn log_uniform(lo: f64, hi: f64, rng: &mut dyn RngCore) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn log_uniform_int(lo: usize, hi: usize, rng: &mut dyn RngCore) -> usize {
    let v = log_uniform(lo as f64, hi as f64, rng).round() as usize;
    v.clamp(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledHps {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_size: usize,
    pub hidden_layers: usize,
}

impl HpSampler {
    /// Draw one configuration subset. Draw order is fixed (learning rate,
    /// batch size, hidden size, hidden layers) so seeded runs reproduce.
    pub fn sample(&self, rng: &mut dyn RngCore) -> SampledHps {
        SampledHps {
            learning_rate: log_uniform(self.learning_rate.0, self.learning_rate.1, rng),
            batch_size: log_uniform_int(self.batch_size.0, self.batch_size.1, rng),
            hidden_size: log_uniform_int(self.hidden_size.0, self.hidden_size.1, rng),
            hidden_layers: rng.gen_range(self.hidden_layers.0..=self.hidden_layers.1),
        }
    }

    /// Replace the varied subset of `base` with fresh draws.
    pub fn apply(&self, base: &AgentConfig, rng: &mut dyn RngCore) -> AgentConfig {
        let s = self.sample(rng);
        AgentConfig {
            learning_rate: s.learning_rate,
            batch_size: s.batch_size,
            hidden_size: s.hidden_size,
            hidden_layers: s.hidden_layers,
            ..base.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_in_range() {
        let sampler = HpSampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            let s = sampler.sample(&mut rng);
            assert!(s.learning_rate >= 1e-3 / 3.0 && s.learning_rate <= 3e-3);
            assert!((42..=384).contains(&s.batch_size));
            assert!((42..=384).contains(&s.hidden_size));
            assert!((1..=3).contains(&s.hidden_layers));
        }
    }

    #[test]
    fn layer_counts_cover_all_three_values() {
        let sampler = HpSampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0u32; 4];
        for _ in 0..3000 {
            counts[sampler.sample(&mut rng).hidden_layers] += 1;
        }
        assert_eq!(counts[0], 0);
        for c in &counts[1..] {
            assert!(*c > 800, "layer count draw badly skewed: {counts:?}");
        }
    }

    #[test]
    fn learning_rate_is_log_uniform_by_ks_test() {
        // Kolmogorov-Smirnov against the analytic log-uniform CDF at
        // alpha = 0.01 over 10^4 samples: D_n < 1.628 / sqrt(n).
        let sampler = HpSampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng).learning_rate).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) = sampler.learning_rate;
        let cdf = |x: f64| (x.ln() - lo.ln()) / (hi.ln() - lo.ln());
        let mut d = 0.0_f64;
        for (i, x) in xs.iter().enumerate() {
            let f = cdf(*x);
            d = d.max((f - i as f64 / n as f64).abs());
            d = d.max((f - (i + 1) as f64 / n as f64).abs());
        }
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} exceeds {critical}");
    }

    #[test]
    fn apply_only_touches_the_varied_subset() {
        let base = AgentConfig::defaults(AgentKind::Ddqn);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = HpSampler::default().apply(&base, &mut rng);
        assert_eq!(cfg.discount, base.discount);
        assert_eq!(cfg.target_update_rate, base.target_update_rate);
        assert_eq!(cfg.activation, base.activation);
        assert_eq!(cfg.agent_kind, base.agent_kind);
        cfg.validate().unwrap();
    }
}

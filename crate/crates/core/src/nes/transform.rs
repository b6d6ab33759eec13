//! Score transformations applied to raw population fitness before the
//! weighted-sum update, each behind a common trait and selectable by name.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    BetterAverage,
    RankLinear,
    Raw,
}

impl TransformKind {
    pub fn from_name(name: &str) -> Option<TransformKind> {
        registry().iter().find(|t| t.name() == name).map(|t| t.kind())
    }

    pub fn name(&self) -> &'static str {
        self.strategy().name()
    }

    pub fn strategy(&self) -> &'static dyn ScoreTransform {
        match self {
            TransformKind::BetterAverage => &BetterAverage,
            TransformKind::RankLinear => &RankLinear,
            TransformKind::Raw => &RawScores,
        }
    }
}

/// Monotone reshaping of raw fitness values into update weights.
pub trait ScoreTransform: Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> TransformKind;
    fn transform(&self, raw: &[f64]) -> Vec<f64>;
}

/// Keep only members scoring above the population mean and min-max normalize
/// them to [0, 1]: the mean maps to 0, the maximum to 1, everything at or
/// below the mean is dropped to 0. All-equal populations map to all zeros.
pub struct BetterAverage;

impl ScoreTransform for BetterAverage {
    fn name(&self) -> &'static str {
        "better_avg"
    }

    fn kind(&self) -> TransformKind {
        TransformKind::BetterAverage
    }

    fn transform(&self, raw: &[f64]) -> Vec<f64> {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max <= mean {
            return vec![0.0; raw.len()];
        }
        raw.iter()
            .map(|f| if *f > mean { (f - mean) / (max - mean) } else { 0.0 })
            .collect()
    }
}

/// Linear-in-rank weights on [0, 1]: the worst member gets 0, the best 1,
/// spaced evenly. Ties break by member index for determinism.
pub struct RankLinear;

impl ScoreTransform for RankLinear {
    fn name(&self) -> &'static str {
        "rank_linear"
    }

    fn kind(&self) -> TransformKind {
        TransformKind::RankLinear
    }

    fn transform(&self, raw: &[f64]) -> Vec<f64> {
        let n = raw.len();
        if n == 1 {
            return vec![1.0];
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| raw[*a].partial_cmp(&raw[*b]).unwrap().then(a.cmp(b)));
        let mut weights = vec![0.0; n];
        for (rank, idx) in order.into_iter().enumerate() {
            weights[idx] = rank as f64 / (n - 1) as f64;
        }
        weights
    }
}

/// Pass raw scores through unchanged. Unlike the other transforms the output
/// is not confined to [0, 1]; this exists for diagnostics.
pub struct RawScores;

impl ScoreTransform for RawScores {
    fn name(&self) -> &'static str {
        "raw"
    }

    fn kind(&self) -> TransformKind {
        TransformKind::Raw
    }

    fn transform(&self, raw: &[f64]) -> Vec<f64> {
        raw.to_vec()
    }
}

pub fn registry() -> &'static [&'static dyn ScoreTransform] {
    &[&BetterAverage, &RankLinear, &RawScores]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn better_average_examples() {
        assert_eq!(BetterAverage.transform(&[3.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(BetterAverage.transform(&[5.0, 5.0, 5.0]), vec![0.0, 0.0, 0.0]);
        // mean 2: the member at exactly the mean is not strictly above it
        assert_eq!(BetterAverage.transform(&[0.0, 2.0, 4.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn better_average_stays_in_unit_interval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let raw: Vec<f64> = (0..16).map(|_| rng.gen_range(-500.0..500.0)).collect();
            for w in BetterAverage.transform(&raw) {
                assert!((0.0..=1.0).contains(&w));
            }
        }
    }

    #[test]
    fn rank_linear_spans_unit_interval() {
        let w = RankLinear.transform(&[10.0, -3.0, 5.0, 0.0]);
        assert_eq!(w, vec![1.0, 0.0, 2.0 / 3.0, 1.0 / 3.0]);
        for v in &w {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn rank_linear_breaks_ties_by_index() {
        let w = RankLinear.transform(&[1.0, 1.0, 1.0]);
        assert_eq!(w, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn registry_names_round_trip() {
        for t in registry() {
            assert_eq!(TransformKind::from_name(t.name()), Some(t.kind()));
        }
        assert_eq!(TransformKind::from_name("softmax"), None);
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Both normalizing transforms confine weights to [0, 1], and some
        /// member carries weight 1 whenever the population is not all-equal.
        #[test]
        fn normalizing_transforms_stay_in_unit_interval(
            raw in proptest::collection::vec(-1000.0f64..1000.0, 2..32),
        ) {
            for kind in [TransformKind::BetterAverage, TransformKind::RankLinear] {
                let w = kind.strategy().transform(&raw);
                prop_assert_eq!(w.len(), raw.len());
                prop_assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
                let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
                if max > min {
                    prop_assert!(w.iter().any(|v| *v == 1.0));
                }
            }
        }
    }
}

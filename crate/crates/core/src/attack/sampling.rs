use rand::distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::tensor::{argmax, Rng};

/// How recorded path steps are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    UniformAlongPath,
    /// Probability proportional to the entropy of the step's soft label.
    EntropyWeighted,
}

/// Label attached to a decoded path sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Soft,
    /// One-hot at the argmax (lowest index on ties).
    Hard,
    Uniform,
}

/// `entropy_i / Σ entropy_j`, or `None` when the total is zero.
pub fn entropy_pmf(entropies: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = entropies.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    Some(entropies.iter().map(|h| h / total).collect())
}

/// Draws `k` step indices i.i.d. from a path with the given per-step
/// entropies. Entropy weighting falls back to uniform when every entropy is
/// zero.
pub fn sample_path(entropies: &[f64], mode: SampleMode, k: usize, rng: &mut Rng) -> Vec<usize> {
    let n = entropies.len();
    if n == 0 {
        return Vec::new();
    }
    let weighted = match mode {
        SampleMode::UniformAlongPath => None,
        SampleMode::EntropyWeighted => entropy_pmf(entropies)
            .and_then(|pmf| WeightedIndex::new(&pmf).ok()),
    };
    match weighted {
        Some(dist) => (0..k).map(|_| dist.sample(rng)).collect(),
        None => (0..k).map(|_| rng.index(n)).collect(),
    }
}

pub fn transform_label(soft: &[f64], mode: LabelMode) -> Vec<f64> {
    match mode {
        LabelMode::Soft => soft.to_vec(),
        LabelMode::Hard => {
            let mut out = vec![0.0; soft.len()];
            if !soft.is_empty() {
                out[argmax(soft)] = 1.0;
            }
            out
        }
        LabelMode::Uniform => vec![1.0 / soft.len() as f64; soft.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn single_step_path() {
        let draws = sample_path(&[0.3], SampleMode::EntropyWeighted, 20, &mut Rng::new(0));
        assert!(draws.iter().all(|&i| i == 0));
        let draws = sample_path(&[0.3], SampleMode::UniformAlongPath, 20, &mut Rng::new(0));
        assert!(draws.iter().all(|&i| i == 0));
    }

    #[test]
    fn entropy_weighting_concentrates_on_ambiguous_step() {
        let h = [0.0, 2f64.ln(), 0.0];
        assert_eq!(entropy_pmf(&h).unwrap(), vec![0.0, 1.0, 0.0]);
        let draws = sample_path(&h, SampleMode::EntropyWeighted, 500, &mut Rng::new(3));
        assert!(draws.iter().all(|&i| i == 1));
    }

    #[test]
    fn zero_entropy_falls_back_to_uniform() {
        assert!(entropy_pmf(&[0.0, 0.0]).is_none());
        let draws = sample_path(&[0.0; 4], SampleMode::EntropyWeighted, 4000, &mut Rng::new(9));
        for i in 0..4 {
            assert!(draws.iter().any(|&d| d == i));
        }
    }

    #[test]
    fn uniform_frequencies() {
        let draws = sample_path(&[0.1; 4], SampleMode::UniformAlongPath, 10_000, &mut Rng::new(1));
        // binomial sd is sqrt(.25·.75/1e4) ≈ 0.0043, so ±0.02 is > 4 sd
        for i in 0..4 {
            let f = draws.iter().filter(|&&d| d == i).count() as f64 / 10_000.0;
            assert!((f - 0.25).abs() < 0.02, "index {i}: {f}");
        }
    }

    #[test]
    fn label_modes() {
        assert_eq!(transform_label(&[0.2, 0.8], LabelMode::Soft), vec![0.2, 0.8]);
        assert_eq!(transform_label(&[0.4, 0.6], LabelMode::Hard), vec![0.0, 1.0]);
        assert_eq!(transform_label(&[0.5, 0.5], LabelMode::Hard), vec![1.0, 0.0]);
        let u = transform_label(&[1.0; 10].map(|v| v / 10.0), LabelMode::Uniform);
        assert_eq!(u, vec![0.1; 10]);
    }

    proptest! {
        #[test]
        fn hard_labels_are_idempotent(raw in prop::collection::vec(0.0f64..1.0, 2..8)) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let soft: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / raw.len() as f64) / total).collect();
            let hard = transform_label(&soft, LabelMode::Hard);
            prop_assert_eq!(transform_label(&hard, LabelMode::Hard), hard.clone());
            prop_assert_eq!(argmax(&hard), argmax(&soft));
        }

        #[test]
        fn pmf_is_proportional(h in prop::collection::vec(0.0f64..2.0, 1..50)) {
            if let Some(pmf) = entropy_pmf(&h) {
                let total: f64 = h.iter().sum();
                prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (p, v) in pmf.iter().zip(&h) {
                    prop_assert_eq!(*p, v / total);
                }
            }
        }
    }
}

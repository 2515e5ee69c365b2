use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{argmax, Matrix, PROB_FLOOR};

/// Class probabilities with (optional) true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    probs: Matrix,
    labels: Vec<Option<usize>>,
}

impl Predictions {
    pub fn new(probs: Matrix, labels: Vec<usize>) -> Result<Self> {
        Self::with_optional_labels(probs, labels.into_iter().map(Some).collect())
    }

    /// Out-of-distribution sets carry no labels.
    pub fn unlabeled(probs: Matrix) -> Result<Self> {
        let n = probs.rows();
        Self::with_optional_labels(probs, vec![None; n])
    }

    pub fn with_optional_labels(probs: Matrix, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != probs.rows() {
            return Err(Error::shape(
                "Predictions::new",
                format!("{} labels for {} rows", labels.len(), probs.rows()),
            ));
        }
        let c = probs.cols();
        for (r, row) in probs.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
                return Err(Error::invalid(format!("row {r} is not a probability vector")));
            }
        }
        if let Some(y) = labels.iter().flatten().find(|&&y| y >= c) {
            return Err(Error::invalid(format!("label {y} >= {c} classes")));
        }
        Ok(Self { probs, labels })
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.rows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.probs.cols()
    }

    /// Max softmax entry per row.
    pub fn confidences(&self) -> Vec<f64> {
        self.probs
            .row_iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn predicted(&self) -> Vec<usize> {
        self.probs.row_iter().map(argmax).collect()
    }

    fn labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .map(|y| y.ok_or_else(|| Error::invalid("metric requires labeled predictions")))
            .collect()
    }

    /// Per-row correctness of the argmax prediction.
    pub fn correct(&self) -> Result<Vec<bool>> {
        let labels = self.labels()?;
        Ok(self.predicted().into_iter().zip(labels).map(|(p, y)| p == y).collect())
    }

    fn non_empty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid(format!("{what} of an empty prediction set")));
        }
        Ok(())
    }
}

pub fn accuracy(preds: &Predictions) -> Result<f64> {
    preds.non_empty("accuracy")?;
    let correct = preds.correct()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
}

/// Mean `−ln p_true`, probabilities clamped at 1e-12.
pub fn nll(preds: &Predictions) -> Result<f64> {
    preds.non_empty("nll")?;
    let labels = preds.labels()?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| -preds.probs.get(r, y).max(PROB_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub count: usize,
    pub confidence: f64,
    pub accuracy: f64,
}

/// Equal-mass bins over max-softmax confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bins: Vec<ReliabilityBin>,
}

/// Sorts by confidence (stable, ascending) and splits into `num_bins`
/// contiguous groups; the first `n mod R` groups hold one extra sample.
pub fn reliability_bins(preds: &Predictions, num_bins: usize) -> Result<ReliabilityBins> {
    let n = preds.len();
    if num_bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    if n < num_bins {
        return Err(Error::invalid(format!("{n} predictions for {num_bins} bins")));
    }
    let conf = preds.confidences();
    let correct = preds.correct()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]));
    let (base, extra) = (n / num_bins, n % num_bins);
    let mut bins = Vec::with_capacity(num_bins);
    let mut start = 0;
    for r in 0..num_bins {
        let size = base + usize::from(r < extra);
        let members = &order[start..start + size];
        start += size;
        bins.push(ReliabilityBin {
            count: size,
            confidence: members.iter().map(|&i| conf[i]).sum::<f64>() / size as f64,
            accuracy: members.iter().filter(|&&i| correct[i]).count() as f64 / size as f64,
        });
    }
    Ok(ReliabilityBins { bins })
}

/// Adaptive calibration error: mean over equal-mass bins of
/// `|acc(r) − conf(r)|`.
pub fn ace(preds: &Predictions, num_bins: usize) -> Result<f64> {
    let bins = reliability_bins(preds, num_bins)?;
    Ok(bins
        .bins
        .iter()
        .map(|b| (b.accuracy - b.confidence).abs())
        .sum::<f64>()
        / num_bins as f64)
}

/// Equal-width bin index for confidence `c`, bins `(r/R, (r+1)/R]` with the
/// first bin closed at zero.
fn width_bin(c: f64, num_bins: usize) -> usize {
    let edge = |r: usize| r as f64 / num_bins as f64;
    let mut r = ((c * num_bins as f64).ceil() as usize).saturating_sub(1).min(num_bins - 1);
    while r > 0 && c <= edge(r) {
        r -= 1;
    }
    while r + 1 < num_bins && c > edge(r + 1) {
        r += 1;
    }
    r
}

/// Expected calibration error over equal-width bins, weighted by bin count.
pub fn ece(preds: &Predictions, num_bins: usize) -> Result<f64> {
    if num_bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    preds.non_empty("ece")?;
    let conf = preds.confidences();
    let correct = preds.correct()?;
    let mut count = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0; num_bins];
    let mut hits = vec![0usize; num_bins];
    for (i, &c) in conf.iter().enumerate() {
        let r = width_bin(c, num_bins);
        count[r] += 1;
        conf_sum[r] += c;
        hits[r] += usize::from(correct[i]);
    }
    let n = conf.len() as f64;
    Ok((0..num_bins)
        .filter(|&r| count[r] > 0)
        .map(|r| {
            let k = count[r] as f64;
            (k / n) * (hits[r] as f64 / k - conf_sum[r] / k).abs()
        })
        .sum())
}

/// Mean max confidence.
pub fn mmc(preds: &Predictions) -> Result<f64> {
    preds.non_empty("mmc")?;
    let conf = preds.confidences();
    Ok(conf.iter().sum::<f64>() / conf.len() as f64)
}

/// Area between the oracle and the confidence-ordered accuracy-vs-coverage
/// curves.
///
/// Samples are added most-confident first (ties keep input order). `A(k)` is
/// the accuracy of the first `k` samples and `O(k)` the same quantity when
/// every correct sample precedes every incorrect one. The area is integrated
/// with the trapezoid rule over coverage `k / n`, `k = 1..n`.
pub fn sparsification_error(preds: &Predictions) -> Result<f64> {
    preds.non_empty("sparsification error")?;
    let conf = preds.confidences();
    let correct = preds.correct()?;
    let n = conf.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]));
    let total_correct = correct.iter().filter(|&&c| c).count();
    let mut hits = 0usize;
    let gaps: Vec<f64> = order
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            let k = i + 1;
            hits += usize::from(correct[idx]);
            let oracle = k.min(total_correct) as f64 / k as f64;
            oracle - hits as f64 / k as f64
        })
        .collect();
    let area: f64 = gaps.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum();
    Ok(area / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(rows: &[[f64; 2]], labels: &[usize]) -> Predictions {
        Predictions::new(Matrix::from_rows(rows).unwrap(), labels.to_vec()).unwrap()
    }

    /// Confidences .6,.7,.8,.9 with correctness 1,0,1,1.
    fn four() -> Predictions {
        preds(&[[0.6, 0.4], [0.3, 0.7], [0.8, 0.2], [0.1, 0.9]], &[0, 0, 0, 1])
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&preds(&[[1.0, 0.0], [0.0, 1.0]], &[0, 1])).unwrap(), 1.0);
        assert_eq!(accuracy(&preds(&[[1.0, 0.0], [0.0, 1.0]], &[1, 0])).unwrap(), 0.0);
        assert_eq!(accuracy(&four()).unwrap(), 0.75);
        assert!(accuracy(&Predictions::new(Matrix::zeros(0, 2), vec![]).unwrap()).is_err());
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll(&preds(&[[1.0, 0.0]], &[0])).unwrap(), 0.0);
        let u = Predictions::new(Matrix::filled(3, 10, 0.1), vec![0, 4, 9]).unwrap();
        assert!((nll(&u).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!((nll(&preds(&[[0.7311, 0.2689]], &[0])).unwrap() - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn four_sample_bins() {
        let b = reliability_bins(&four(), 2).unwrap();
        assert_eq!(b.bins[0].count, 2);
        assert!((b.bins[0].confidence - 0.65).abs() < 1e-12);
        assert_eq!(b.bins[0].accuracy, 0.5);
        assert!((b.bins[1].confidence - 0.85).abs() < 1e-12);
        assert_eq!(b.bins[1].accuracy, 1.0);
        assert!((ace(&four(), 2).unwrap() - 0.15).abs() < 1e-12);
        let one = reliability_bins(&four(), 1).unwrap();
        assert_eq!(one.bins[0].accuracy, 0.75);
        assert!(reliability_bins(&four(), 5).is_err());
    }

    #[test]
    fn unequal_bin_sizes() {
        let rows: Vec<[f64; 2]> = (0..7).map(|i| [0.5 + i as f64 * 0.05, 0.5 - i as f64 * 0.05]).collect();
        let b = reliability_bins(&preds(&rows, &[0; 7]), 3).unwrap();
        assert_eq!(b.bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![3, 2, 2]);
    }

    #[test]
    fn confident_and_correct_is_calibrated() {
        let p = preds(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], &[0, 1, 0]);
        assert_eq!(ace(&p, 3).unwrap(), 0.0);
        assert_eq!(ece(&p, 10).unwrap(), 0.0);
    }

    #[test]
    fn ece_single_sample() {
        let p = preds(&[[0.9, 0.1]], &[0]);
        assert!((ece(&p, 10).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn width_bins_are_right_closed() {
        assert_eq!(width_bin(0.3, 10), 2);
        assert_eq!(width_bin(0.30000000000000004, 10), 3);
        assert_eq!(width_bin(1.0, 10), 9);
        assert_eq!(width_bin(0.0, 10), 0);
        assert_eq!(width_bin(0.05, 10), 0);
    }

    #[test]
    fn mmc_examples() {
        let u = Predictions::unlabeled(Matrix::filled(2, 10, 0.1)).unwrap();
        assert!((mmc(&u).unwrap() - 0.1).abs() < 1e-12);
        assert!((mmc(&preds(&[[0.9, 0.1], [0.3, 0.7]], &[0, 0])).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(mmc(&preds(&[[1.0, 0.0]], &[1])).unwrap(), 1.0);
    }

    #[test]
    fn sparsification_examples() {
        let sorted = preds(&[[0.9, 0.1], [0.3, 0.7], [0.6, 0.4]], &[0, 1, 1]);
        assert_eq!(sparsification_error(&sorted).unwrap(), 0.0);
        let p = preds(&[[0.9, 0.1], [0.6, 0.4]], &[1, 0]);
        assert!((sparsification_error(&p).unwrap() - 0.25).abs() < 1e-12);
        let all = preds(&[[0.9, 0.1], [0.2, 0.8]], &[0, 1]);
        assert_eq!(sparsification_error(&all).unwrap(), 0.0);
    }

    #[test]
    fn unlabeled_sets_reject_label_metrics() {
        let u = Predictions::unlabeled(Matrix::filled(2, 2, 0.5)).unwrap();
        assert!(accuracy(&u).is_err());
        assert!(ace(&u, 1).is_err());
    }

    #[test]
    fn invalid_probabilities_rejected() {
        assert!(Predictions::new(Matrix::row_vector(&[0.5, 0.6]), vec![0]).is_err());
        assert!(Predictions::new(Matrix::row_vector(&[0.5, 0.5]), vec![2]).is_err());
    }
}

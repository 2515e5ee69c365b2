use crate::error::{Error, Result};

/// Mann–Whitney estimate of the probability that an in-distribution score
/// exceeds an out-of-distribution one, ties counting one half.
pub fn auroc(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    if scores_in.is_empty() || scores_out.is_empty() {
        return Err(Error::invalid("auroc needs scores on both sides"));
    }
    if scores_in.iter().chain(scores_out).any(|s| s.is_nan()) {
        return Err(Error::NonFinite("auroc score is NaN".into()));
    }
    let mut out = scores_out.to_vec();
    out.sort_by(f64::total_cmp);
    // twice the (wins + ties/2) count, kept integral
    let mut doubled: u128 = 0;
    for &s in scores_in {
        let below = out.partition_point(|&o| o < s);
        let not_above = out.partition_point(|&o| o <= s);
        doubled += 2 * below as u128 + (not_above - below) as u128;
    }
    let pairs = scores_in.len() as u128 * scores_out.len() as u128;
    Ok(doubled as f64 / (2 * pairs) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(auroc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 3], &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.9, 0.8], &[0.7, 0.85]).unwrap(), 0.75);
        assert!(auroc(&[], &[0.1]).is_err());
    }

    #[test]
    fn swapped_sides_sum_to_one() {
        let a = [0.3, 0.9, 0.4, 0.75];
        let b = [0.1, 0.8, 0.35];
        assert_eq!(auroc(&a, &b).unwrap() + auroc(&b, &a).unwrap(), 1.0);
    }
}

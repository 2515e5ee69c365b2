use serde::{Deserialize, Serialize};

use super::calibration::{ace, nll, Predictions};
use crate::error::{Error, Result};
use crate::tensor::{softmax, Matrix};

pub const DEFAULT_GRID_POINTS: usize = 200;
pub const DEFAULT_GRID_MIN: f64 = 0.1;
pub const DEFAULT_GRID_MAX: f64 = 10.0;

/// `softmax(logits / T)`.
pub fn temperature_scale(logits: &Matrix, t: f64) -> Result<Matrix> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {t}")));
    }
    Ok(softmax(&logits.scale(1.0 / t)))
}

/// `points` log-spaced temperatures from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || points == 0 {
        return Err(Error::invalid(format!("bad grid [{lo}, {hi}] with {points} points")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect();
    grid[0] = lo;
    grid[points - 1] = hi;
    Ok(grid)
}

pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS).expect("static grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    Nll,
    Ace { bins: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub criterion: Criterion,
    /// `(T, criterion value)` for every grid point, in grid order.
    pub curve: Vec<(f64, f64)>,
}

fn evaluate(logits: &Matrix, labels: &[usize], t: f64, criterion: Criterion) -> Result<f64> {
    let preds = Predictions::new(temperature_scale(logits, t)?, labels.to_vec())?;
    match criterion {
        Criterion::Nll => nll(&preds),
        Criterion::Ace { bins } => ace(&preds, bins),
    }
}

/// Index of the smallest value; the first one wins ties.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Grid search for the temperature minimising `criterion`. With an ascending
/// grid, ties resolve to the smallest temperature.
pub fn fit_temperature(
    logits: &Matrix,
    labels: &[usize],
    criterion: Criterion,
    grid: &[f64],
) -> Result<TemperatureFit> {
    if grid.is_empty() {
        return Err(Error::invalid("empty temperature grid"));
    }
    let curve = grid
        .iter()
        .map(|&t| Ok((t, evaluate(logits, labels, t, criterion)?)))
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(curve.iter().map(|p| p.1));
    Ok(TemperatureFit { temperature: curve[best].0, criterion, curve })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub nll_val: f64,
    pub ace_val: f64,
    pub nll_test: f64,
    pub ace_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSweep {
    pub rows: Vec<SweepRow>,
    /// Validation-NLL optimum.
    pub argmin_nll: f64,
    /// Validation-ACE optimum.
    pub argmin_ace: f64,
    pub optima_differ: bool,
}

/// NLL and ACE on validation and test sets across a temperature grid.
pub fn sweep_temperature(
    logits_val: &Matrix,
    labels_val: &[usize],
    logits_test: &Matrix,
    labels_test: &[usize],
    grid: &[f64],
    bins: usize,
) -> Result<TemperatureSweep> {
    if grid.is_empty() {
        return Err(Error::invalid("empty temperature grid"));
    }
    let ace_c = Criterion::Ace { bins };
    let rows = grid
        .iter()
        .map(|&t| {
            Ok(SweepRow {
                temperature: t,
                nll_val: evaluate(logits_val, labels_val, t, Criterion::Nll)?,
                ace_val: evaluate(logits_val, labels_val, t, ace_c)?,
                nll_test: evaluate(logits_test, labels_test, t, Criterion::Nll)?,
                ace_test: evaluate(logits_test, labels_test, t, ace_c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let argmin_nll = rows[argmin(rows.iter().map(|r| r.nll_val))].temperature;
    let argmin_ace = rows[argmin(rows.iter().map(|r| r.ace_val))].temperature;
    Ok(TemperatureSweep { rows, argmin_nll, argmin_ace, optima_differ: argmin_nll != argmin_ace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_examples() {
        let l = Matrix::row_vector(&[3.0, 1.0]);
        assert_eq!(temperature_scale(&l, 1.0).unwrap(), softmax(&l));
        let flat = temperature_scale(&l, 1e6).unwrap();
        assert!((flat.get(0, 0) - 0.5).abs() < 1e-5);
        let sharp = temperature_scale(&Matrix::row_vector(&[1.0, 0.0]), 0.5).unwrap();
        assert!((sharp.get(0, 0) - 0.8808).abs() < 1e-4);
        assert!(temperature_scale(&l, 0.0).is_err());
        assert!(temperature_scale(&l, -1.0).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[199], 10.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let ratio = g[1] / g[0];
        assert!((g[100] / g[99] - ratio).abs() < 1e-12);
    }

    #[test]
    fn three_point_nll_fit() {
        let logits = Matrix::row_vector(&[1.0, 0.0]);
        let fit = fit_temperature(&logits, &[0], Criterion::Nll, &[0.5, 1.0, 2.0]).unwrap();
        let expect = [0.1269, 0.3133, 0.4741];
        for ((_, v), e) in fit.curve.iter().zip(expect) {
            assert!((v - e).abs() < 1e-4, "{v} vs {e}");
        }
        assert_eq!(fit.temperature, 0.5);
    }

    #[test]
    fn ties_go_to_smallest_temperature() {
        // zero logits give the same NLL at every temperature
        let fit = fit_temperature(&Matrix::zeros(2, 3), &[0, 1], Criterion::Nll, &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(fit.temperature, 0.5);
    }

    #[test]
    fn single_point_sweep() {
        let l = Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = sweep_temperature(&l, &[0, 1], &l, &[0, 0], &[1.0], 1).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.argmin_nll, 1.0);
        assert!(!s.optima_differ);
    }
}

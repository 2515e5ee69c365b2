//! Synthetic datasets with known generating distributions.
//!
//! Gaussian mixtures come with an exact Bayes posterior
//! ([`analytic_posterior`]), which serves as the ground-truth oracle for
//! calibration checks. `OodShift` translates a base dataset and stands in
//! for an out-of-distribution test set.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{softmax_in_place, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Isotropic Gaussians with shared scale `sigma`, equal class priors.
    GaussianMixture {
        centers: Vec<Vec<f64>>,
        sigma: f64,
        per_class: usize,
    },
    /// Two interleaved half circles in the plane with Gaussian noise.
    TwoArcs {
        radius: f64,
        noise: f64,
        per_class: usize,
    },
    /// `base` translated by `offset`.
    OodShift {
        base: Box<DatasetSpec>,
        offset: Vec<f64>,
    },
}

impl DatasetSpec {
    /// Three classes at the vertices of an equilateral triangle inscribed in
    /// the unit circle, σ = 0.6, 500 samples per class.
    pub fn reference_mixture() -> Self {
        let centers = [90.0_f64, 210.0, 330.0]
            .iter()
            .map(|deg| {
                let a = deg.to_radians();
                vec![a.cos(), a.sin()]
            })
            .collect();
        DatasetSpec::GaussianMixture {
            centers,
            sigma: 0.6,
            per_class: 500,
        }
    }

    pub fn with_per_class(&self, n: usize) -> Self {
        match self {
            DatasetSpec::GaussianMixture { centers, sigma, .. } => DatasetSpec::GaussianMixture {
                centers: centers.clone(),
                sigma: *sigma,
                per_class: n,
            },
            DatasetSpec::TwoArcs { radius, noise, .. } => DatasetSpec::TwoArcs {
                radius: *radius,
                noise: *noise,
                per_class: n,
            },
            DatasetSpec::OodShift { base, offset } => DatasetSpec::OodShift {
                base: Box::new(base.with_per_class(n)),
                offset: offset.clone(),
            },
        }
    }

    /// The spec translated by `multiple · σ` along the first axis (for
    /// two-arc data the noise level plays the role of σ).
    pub fn shifted(&self, multiple: f64) -> Self {
        let d = self.dim();
        let scale = match self {
            DatasetSpec::GaussianMixture { sigma, .. } => *sigma,
            DatasetSpec::TwoArcs { noise, .. } => *noise,
            DatasetSpec::OodShift { .. } => 1.0,
        };
        let mut offset = vec![0.0; d];
        if d > 0 {
            offset[0] = multiple * scale;
        }
        DatasetSpec::OodShift {
            base: Box::new(self.clone()),
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetSpec::GaussianMixture { centers, .. } => centers.first().map_or(0, Vec::len),
            DatasetSpec::TwoArcs { .. } => 2,
            DatasetSpec::OodShift { base, .. } => base.dim(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            DatasetSpec::GaussianMixture { centers, .. } => centers.len(),
            DatasetSpec::TwoArcs { .. } => 2,
            DatasetSpec::OodShift { base, .. } => base.num_classes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::GaussianMixture {
                centers,
                sigma,
                per_class,
            } => {
                if centers.len() < 2 {
                    return Err(Error::invalid("a mixture needs at least two centers"));
                }
                let d = centers[0].len();
                if d == 0 || centers.iter().any(|c| c.len() != d) {
                    return Err(Error::invalid("mixture centers must share a positive dimension"));
                }
                if !(*sigma > 0.0) {
                    return Err(Error::invalid(format!("sigma {sigma} must be > 0")));
                }
                if *per_class == 0 {
                    return Err(Error::invalid("per_class must be >= 1"));
                }
            }
            DatasetSpec::TwoArcs {
                radius,
                noise,
                per_class,
            } => {
                if !(*radius > 0.0) || !(*noise >= 0.0) {
                    return Err(Error::invalid("two_arcs needs radius > 0 and noise >= 0"));
                }
                if *per_class == 0 {
                    return Err(Error::invalid("per_class must be >= 1"));
                }
            }
            DatasetSpec::OodShift { base, offset } => {
                base.validate()?;
                if offset.len() != base.dim() {
                    return Err(Error::invalid(format!(
                        "offset has {} entries for a {}-dimensional dataset",
                        offset.len(),
                        base.dim()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Labeled samples plus per-feature bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} labels for {} rows", labels.len(), x.rows()),
            ));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(format!("label {y} >= {num_classes} classes")));
        }
        Ok(Self {
            x,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Per-feature `(min, max)`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        feature_bounds(&self.x)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn one_hot(&self) -> Matrix {
        crate::manifold::one_hot(&self.labels, self.num_classes)
    }
}

pub fn feature_bounds(x: &Matrix) -> Vec<(f64, f64)> {
    (0..x.cols())
        .map(|c| {
            (0..x.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                let v = x.get(r, c);
                (lo.min(v), hi.max(v))
            })
        })
        .collect()
}

fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a dataset; rows are shuffled so classes are interleaved.
pub fn gen_dataset(spec: &DatasetSpec, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    let (mut rows, mut labels): (Vec<Vec<f64>>, Vec<usize>) = (Vec::new(), Vec::new());
    match spec {
        DatasetSpec::GaussianMixture {
            centers,
            sigma,
            per_class,
        } => {
            for (class, center) in centers.iter().enumerate() {
                for _ in 0..*per_class {
                    rows.push(center.iter().map(|&mu| mu + sigma * gaussian(rng)).collect());
                    labels.push(class);
                }
            }
        }
        DatasetSpec::TwoArcs {
            radius,
            noise,
            per_class,
        } => {
            for class in 0..2 {
                for _ in 0..*per_class {
                    let theta = std::f64::consts::PI * rng.uniform();
                    let (x, y) = if class == 0 {
                        (theta.cos(), theta.sin())
                    } else {
                        (1.0 - theta.cos(), 0.5 - theta.sin())
                    };
                    rows.push(vec![
                        radius * x + noise * gaussian(rng),
                        radius * y + noise * gaussian(rng),
                    ]);
                    labels.push(class);
                }
            }
        }
        DatasetSpec::OodShift { base, offset } => {
            let mut data = gen_dataset(base, rng)?;
            for r in 0..data.x.rows() {
                for (v, o) in data.x.row_mut(r).iter_mut().zip(offset) {
                    *v += o;
                }
            }
            return Ok(data);
        }
    }
    let order = rng.permutation(rows.len());
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    Dataset::new(Matrix::from_rows(&rows)?, labels, spec.num_classes())
}

/// Exact class posterior `p(y | x)` of a Gaussian mixture with equal priors.
pub fn analytic_posterior(spec: &DatasetSpec, x: &Matrix) -> Result<Matrix> {
    let DatasetSpec::GaussianMixture { centers, sigma, .. } = spec else {
        return Err(Error::invalid("analytic posterior requires a gaussian_mixture spec"));
    };
    spec.validate()?;
    let d = centers[0].len();
    if x.cols() != d {
        return Err(Error::shape(
            "analytic_posterior",
            format!("{} columns for a {d}-dimensional mixture", x.cols()),
        ));
    }
    let mut out = Matrix::zeros(x.rows(), centers.len());
    let inv = 1.0 / (2.0 * sigma * sigma);
    for r in 0..x.rows() {
        let xr = x.row(r).to_vec();
        let row = out.row_mut(r);
        for (k, c) in centers.iter().enumerate() {
            let dist2: f64 = xr.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            row[k] = -dist2 * inv;
        }
        softmax_in_place(row);
    }
    Ok(out)
}

use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::tensor::{Backprop, ForwardCache, Gradients, Matrix, Mlp, Mode, Rng};

/// `λ ~ Beta(α, α)`.
pub fn sample_lambda(alpha: f64, rng: &mut Rng) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::invalid(format!("mixup alpha {alpha}: {e}")))?;
    Ok(beta.sample(rng))
}

fn check_pair(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `λ·a + (1 − λ)·b`.
fn blend(a: &Matrix, b: &Matrix, lambda: f64) -> Result<Matrix> {
    a.zip_map(b, |u, v| lambda * u + (1.0 - lambda) * v)
}

/// Mixup with a fixed mixing weight.
pub fn mixup_with_lambda(
    x1: &Matrix,
    y1: &Matrix,
    x2: &Matrix,
    y2: &Matrix,
    lambda: f64,
) -> Result<(Matrix, Matrix)> {
    check_pair("mixup", x1, x2)?;
    check_pair("mixup", y1, y2)?;
    if x1.rows() != y1.rows() {
        return Err(Error::shape("mixup", "inputs and labels differ in row count"));
    }
    Ok((blend(x1, x2, lambda)?, blend(y1, y2, lambda)?))
}

/// Convex combination of two batches with `λ ~ Beta(α, α)`.
pub fn mixup_batch(
    x1: &Matrix,
    y1: &Matrix,
    x2: &Matrix,
    y2: &Matrix,
    alpha: f64,
    rng: &mut Rng,
) -> Result<(Matrix, Matrix, f64)> {
    let lambda = sample_lambda(alpha, rng)?;
    let (x, y) = mixup_with_lambda(x1, y1, x2, y2, lambda)?;
    Ok((x, y, lambda))
}

/// Forward pass that mixed two batches at a hidden layer, with what is
/// needed to backpropagate through both branches.
#[derive(Debug, Clone)]
pub struct MixedForward {
    pub output: Matrix,
    pub y_mix: Matrix,
    pub lambda: f64,
    /// Index of the layer whose input was mixed; 0 mixes raw inputs.
    pub layer: usize,
    first: ForwardCache,
    second: ForwardCache,
    rest: ForwardCache,
}

impl MixedForward {
    /// Parameter gradients given the gradient w.r.t. `output`.
    pub fn backward(&self, net: &Mlp, grad_out: &Matrix) -> Result<Gradients> {
        let Backprop { grads: mut total, input_grad } = net.backward(&self.rest, grad_out)?;
        let a = net.backward(&self.first, &input_grad.scale(self.lambda))?;
        let b = net.backward(&self.second, &input_grad.scale(1.0 - self.lambda))?;
        total.add_scaled(1.0, &a.grads)?;
        total.add_scaled(1.0, &b.grads)?;
        Ok(total)
    }
}

/// Runs both batches up to the input of `layer`, mixes the activations with
/// weight `lambda` and finishes the forward pass on the mixture.
#[allow(clippy::too_many_arguments)]
pub fn manifold_mixup_at(
    net: &Mlp,
    x1: &Matrix,
    y1: &Matrix,
    x2: &Matrix,
    y2: &Matrix,
    layer: usize,
    lambda: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<MixedForward> {
    check_pair("manifold_mixup", x1, x2)?;
    check_pair("manifold_mixup", y1, y2)?;
    let layers = net.spec().num_layers();
    if layer >= layers {
        return Err(Error::invalid(format!("mix layer {layer} outside 0..{layers}")));
    }
    let (h1, first) = net.forward_span(x1, 0, layer, mode, rng)?;
    let (h2, second) = net.forward_span(x2, 0, layer, mode, rng)?;
    let mixed = blend(&h1, &h2, lambda)?;
    let (output, rest) = net.forward_span(&mixed, layer, layers, mode, rng)?;
    Ok(MixedForward {
        output,
        y_mix: blend(y1, y2, lambda)?,
        lambda,
        layer,
        first,
        second,
        rest,
    })
}

/// Manifold mixup with the mixing layer drawn uniformly from the input and
/// every hidden layer, and `λ ~ Beta(α, α)`.
pub fn manifold_mixup_forward(
    net: &Mlp,
    x1: &Matrix,
    y1: &Matrix,
    x2: &Matrix,
    y2: &Matrix,
    alpha: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<MixedForward> {
    let layer = rng.index(net.spec().num_hidden() + 1);
    let lambda = sample_lambda(alpha, rng)?;
    manifold_mixup_at(net, x1, y1, x2, y2, layer, lambda, mode, rng)
}

/// Moves mass `ε` off the labelled class, spread evenly over the other
/// `c − 1` classes.
pub fn eps_smooth_labels(y_onehot: &Matrix, epsilon: f64) -> Result<Matrix> {
    let c = y_onehot.cols();
    if c < 2 {
        return Err(Error::invalid("label smoothing needs at least two classes"));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let off = epsilon / (c - 1) as f64;
    Ok(y_onehot.map(|t| t * (1.0 - epsilon) + (1.0 - t) * off))
}

/// Uniform-label outlier samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CedaBatch {
    pub x: Matrix,
    pub y: Matrix,
    /// Source row in the real batch for permuted samples, `None` for noise.
    pub sources: Vec<Option<usize>>,
}

/// `batch_size` outliers: `round(fraction_permuted · batch_size)` copies of
/// random real rows with their features shuffled, the rest uniform noise
/// inside the per-feature `bounds`.
pub fn ceda_noise_batch(
    batch_size: usize,
    bounds: &[(f64, f64)],
    fraction_permuted: f64,
    real_batch: &Matrix,
    num_classes: usize,
    rng: &mut Rng,
) -> Result<CedaBatch> {
    if !(0.0..=1.0).contains(&fraction_permuted) {
        return Err(Error::invalid(format!("permuted fraction {fraction_permuted} outside [0, 1]")));
    }
    if bounds.len() != real_batch.cols() {
        return Err(Error::shape("ceda_noise_batch", "bounds do not match feature count"));
    }
    if bounds.iter().any(|&(lo, hi)| !(lo <= hi)) {
        return Err(Error::invalid("feature bounds must satisfy min <= max"));
    }
    let d = bounds.len();
    let mut permuted = (fraction_permuted * batch_size as f64).round() as usize;
    if real_batch.rows() == 0 {
        permuted = 0;
    }
    let mut x = Matrix::zeros(batch_size, d);
    let mut sources = Vec::with_capacity(batch_size);
    for r in 0..batch_size {
        let row = x.row_mut(r);
        if r < permuted {
            let src = rng.index(real_batch.rows());
            let order = rng.permutation(d);
            for (dst, &from) in row.iter_mut().zip(&order) {
                *dst = real_batch.get(src, from);
            }
            sources.push(Some(src));
        } else {
            for (v, &(lo, hi)) in row.iter_mut().zip(bounds) {
                *v = lo + (hi - lo) * rng.uniform();
            }
            sources.push(None);
        }
    }
    Ok(CedaBatch {
        x,
        y: Matrix::filled(batch_size, num_classes, 1.0 / num_classes as f64),
        sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Activation, MlpSpec};

    #[test]
    fn mixup_examples() {
        let x1 = Matrix::row_vector(&[0.0, 0.0]);
        let x2 = Matrix::row_vector(&[2.0, 4.0]);
        let y1 = Matrix::row_vector(&[1.0, 0.0]);
        let y2 = Matrix::row_vector(&[0.0, 1.0]);
        let (x, y) = mixup_with_lambda(&x1, &y1, &x2, &y2, 0.5).unwrap();
        assert_eq!(x.data(), &[1.0, 2.0]);
        assert_eq!(y.data(), &[0.5, 0.5]);
        let (x, y) = mixup_with_lambda(&x1, &y1, &x2, &y2, 1.0).unwrap();
        assert_eq!((x, y), (x1.clone(), y1.clone()));
        assert!(mixup_batch(&x1, &y1, &x2, &y2, 0.0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn lambda_in_unit_interval() {
        let mut rng = Rng::new(4);
        for _ in 0..1000 {
            let l = sample_lambda(0.1, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&l));
        }
    }

    fn net() -> Mlp {
        let spec = MlpSpec::new(vec![3, 5, 4, 2], Activation::Relu, 0.0).unwrap();
        Mlp::new(spec, &mut Rng::new(1)).unwrap()
    }

    fn pair() -> (Matrix, Matrix, Matrix, Matrix) {
        let x1 = Matrix::from_rows(&[[0.1, -0.4, 0.9], [1.0, 0.2, -0.3]]).unwrap();
        let x2 = Matrix::from_rows(&[[-0.7, 0.5, 0.0], [0.3, 0.3, 0.8]]).unwrap();
        let y1 = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let y2 = Matrix::from_rows(&[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        (x1, y1, x2, y2)
    }

    #[test]
    fn layer_zero_is_input_mixup() {
        let (x1, y1, x2, y2) = pair();
        let net = net();
        let mut rng = Rng::new(0);
        let m = manifold_mixup_at(&net, &x1, &y1, &x2, &y2, 0, 0.3, Mode::Eval, &mut rng).unwrap();
        let (x, y) = mixup_with_lambda(&x1, &y1, &x2, &y2, 0.3).unwrap();
        assert_eq!(m.output, net.predict_logits(&x).unwrap());
        assert_eq!(m.y_mix, y);
    }

    #[test]
    fn unit_lambda_is_plain_forward() {
        let (x1, y1, x2, y2) = pair();
        let net = net();
        for layer in 0..3 {
            let m = manifold_mixup_at(&net, &x1, &y1, &x2, &y2, layer, 1.0, Mode::Eval, &mut Rng::new(0))
                .unwrap();
            assert_eq!(m.output, net.predict_logits(&x1).unwrap());
        }
    }

    #[test]
    fn mixed_backward_matches_finite_differences() {
        let (x1, y1, x2, y2) = pair();
        let mut net = net();
        let upstream = Matrix::from_rows(&[[0.3, -0.2], [0.5, 0.1]]).unwrap();
        let objective = |n: &Mlp| {
            let m = manifold_mixup_at(n, &x1, &y1, &x2, &y2, 2, 0.35, Mode::Eval, &mut Rng::new(0)).unwrap();
            m.output.hadamard(&upstream).unwrap().sum()
        };
        let m = manifold_mixup_at(&net, &x1, &y1, &x2, &y2, 2, 0.35, Mode::Eval, &mut Rng::new(0)).unwrap();
        let flat = m.backward(&net, &upstream).unwrap().flat();
        let h = 1e-6;
        for i in 0..net.param_count() {
            let w = net.param(i);
            net.set_param(i, w + h);
            let up = objective(&net);
            net.set_param(i, w - h);
            let down = objective(&net);
            net.set_param(i, w);
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - flat[i]).abs() < 1e-6, "param {i}: {numeric} vs {}", flat[i]);
        }
    }

    #[test]
    fn eps_examples() {
        let y = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(eps_smooth_labels(&y, 0.0).unwrap(), y);
        let half = eps_smooth_labels(&y, 0.5).unwrap();
        assert!(half.data().iter().all(|&v| v == 0.5));
        let mut ten = Matrix::zeros(1, 10);
        ten.set(0, 3, 1.0);
        let s = eps_smooth_labels(&ten, 0.1).unwrap();
        assert!((s.get(0, 3) - 0.9).abs() < 1e-15);
        assert!((s.get(0, 0) - 0.1 / 9.0).abs() < 1e-15);
        assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ceda_rows() {
        let real = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 7.0]]).unwrap();
        let bounds = [(-1.0, 1.0), (0.0, 2.0), (3.0, 7.0)];
        let b = ceda_noise_batch(10, &bounds, 0.5, &real, 4, &mut Rng::new(2)).unwrap();
        assert!(b.y.data().iter().all(|&v| v == 0.25));
        assert_eq!(b.sources.iter().filter(|s| s.is_some()).count(), 5);
        for (r, src) in b.sources.iter().enumerate() {
            let mut got = b.x.row(r).to_vec();
            match src {
                Some(s) => {
                    let mut want = real.row(*s).to_vec();
                    got.sort_by(f64::total_cmp);
                    want.sort_by(f64::total_cmp);
                    assert_eq!(got, want);
                }
                None => {
                    for (v, (lo, hi)) in got.iter().zip(bounds) {
                        assert!(*v >= lo && *v <= hi);
                    }
                }
            }
        }
    }
}

//! Central finite-difference verification of [`Mlp::backward`].

use super::loss::{mse, softmax_cross_entropy};
use super::matrix::Matrix;
use super::mlp::{Gradients, Mlp, Mode};
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over entries of `(output − target)²`.
    SquaredError,
    /// Soft cross-entropy of `softmax(output)` against target rows.
    SoftCrossEntropy,
}

/// Eval-mode loss and analytic parameter gradients.
pub fn loss_and_grad(net: &Mlp, x: &Matrix, target: &Matrix, loss: LossKind) -> Result<(f64, Gradients)> {
    let mut rng = Rng::new(0);
    let (out, cache) = net.forward(x, Mode::Eval, &mut rng)?;
    let (value, upstream) = match loss {
        LossKind::SquaredError => mse(&out, target)?,
        LossKind::SoftCrossEntropy => softmax_cross_entropy(&out, target)?,
    };
    Ok((value, net.backward(&cache, &upstream)?.grads))
}

fn loss_only(net: &Mlp, x: &Matrix, target: &Matrix, loss: LossKind) -> Result<f64> {
    let out = net.predict_logits(x)?;
    Ok(match loss {
        LossKind::SquaredError => mse(&out, target)?.0,
        LossKind::SoftCrossEntropy => softmax_cross_entropy(&out, target)?.0,
    })
}

/// Max over parameters of `|analytic − numeric| / max(1, |analytic|, |numeric|)`
/// with central differences of half-width `h`.
pub fn grad_check(net: &Mlp, x: &Matrix, target: &Matrix, loss: LossKind, h: f64) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::invalid(format!("finite-difference step {h} outside [1e-6, 1e-3]")));
    }
    let (_, analytic) = loss_and_grad(net, x, target, loss)?;
    let analytic = analytic.flat();
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    for (i, &a) in analytic.iter().enumerate() {
        let original = probe.param(i);
        probe.set_param(i, original + h);
        let plus = loss_only(&probe, x, target, loss)?;
        probe.set_param(i, original - h);
        let minus = loss_only(&probe, x, target, loss)?;
        probe.set_param(i, original);
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

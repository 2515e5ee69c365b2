//! SGD with momentum and L2 weight decay.

use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    /// Base learning rate 0.1 and momentum 0.9.
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

/// Optimizer state for one network: `v ← μ·v + (g + λ·w)`, `w ← w − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Result<Self> {
        if !(config.lr >= 0.0 && config.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be finite and >= 0", config.lr)));
        }
        if !(0.0..1.0).contains(&config.momentum) {
            return Err(Error::invalid(format!("momentum {} outside [0, 1)", config.momentum)));
        }
        if !(config.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be >= 0"));
        }
        Ok(Self {
            config,
            velocity: None,
        })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != net.weights().len() {
            return Err(Error::shape("Sgd::step", "gradient layer count differs from network"));
        }
        let SgdConfig {
            lr,
            momentum,
            weight_decay,
        } = self.config;
        let velocity = self.velocity.get_or_insert_with(|| Gradients::zeros_like(net));
        let layers = net.weights().len();
        for l in 0..layers {
            update_block(
                &mut net.weights_mut()[l],
                &grads.weights[l],
                &mut velocity.weights[l],
                lr,
                momentum,
                weight_decay,
            )?;
            update_block(
                &mut net.biases_mut()[l],
                &grads.biases[l],
                &mut velocity.biases[l],
                lr,
                momentum,
                weight_decay,
            )?;
        }
        Ok(())
    }
}

fn update_block(
    param: &mut crate::tensor::Matrix,
    grad: &crate::tensor::Matrix,
    velocity: &mut crate::tensor::Matrix,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != velocity.shape() {
        return Err(Error::shape(
            "Sgd::step",
            format!("parameter {:?} vs gradient {:?}", param.shape(), grad.shape()),
        ));
    }
    for ((w, &g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(velocity.data_mut())
    {
        *v = momentum * *v + g + weight_decay * *w;
        *w -= lr * *v;
    }
    Ok(())
}

/// One-shot functional update: returns a new network after a single step
/// from zero velocity.
pub fn sgd_update(net: &Mlp, grads: &Gradients, config: SgdConfig) -> Result<Mlp> {
    let mut next = net.clone();
    Sgd::new(config)?.step(&mut next, grads)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Activation, Matrix, MlpSpec};

    fn scalar_net(w: f64) -> Mlp {
        let spec = MlpSpec::new(vec![1, 1], Activation::Tanh, 0.0).unwrap();
        Mlp::from_parts(spec, vec![Matrix::row_vector(&[w])], vec![Matrix::zeros(1, 1)]).unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            weights: vec![Matrix::row_vector(&[g])],
            biases: vec![Matrix::zeros(1, 1)],
        }
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let net = scalar_net(1.0);
        let cfg = SgdConfig { lr: 0.0, momentum: 0.9, weight_decay: 0.1 };
        assert_eq!(sgd_update(&net, &scalar_grad(3.0), cfg).unwrap(), net);
    }

    #[test]
    fn plain_step() {
        let cfg = SgdConfig { lr: 0.1, momentum: 0.0, weight_decay: 0.0 };
        let next = sgd_update(&scalar_net(1.0), &scalar_grad(0.5), cfg).unwrap();
        assert!((next.weights()[0].get(0, 0) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut net = scalar_net(0.0);
        let mut opt = Sgd::new(SgdConfig { lr: 1.0, momentum: 0.5, weight_decay: 0.0 }).unwrap();
        opt.step(&mut net, &scalar_grad(1.0)).unwrap();
        opt.step(&mut net, &scalar_grad(1.0)).unwrap();
        // v1 = 1, v2 = 1.5
        assert_eq!(net.weights()[0].get(0, 0), -2.5);
    }

    #[test]
    fn weight_decay_is_l2() {
        let cfg = SgdConfig { lr: 0.1, momentum: 0.0, weight_decay: 0.5 };
        let next = sgd_update(&scalar_net(2.0), &scalar_grad(0.0), cfg).unwrap();
        assert!((next.weights()[0].get(0, 0) - 1.9).abs() < 1e-15);
    }

    #[test]
    fn defaults() {
        let d = SgdConfig::default();
        assert_eq!((d.lr, d.momentum), (0.1, 0.9));
        assert!(Sgd::new(SgdConfig { lr: -1.0, ..d }).is_err());
    }
}

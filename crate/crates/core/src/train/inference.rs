use crate::error::{Error, Result};
use crate::tensor::{softmax, Matrix, Mlp, Mode, Rng};

pub const DEFAULT_ENSEMBLE_SIZE: usize = 5;
pub const DEFAULT_MC_PASSES: usize = 15;

/// Mean of the members' softmax outputs.
pub fn ensemble_predict(nets: &[Mlp], x: &Matrix) -> Result<Matrix> {
    let first = nets.first().ok_or_else(|| Error::invalid("empty ensemble"))?;
    let dims = (first.spec().input_dim(), first.spec().output_dim());
    let mut total = Matrix::zeros(x.rows(), dims.1);
    for (i, net) in nets.iter().enumerate() {
        if (net.spec().input_dim(), net.spec().output_dim()) != dims {
            return Err(Error::shape(
                "ensemble_predict",
                format!("member {i} has dims {:?}, expected {dims:?}", (net.spec().input_dim(), net.spec().output_dim())),
            ));
        }
        total.axpy(1.0, &softmax(&net.predict_logits(x)?))?;
    }
    Ok(total.scale(1.0 / nets.len() as f64))
}

/// Mean softmax over `passes` train-mode (dropout active) forward passes.
pub fn mc_dropout_predict(net: &Mlp, x: &Matrix, passes: usize, rng: &mut Rng) -> Result<Matrix> {
    if passes == 0 {
        return Err(Error::invalid("need at least one stochastic pass"));
    }
    let mut total = Matrix::zeros(x.rows(), net.spec().output_dim());
    for _ in 0..passes {
        let (logits, _) = net.forward(x, Mode::Train, rng)?;
        total.axpy(1.0, &softmax(&logits))?;
    }
    Ok(total.scale(1.0 / passes as f64))
}

//! Autoencoder-based generative model with a jointly trained latent-space
//! classifier.
//!
//! The encoder maps inputs to latent codes, the decoder maps codes back to
//! input space, and the latent classifier predicts class probabilities from
//! codes. All three are trained together on
//!
//! ```text
//! L = MSE(x, dec(enc(x))) + β · mean‖z‖² / m + γ · CE(y, cls(enc(x)))
//! ```
//!
//! The latent penalty keeps codes near the support of a standard normal
//! prior, so latent attacks stay in a region the decoder has seen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    mse, softmax, softmax_cross_entropy, Activation, Matrix, Mlp, MlpSpec, Mode, Rng,
    Sgd, SgdConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GenModel {
    encoder: Mlp,
    decoder: Mlp,
}

impl GenModel {
    pub fn new(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        let m = encoder.spec().output_dim();
        if decoder.spec().input_dim() != m {
            return Err(Error::shape(
                "GenModel::new",
                format!(
                    "encoder emits {m} latent dims, decoder expects {}",
                    decoder.spec().input_dim()
                ),
            ));
        }
        if decoder.spec().output_dim() != encoder.spec().input_dim() {
            return Err(Error::shape(
                "GenModel::new",
                "decoder output dim differs from encoder input dim",
            ));
        }
        if m < 2 {
            return Err(Error::invalid("latent dimension must be at least 2"));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.spec().output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.spec().input_dim()
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.predict_logits(x)
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        self.decoder.predict_logits(z)
    }

    /// Mean over rows (and features) of the squared reconstruction error.
    pub fn reconstruction_error(&self, data: &Matrix) -> Result<f64> {
        if data.rows() == 0 {
            return Err(Error::invalid("reconstruction error of an empty dataset"));
        }
        let recon = self.decode(&self.encode(data)?)?;
        Ok(mse(&recon, data)?.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentClassifier {
    net: Mlp,
}

impl LatentClassifier {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.spec().output_dim() < 2 {
            return Err(Error::invalid("latent classifier needs at least two classes"));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn num_classes(&self) -> usize {
        self.net.spec().output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.net.spec().input_dim()
    }

    /// Class probabilities (the soft labels of latent codes).
    pub fn classify(&self, z: &Matrix) -> Result<Matrix> {
        Ok(softmax(&self.net.predict_logits(z)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Weight β of the latent norm penalty.
    pub beta_latent_reg: f64,
    /// Weight γ of the latent classification loss.
    pub gamma_cls: f64,
    pub batch_size: usize,
    pub latent_dim: usize,
    /// Hidden widths of the encoder; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr: 0.02,
            momentum: 0.9,
            beta_latent_reg: 0.1,
            gamma_cls: 1.0,
            batch_size: 32,
            latent_dim: 2,
            hidden: vec![32, 32],
            classifier_hidden: vec![32],
        }
    }
}

impl GenTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_latent_reg < 0.0 || self.gamma_cls < 0.0 || self.lr < 0.0 {
            return Err(Error::invalid("generator loss weights and lr must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.latent_dim < 2 {
            return Err(Error::invalid("latent_dim must be >= 2"));
        }
        Ok(())
    }
}

/// Per-epoch means of the joint loss and its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenEpochStats {
    pub total: f64,
    pub reconstruction: f64,
    pub latent_reg: f64,
    pub classification: f64,
    /// Latent classifier accuracy on the training data after the epoch.
    pub latent_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenHistory {
    pub epochs: Vec<GenEpochStats>,
}

pub(crate) fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (r, &y) in labels.iter().enumerate() {
        m.set(r, y, 1.0);
    }
    m
}

/// Jointly trains encoder, decoder and latent classifier with one SGD
/// update of all three networks per batch.
pub fn train_generative(
    data: &Matrix,
    labels: &[usize],
    num_classes: usize,
    cfg: &GenTrainConfig,
    rng: &mut Rng,
) -> Result<(GenModel, LatentClassifier, GenHistory)> {
    cfg.validate()?;
    let n = data.rows();
    if n == 0 {
        return Err(Error::invalid("cannot train a generative model on empty data"));
    }
    if num_classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if labels.len() != n {
        return Err(Error::shape(
            "train_generative",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::invalid(format!("label {bad} >= {num_classes} classes")));
    }
    if n < cfg.batch_size {
        return Err(Error::invalid(format!(
            "{n} rows is fewer than the batch size {}",
            cfg.batch_size
        )));
    }

    let d = data.cols();
    let m = cfg.latent_dim;
    let enc_sizes: Vec<usize> = std::iter::once(d)
        .chain(cfg.hidden.iter().copied())
        .chain(std::iter::once(m))
        .collect();
    let dec_sizes: Vec<usize> = enc_sizes.iter().rev().copied().collect();
    let cls_sizes: Vec<usize> = std::iter::once(m)
        .chain(cfg.classifier_hidden.iter().copied())
        .chain(std::iter::once(num_classes))
        .collect();
    let mut encoder = Mlp::new(MlpSpec::new(enc_sizes, Activation::Tanh, 0.0)?, rng)?;
    let mut decoder = Mlp::new(MlpSpec::new(dec_sizes, Activation::Tanh, 0.0)?, rng)?;
    let mut classifier = Mlp::new(MlpSpec::new(cls_sizes, Activation::Relu, 0.0)?, rng)?;

    let sgd = SgdConfig {
        lr: cfg.lr,
        momentum: cfg.momentum,
        weight_decay: 0.0,
    };
    let mut enc_opt = Sgd::new(sgd)?;
    let mut dec_opt = Sgd::new(sgd)?;
    let mut cls_opt = Sgd::new(sgd)?;
    let targets = one_hot(labels, num_classes);
    let mut history = GenHistory::default();

    for epoch in 0..cfg.epochs {
        let order = rng.permutation(n);
        let mut sums = [0.0_f64; 4];
        for batch in order.chunks(cfg.batch_size) {
            let xb = data.select_rows(batch);
            let yb = targets.select_rows(batch);
            let rows = batch.len() as f64;

            let (z, enc_cache) = encoder.forward(&xb, Mode::Train, rng)?;
            let (xhat, dec_cache) = decoder.forward(&z, Mode::Train, rng)?;
            let (logits, cls_cache) = classifier.forward(&z, Mode::Train, rng)?;

            let (recon, g_xhat) = mse(&xhat, &xb)?;
            let (ce, g_logits) = softmax_cross_entropy(&logits, &yb)?;
            let reg = z.data().iter().map(|v| v * v).sum::<f64>() / (rows * m as f64);
            let total = recon + cfg.beta_latent_reg * reg + cfg.gamma_cls * ce;
            if !total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "generative loss at epoch {epoch}"
                )));
            }

            let dec_bp = decoder.backward(&dec_cache, &g_xhat)?;
            let cls_bp = classifier.backward(&cls_cache, &g_logits.scale(cfg.gamma_cls))?;
            let mut g_z = dec_bp.input_grad;
            g_z.axpy(1.0, &cls_bp.input_grad)?;
            g_z.axpy(2.0 * cfg.beta_latent_reg / (rows * m as f64), &z)?;
            let enc_bp = encoder.backward(&enc_cache, &g_z)?;

            enc_opt.step(&mut encoder, &enc_bp.grads)?;
            dec_opt.step(&mut decoder, &dec_bp.grads)?;
            cls_opt.step(&mut classifier, &cls_bp.grads)?;

            for (s, v) in sums.iter_mut().zip([total, recon, reg, ce]) {
                *s += v * rows;
            }
        }
        let z_all = encoder.predict_logits(data)?;
        let logits = classifier.predict_logits(&z_all)?;
        let correct = (0..n).filter(|&r| logits.argmax_row(r) == labels[r]).count();
        let nf = n as f64;
        history.epochs.push(GenEpochStats {
            total: sums[0] / nf,
            reconstruction: sums[1] / nf,
            latent_reg: sums[2] / nf,
            classification: sums[3] / nf,
            latent_accuracy: correct as f64 / nf,
        });
    }

    Ok((GenModel::new(encoder, decoder)?, LatentClassifier::new(classifier)?, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(d: usize, m: usize) -> GenModel {
        let enc = Mlp::zeros(MlpSpec::new(vec![d, 4, m], Activation::Tanh, 0.0).unwrap()).unwrap();
        let dec = Mlp::zeros(MlpSpec::new(vec![m, 4, d], Activation::Tanh, 0.0).unwrap()).unwrap();
        GenModel::new(enc, dec).unwrap()
    }

    #[test]
    fn zero_encoder_gives_zero_latent() {
        let gm = zero_model(3, 2);
        let z = gm.encode(&Matrix::row_vector(&[1.0, -2.0, 0.5])).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0]);
        let x = gm.decode(&Matrix::row_vector(&[3.0, 1.0])).unwrap();
        assert_eq!(x.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn encode_shape_mismatch() {
        let gm = zero_model(3, 2);
        assert!(gm.encode(&Matrix::row_vector(&[1.0, 2.0])).is_err());
        assert!(gm.decode(&Matrix::row_vector(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn mismatched_encoder_decoder_rejected() {
        let enc = Mlp::zeros(MlpSpec::new(vec![3, 2], Activation::Tanh, 0.0).unwrap()).unwrap();
        let dec = Mlp::zeros(MlpSpec::new(vec![3, 3], Activation::Tanh, 0.0).unwrap()).unwrap();
        assert!(GenModel::new(enc, dec).is_err());
        let enc = Mlp::zeros(MlpSpec::new(vec![3, 1], Activation::Tanh, 0.0).unwrap()).unwrap();
        let dec = Mlp::zeros(MlpSpec::new(vec![1, 3], Activation::Tanh, 0.0).unwrap()).unwrap();
        assert!(GenModel::new(enc, dec).is_err());
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let lc = LatentClassifier::new(
            Mlp::zeros(MlpSpec::new(vec![2, 8, 4], Activation::Relu, 0.0).unwrap()).unwrap(),
        )
        .unwrap();
        let p = lc.classify(&Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.0]]).unwrap()).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn identity_autoencoder_has_zero_error() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Tanh, 0.0).unwrap();
        let id = Mlp::from_parts(spec, vec![Matrix::identity(2)], vec![Matrix::zeros(1, 2)]).unwrap();
        let gm = GenModel::new(id.clone(), id).unwrap();
        let data = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 3.0]]).unwrap();
        assert_eq!(gm.reconstruction_error(&data).unwrap(), 0.0);
    }

    #[test]
    fn zero_decoder_error_is_mean_feature_variance() {
        let gm = zero_model(2, 2);
        let data = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, -2.0], vec![3.0, 0.0], vec![-3.0, 0.0]]).unwrap();
        // zero-mean columns: population variances 5 and 2
        let err = gm.reconstruction_error(&data).unwrap();
        assert!((err - 3.5).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_error_is_mean_of_row_errors() {
        let gm = zero_model(2, 2);
        let data = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let a = gm.reconstruction_error(&data.select_rows(&[0])).unwrap();
        let b = gm.reconstruction_error(&data.select_rows(&[1])).unwrap();
        assert_eq!(gm.reconstruction_error(&data).unwrap(), (a + b) / 2.0);
        assert!(gm.reconstruction_error(&Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn single_sample_is_memorised() {
        let data = Matrix::row_vector(&[0.3, -0.4]);
        let cfg = GenTrainConfig {
            epochs: 400,
            batch_size: 1,
            lr: 0.05,
            hidden: vec![8],
            classifier_hidden: vec![],
            ..GenTrainConfig::default()
        };
        let (gm, _, _) = train_generative(&data, &[0], 2, &cfg, &mut Rng::new(0)).unwrap();
        assert!(gm.reconstruction_error(&data).unwrap() < 1e-6);
    }

    #[test]
    fn training_input_errors() {
        let cfg = GenTrainConfig::default();
        let data = Matrix::zeros(0, 2);
        assert!(train_generative(&data, &[], 2, &cfg, &mut Rng::new(0)).is_err());
        let data = Matrix::zeros(40, 2);
        let labels = vec![0; 40];
        assert!(train_generative(&data, &labels, 1, &cfg, &mut Rng::new(0)).is_err());
        let bad = vec![5; 40];
        assert!(train_generative(&data, &bad, 2, &cfg, &mut Rng::new(0)).is_err());
    }
}

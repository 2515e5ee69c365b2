use serde::{Deserialize, Serialize};

use super::augment::{ceda_noise_batch, eps_smooth_labels, manifold_mixup_forward, mixup_batch};
use crate::attack::AugmentationSet;
use crate::error::{Error, Result};
use crate::harness::dataset::feature_bounds;
use crate::metrics::{accuracy, Predictions};
use crate::tensor::{
    argmax, softmax, softmax_cross_entropy, Activation, Matrix, Mlp, MlpSpec, Mode, Rng, Sgd,
    SgdConfig,
};

pub const DEFAULT_MIXUP_ALPHA: f64 = 0.1;
pub const DEFAULT_MANIFOLD_MIXUP_ALPHA: f64 = 2.0;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_CEDA_PERMUTED: f64 = 0.5;

/// Training-time augmentation or label treatment.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentMethod {
    None,
    Omada(AugmentationSet),
    Mixup { alpha: f64 },
    ManifoldMixup { alpha: f64 },
    EpsSmoothing { epsilon: f64 },
    /// Half of each batch is replaced by uniform-label outliers, of which
    /// `fraction_permuted` are feature-shuffled real rows and the rest noise.
    CedaNoise { fraction_permuted: f64 },
}

impl AugmentMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AugmentMethod::None => Ok(()),
            AugmentMethod::Omada(ref set) if set.is_empty() => {
                Err(Error::invalid("OMADA training needs a non-empty augmentation set"))
            }
            AugmentMethod::Omada(_) => Ok(()),
            AugmentMethod::Mixup { alpha } | AugmentMethod::ManifoldMixup { alpha } if !(alpha > 0.0) => {
                Err(Error::invalid(format!("mixup alpha must be positive, got {alpha}")))
            }
            AugmentMethod::EpsSmoothing { epsilon } if !(epsilon > 0.0 && epsilon < 1.0) => {
                Err(Error::invalid(format!("epsilon {epsilon} outside (0, 1)")))
            }
            AugmentMethod::CedaNoise { fraction_permuted } if !(0.0..=1.0).contains(&fraction_permuted) => {
                Err(Error::invalid(format!("permuted fraction {fraction_permuted} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Whether each batch is split between real and generated samples.
    fn splits_batch(&self) -> bool {
        matches!(self, AugmentMethod::Omada(_) | AugmentMethod::CedaNoise { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClfTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Epochs (1-based) after which the learning rate is multiplied by
    /// `lr_decay`.
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub validation_fraction: f64,
    /// Keep the epoch with the best validation accuracy instead of the last.
    pub early_stop_on_val_acc: bool,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl Default for ClfTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 64,
            lr_milestones: vec![150, 225],
            lr_decay: 0.1,
            validation_fraction: 0.1,
            early_stop_on_val_acc: false,
            seed: 0,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            dropout_rate: 0.0,
        }
    }
}

impl ClfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("learning-rate milestones must be strictly increasing"));
        }
        if !(self.lr_decay > 0.0) {
            return Err(Error::invalid("learning-rate decay must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::invalid(format!(
                "validation fraction {} outside (0, 0.5]",
                self.validation_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout rate outside [0, 1)"));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.lr_milestones.iter().filter(|&&m| m < epoch).count();
        self.lr * self.lr_decay.powi(passed as i32)
    }

    pub fn net_spec(&self, input_dim: usize, num_classes: usize) -> Result<MlpSpec> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend(&self.hidden);
        sizes.push(num_classes);
        MlpSpec::new(sizes, self.activation, self.dropout_rate)
    }
}

/// Real and generated sample counts of one mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchComposition {
    pub real: usize,
    pub augmented: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClfEpochStats {
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
    pub batches: Vec<BatchComposition>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClfHistory {
    pub epochs: Vec<ClfEpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub net: Mlp,
    pub config: ClfTrainConfig,
    pub history: ClfHistory,
    /// 1-based epoch whose weights were kept; 0 when no epoch ran.
    pub selected_epoch: usize,
    /// Rows of the training data held out for validation.
    pub validation_indices: Vec<usize>,
}

impl TrainedClassifier {
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax(&self.net.predict_logits(x)?))
    }
}

/// Number of validation rows for `n` samples: `fraction · n` rounded up, at
/// least 100, never more than half the data.
pub fn validation_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).max(100).min(n / 2)
}

/// Random `(train, validation)` index split.
pub fn split_validation(n: usize, fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let perm = rng.permutation(n);
    let v = validation_size(n, fraction);
    let (val, train) = perm.split_at(v);
    (train.to_vec(), val.to_vec())
}

fn check_one_hot(y: &Matrix) -> Result<Vec<usize>> {
    y.row_iter()
        .enumerate()
        .map(|(r, row)| {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::invalid(format!("label row {r} is not one-hot")));
            }
            Ok(argmax(row))
        })
        .collect()
}

fn val_accuracy(net: &Mlp, x: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    accuracy(&Predictions::new(softmax(&net.predict_logits(x)?), labels.to_vec())?)
}

/// Trains a classifier on `data` with one-hot `labels` after holding out a
/// validation split. Every method performs `⌊n_train / b⌋` updates per
/// epoch; methods that mix in generated samples fill `⌊b/2⌋` slots of each
/// batch with them and the remaining `⌈b/2⌉` with real rows.
pub fn train_classifier(
    data: &Matrix,
    labels: &Matrix,
    method: &AugmentMethod,
    cfg: &ClfTrainConfig,
    rng: &mut Rng,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    method.validate()?;
    if data.rows() != labels.rows() {
        return Err(Error::shape("train_classifier", "data and labels differ in row count"));
    }
    let classes = check_one_hot(labels)?;
    let c = labels.cols();
    if c < 2 {
        return Err(Error::invalid("classification needs at least two classes"));
    }
    let (train_idx, val_idx) = split_validation(data.rows(), cfg.validation_fraction, rng);
    if train_idx.len() < cfg.batch_size {
        return Err(Error::invalid(format!(
            "{} training rows after the validation split, batch size {}",
            train_idx.len(),
            cfg.batch_size
        )));
    }
    let x_train = data.select_rows(&train_idx);
    let y_train = labels.select_rows(&train_idx);
    let x_val = data.select_rows(&val_idx);
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| classes[i]).collect();

    let omada = match method {
        AugmentMethod::Omada(set) => {
            let x = set.inputs()?;
            let y = set.labels()?;
            if x.cols() != data.cols() || y.cols() != c {
                return Err(Error::shape("train_classifier", "augmentation set dims differ from data"));
            }
            Some((x, y))
        }
        _ => None,
    };
    let bounds = feature_bounds(&x_train);
    let y_train = match *method {
        AugmentMethod::EpsSmoothing { epsilon } => eps_smooth_labels(&y_train, epsilon)?,
        _ => y_train,
    };

    let mut net = Mlp::new(cfg.net_spec(data.cols(), c)?, rng)?;
    let mut opt = Sgd::new(SgdConfig { lr: cfg.lr, momentum: cfg.momentum, weight_decay: cfg.weight_decay })?;
    let b = cfg.batch_size;
    let updates = x_train.rows() / b;
    let (real_per_batch, aug_per_batch) = if method.splits_batch() { (b.div_ceil(2), b / 2) } else { (b, 0) };

    let mut history = ClfHistory::default();
    let mut best: Option<(usize, f64, Mlp)> = None;
    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        opt.set_lr(lr);
        let order = rng.permutation(x_train.rows());
        let mut loss_sum = 0.0;
        let mut batches = Vec::with_capacity(updates);
        for u in 0..updates {
            let idx = &order[u * real_per_batch..(u + 1) * real_per_batch];
            let xb = x_train.select_rows(idx);
            let yb = y_train.select_rows(idx);
            let (loss, grads) = match method {
                AugmentMethod::Mixup { alpha } => {
                    let perm = rng.permutation(xb.rows());
                    let (xm, ym, _) = mixup_batch(&xb, &yb, &xb.select_rows(&perm), &yb.select_rows(&perm), *alpha, rng)?;
                    step_loss(&net, &xm, &ym, rng)?
                }
                AugmentMethod::ManifoldMixup { alpha } => {
                    let perm = rng.permutation(xb.rows());
                    let mixed = manifold_mixup_forward(
                        &net,
                        &xb,
                        &yb,
                        &xb.select_rows(&perm),
                        &yb.select_rows(&perm),
                        *alpha,
                        Mode::Train,
                        rng,
                    )?;
                    let (loss, g) = softmax_cross_entropy(&mixed.output, &mixed.y_mix)?;
                    (loss, mixed.backward(&net, &g)?)
                }
                AugmentMethod::Omada(_) => {
                    let (xs, ys) = omada.as_ref().expect("set loaded above");
                    let pick: Vec<usize> = (0..aug_per_batch).map(|_| rng.index(xs.rows())).collect();
                    let x = xb.vstack(&xs.select_rows(&pick))?;
                    let y = yb.vstack(&ys.select_rows(&pick))?;
                    step_loss(&net, &x, &y, rng)?
                }
                AugmentMethod::CedaNoise { fraction_permuted } => {
                    let extra = ceda_noise_batch(aug_per_batch, &bounds, *fraction_permuted, &xb, c, rng)?;
                    step_loss(&net, &xb.vstack(&extra.x)?, &yb.vstack(&extra.y)?, rng)?
                }
                AugmentMethod::None | AugmentMethod::EpsSmoothing { .. } => step_loss(&net, &xb, &yb, rng)?,
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite(format!(
                    "classifier loss {loss} at epoch {epoch}, batch {u} (lr {lr})"
                )));
            }
            opt.step(&mut net, &grads)?;
            loss_sum += loss;
            batches.push(BatchComposition { real: real_per_batch, augmented: aug_per_batch });
        }
        let val_accuracy = val_accuracy(&net, &x_val, &val_labels)?;
        history.epochs.push(ClfEpochStats {
            train_loss: if updates > 0 { loss_sum / updates as f64 } else { 0.0 },
            val_accuracy,
            lr,
            batches,
        });
        if cfg.early_stop_on_val_acc && best.as_ref().is_none_or(|(_, acc, _)| val_accuracy > *acc) {
            best = Some((epoch, val_accuracy, net.clone()));
        }
    }
    let (selected_epoch, net) = match best {
        Some((epoch, _, kept)) => (epoch, kept),
        None => (cfg.epochs, net),
    };
    Ok(TrainedClassifier {
        net,
        config: cfg.clone(),
        history,
        selected_epoch,
        validation_indices: val_idx,
    })
}

fn step_loss(net: &Mlp, x: &Matrix, y: &Matrix, rng: &mut Rng) -> Result<(f64, crate::tensor::Gradients)> {
    let (logits, cache) = net.forward(x, Mode::Train, rng)?;
    let (loss, g) = softmax_cross_entropy(&logits, y)?;
    Ok((loss, net.backward(&cache, &g)?.grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::OmadaSample;
    use crate::manifold::one_hot;

    /// Two linearly separable blobs at (±2, 0) with jitter.
    fn blobs(n: usize, seed: u64) -> (Matrix, Matrix) {
        let mut rng = Rng::new(seed);
        let mut x = Matrix::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for r in 0..n {
            let y = r % 2;
            let sign = if y == 0 { -1.0 } else { 1.0 };
            x.set(r, 0, sign * (1.0 + rng.uniform()));
            x.set(r, 1, rng.uniform() * 2.0 - 1.0);
            labels.push(y);
        }
        (x, one_hot(&labels, 2))
    }

    fn small_cfg() -> ClfTrainConfig {
        ClfTrainConfig {
            epochs: 50,
            lr: 0.05,
            batch_size: 8,
            lr_milestones: vec![],
            early_stop_on_val_acc: true,
            hidden: vec![8],
            ..ClfTrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_net() {
        let (x, y) = blobs(300, 0);
        let cfg = ClfTrainConfig { epochs: 0, ..small_cfg() };
        let t = train_classifier(&x, &y, &AugmentMethod::None, &cfg, &mut Rng::new(7)).unwrap();
        // replay the same draws: split, then init
        let mut rng = Rng::new(7);
        split_validation(300, cfg.validation_fraction, &mut rng);
        let init = Mlp::new(cfg.net_spec(2, 2).unwrap(), &mut rng).unwrap();
        assert_eq!(t.net, init);
        assert_eq!(t.selected_epoch, 0);
    }

    #[test]
    fn separable_set_is_learned() {
        let (x, y) = blobs(300, 1);
        let t = train_classifier(&x, &y, &AugmentMethod::None, &small_cfg(), &mut Rng::new(0)).unwrap();
        let labels: Vec<usize> = y.row_iter().map(argmax).collect();
        let acc = accuracy(&Predictions::new(t.predict_proba(&x).unwrap(), labels).unwrap()).unwrap();
        assert_eq!(acc, 1.0);
    }

    fn toy_set(n: usize) -> AugmentationSet {
        AugmentationSet {
            samples: (0..n)
                .map(|i| OmadaSample {
                    input: vec![0.1 * i as f64, -0.2],
                    label: vec![0.5, 0.5],
                    path_id: i,
                    step_index: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn omada_batches_are_half_and_half() {
        let (x, y) = blobs(300, 2);
        let cfg = ClfTrainConfig { epochs: 3, ..small_cfg() };
        let t = train_classifier(&x, &y, &AugmentMethod::Omada(toy_set(5)), &cfg, &mut Rng::new(0)).unwrap();
        let base = train_classifier(&x, &y, &AugmentMethod::None, &cfg, &mut Rng::new(0)).unwrap();
        for (e, b) in t.history.epochs.iter().zip(&base.history.epochs) {
            assert_eq!(e.batches.len(), b.batches.len());
            assert!(e.batches.iter().all(|c| *c == BatchComposition { real: 4, augmented: 4 }));
        }
        let odd = ClfTrainConfig { batch_size: 7, ..cfg };
        let t = train_classifier(&x, &y, &AugmentMethod::Omada(toy_set(5)), &odd, &mut Rng::new(0)).unwrap();
        assert!(t.history.epochs[0].batches.iter().all(|c| c.real == 4 && c.augmented == 3));
    }

    #[test]
    fn empty_set_rejected() {
        let (x, y) = blobs(300, 2);
        let r = train_classifier(&x, &y, &AugmentMethod::Omada(toy_set(0)), &small_cfg(), &mut Rng::new(0));
        assert!(r.is_err());
    }

    #[test]
    fn divergent_training_aborts() {
        let (x, y) = blobs(300, 3);
        let cfg = ClfTrainConfig { lr: 1e200, momentum: 0.0, ..small_cfg() };
        let err = train_classifier(&x, &y, &AugmentMethod::None, &cfg, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
    }

    #[test]
    fn selected_epoch_maximises_val_accuracy() {
        let (x, y) = blobs(300, 4);
        let cfg = ClfTrainConfig { epochs: 6, ..small_cfg() };
        let t = train_classifier(&x, &y, &AugmentMethod::Mixup { alpha: 0.1 }, &cfg, &mut Rng::new(1)).unwrap();
        let accs: Vec<f64> = t.history.epochs.iter().map(|e| e.val_accuracy).collect();
        let best = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(accs[t.selected_epoch - 1], best);
        assert!(accs[..t.selected_epoch - 1].iter().all(|&a| a < best));
        let last = ClfTrainConfig { early_stop_on_val_acc: false, ..cfg };
        let t = train_classifier(&x, &y, &AugmentMethod::None, &last, &mut Rng::new(1)).unwrap();
        assert_eq!(t.selected_epoch, 6);
    }

    #[test]
    fn every_method_trains() {
        let (x, y) = blobs(300, 5);
        let cfg = ClfTrainConfig { epochs: 2, ..small_cfg() };
        for m in [
            AugmentMethod::Mixup { alpha: 0.1 },
            AugmentMethod::ManifoldMixup { alpha: 2.0 },
            AugmentMethod::EpsSmoothing { epsilon: 0.1 },
            AugmentMethod::CedaNoise { fraction_permuted: 0.5 },
        ] {
            let t = train_classifier(&x, &y, &m, &cfg, &mut Rng::new(0)).unwrap();
            assert_eq!(t.history.epochs.len(), 2, "{m:?}");
        }
    }

    #[test]
    fn schedule_and_validation() {
        let cfg = ClfTrainConfig { lr: 1.0, lr_milestones: vec![2, 4], lr_decay: 0.1, ..small_cfg() };
        assert_eq!(cfg.lr_at(1), 1.0);
        assert_eq!(cfg.lr_at(2), 1.0);
        assert_eq!(cfg.lr_at(3), 0.1);
        assert!((cfg.lr_at(5) - 0.01).abs() < 1e-15);
        assert!(ClfTrainConfig { lr_milestones: vec![3, 3], ..small_cfg() }.validate().is_err());
        assert!(ClfTrainConfig { validation_fraction: 0.6, ..small_cfg() }.validate().is_err());
        assert_eq!(validation_size(1500, 0.1), 150);
        assert_eq!(validation_size(300, 0.1), 100);
        assert_eq!(validation_size(50, 0.1), 25);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{GenModel, LatentClassifier};
use crate::tensor::{entropy, softmax_cross_entropy, Matrix, Mode, Rng};

/// Sign-gradient attack settings. The defaults run 1000 steps of size 0.01
/// and record every 10th iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub steps: usize,
    pub alpha: f64,
    pub record_stride: usize,
    /// Stop once the target mass `Σ y°_i p_i` reaches this value.
    pub early_stop_target_prob: Option<f64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            alpha: 0.01,
            record_stride: 10,
            early_stop_target_prob: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("attack needs at least one step"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("step size {} must be > 0", self.alpha)));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    SingleClass(usize),
    /// Half of the target mass on each of two distinct classes, which steers
    /// the attack onto their decision boundary.
    Boundary(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub vector: Vec<f64>,
}

impl TargetSpec {
    /// `Σ y°_i p_i`.
    pub fn mass(&self, probs: &[f64]) -> f64 {
        self.vector.iter().zip(probs).map(|(t, p)| t * p).sum()
    }
}

pub fn make_target(kind: TargetKind, num_classes: usize) -> Result<TargetSpec> {
    let mut vector = vec![0.0; num_classes];
    match kind {
        TargetKind::SingleClass(c) => {
            if c >= num_classes {
                return Err(Error::invalid(format!("target class {c} >= {num_classes}")));
            }
            vector[c] = 1.0;
        }
        TargetKind::Boundary(a, b) => {
            if a >= num_classes || b >= num_classes {
                return Err(Error::invalid(format!(
                    "boundary classes ({a}, {b}) out of range for {num_classes} classes"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("boundary pair ({a}, {b}) is degenerate")));
            }
            vector[a] = 0.5;
            vector[b] = 0.5;
        }
    }
    Ok(TargetSpec { kind, vector })
}

/// Recorded iterates of one latent attack.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    /// Iteration index of each recorded code (0 is the start).
    pub steps: Vec<usize>,
    pub codes: Vec<Vec<f64>>,
    pub soft_labels: Vec<Vec<f64>>,
    pub entropies: Vec<f64>,
}

/// A latent attack started from an encoded training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPath {
    pub source_index: usize,
    pub source_class: usize,
    pub target: TargetSpec,
    pub trajectory: LatentTrajectory,
}

impl AttackPath {
    pub fn len(&self) -> usize {
        self.trajectory.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.codes.is_empty()
    }

    pub fn codes(&self) -> &[Vec<f64>] {
        &self.trajectory.codes
    }

    pub fn soft_labels(&self) -> &[Vec<f64>] {
        &self.trajectory.soft_labels
    }

    pub fn entropies(&self) -> &[f64] {
        &self.trajectory.entropies
    }
}

/// `+1`, `−1` or `0`; unlike `f64::signum`, zero maps to zero.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Unconstrained L∞ steepest descent on `CE(y°, C(z))`:
/// `z ← z − α · sign(∇_z CE)`.
///
/// The start code and the final iterate are always recorded, plus every
/// `record_stride`-th iterate in between. At least one step is taken.
pub fn attack_latent(
    lc: &LatentClassifier,
    start: &[f64],
    target: &TargetSpec,
    cfg: &AttackConfig,
) -> Result<LatentTrajectory> {
    cfg.validate()?;
    if start.len() != lc.latent_dim() {
        return Err(Error::shape(
            "attack_latent",
            format!("{} latent dims, classifier expects {}", start.len(), lc.latent_dim()),
        ));
    }
    if target.vector.len() != lc.num_classes() {
        return Err(Error::shape(
            "attack_latent",
            format!(
                "target over {} classes, classifier has {}",
                target.vector.len(),
                lc.num_classes()
            ),
        ));
    }
    let net = lc.net();
    let target_row = Matrix::row_vector(&target.vector);
    // eval mode: the generator is never drawn from
    let mut rng = Rng::new(0);

    let mut traj = LatentTrajectory {
        steps: Vec::new(),
        codes: Vec::new(),
        soft_labels: Vec::new(),
        entropies: Vec::new(),
    };
    let record = |traj: &mut LatentTrajectory, step: usize, z: &Matrix, p: Vec<f64>| {
        traj.steps.push(step);
        traj.codes.push(z.data().to_vec());
        traj.entropies.push(entropy(&p));
        traj.soft_labels.push(p);
    };

    let mut z = Matrix::row_vector(start);
    record(&mut traj, 0, &z, lc.classify(&z)?.into_vec());

    for step in 1..=cfg.steps {
        let (logits, cache) = net.forward(&z, Mode::Eval, &mut rng)?;
        let (_, g_logits) = softmax_cross_entropy(&logits, &target_row)?;
        let grad = net.backward(&cache, &g_logits)?.input_grad;
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!(
                "latent gradient at attack step {step}"
            )));
        }
        for (zi, gi) in z.data_mut().iter_mut().zip(grad.data()) {
            *zi -= cfg.alpha * sign(*gi);
        }
        let probs = lc.classify(&z)?.into_vec();
        let stop = cfg
            .early_stop_target_prob
            .is_some_and(|t| target.mass(&probs) >= t);
        if stop || step % cfg.record_stride == 0 || step == cfg.steps {
            record(&mut traj, step, &z, probs);
        }
        if stop {
            break;
        }
    }
    Ok(traj)
}

/// Encodes `x_source` (a single row) and attacks its latent code.
pub fn pgd_attack(
    gm: &GenModel,
    lc: &LatentClassifier,
    x_source: &[f64],
    source_index: usize,
    source_class: usize,
    target: &TargetSpec,
    cfg: &AttackConfig,
) -> Result<AttackPath> {
    if gm.latent_dim() != lc.latent_dim() {
        return Err(Error::shape(
            "pgd_attack",
            "generative model and latent classifier disagree on latent dim",
        ));
    }
    let z0 = gm.encode(&Matrix::row_vector(x_source))?;
    let trajectory = attack_latent(lc, z0.data(), target, cfg)?;
    Ok(AttackPath {
        source_index,
        source_class,
        target: target.clone(),
        trajectory,
    })
}

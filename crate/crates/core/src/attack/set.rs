//! Offline augmentation set: decoded samples from latent attack paths,
//! labeled by the latent classifier.

use serde::{Deserialize, Serialize};

use super::pgd::{make_target, pgd_attack, AttackConfig, AttackPath, TargetKind};
use super::sampling::{sample_path, transform_label, LabelMode, SampleMode};
use crate::error::{Error, Result};
use crate::manifold::{GenModel, LatentClassifier};
use crate::tensor::{entropy, Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct OmadaSample {
    pub input: Vec<f64>,
    pub label: Vec<f64>,
    pub path_id: usize,
    /// Index into the path's recorded steps.
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSet {
    pub samples: Vec<OmadaSample>,
}

impl AugmentationSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn inputs(&self) -> Result<Matrix> {
        Matrix::from_rows(&self.samples.iter().map(|s| s.input.as_slice()).collect::<Vec<_>>())
    }

    pub fn labels(&self) -> Result<Matrix> {
        Matrix::from_rows(&self.samples.iter().map(|s| s.label.as_slice()).collect::<Vec<_>>())
    }

    pub fn mean_label_entropy(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| entropy(&s.label)).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmadaSetConfig {
    pub sample_mode: SampleMode,
    pub label_mode: LabelMode,
    pub set_size: usize,
    pub samples_per_path: usize,
    /// Send half of the attacks to a random two-class decision boundary
    /// instead of a single class.
    pub boundary_targets: bool,
}

impl Default for OmadaSetConfig {
    fn default() -> Self {
        Self {
            sample_mode: SampleMode::UniformAlongPath,
            label_mode: LabelMode::Soft,
            set_size: 2000,
            samples_per_path: 10,
            boundary_targets: false,
        }
    }
}

impl OmadaSetConfig {
    pub fn num_paths(&self) -> usize {
        self.set_size.div_ceil(self.samples_per_path.max(1))
    }
}

const RETRIES_PER_PATH: usize = 10;

fn pick_target(source_class: usize, num_classes: usize, boundary: bool, rng: &mut Rng) -> TargetKind {
    if boundary && rng.uniform() < 0.5 {
        let a = rng.index(num_classes);
        let mut b = rng.index(num_classes - 1);
        if b >= a {
            b += 1;
        }
        TargetKind::Boundary(a.min(b), a.max(b))
    } else {
        let mut t = rng.index(num_classes - 1);
        if t >= source_class {
            t += 1;
        }
        TargetKind::SingleClass(t)
    }
}

/// Runs `num_paths` attacks from random sources toward random targets.
///
/// Attempt `i` draws from `rng.derive(i)`, so the result does not depend on
/// how many earlier attempts were aborted. Aborted attacks are retried up to
/// a bounded budget.
#[allow(clippy::too_many_arguments)]
pub fn generate_paths(
    gm: &GenModel,
    lc: &LatentClassifier,
    sources: &Matrix,
    source_labels: &[usize],
    num_paths: usize,
    boundary_targets: bool,
    attack: &AttackConfig,
    rng: &mut Rng,
) -> Result<Vec<AttackPath>> {
    if sources.rows() == 0 {
        return Err(Error::invalid("no source samples to attack"));
    }
    if source_labels.len() != sources.rows() {
        return Err(Error::shape("generate_paths", "one label per source row required"));
    }
    let c = lc.num_classes();
    let base = rng.fork();
    let mut paths = Vec::with_capacity(num_paths);
    let mut last_err = None;
    let budget = num_paths * RETRIES_PER_PATH;
    let mut attempt = 0;
    while paths.len() < num_paths {
        if attempt >= budget {
            return Err(last_err.unwrap_or_else(|| Error::invalid("attack budget exhausted")));
        }
        let mut r = base.derive(attempt as u64);
        attempt += 1;
        let idx = r.index(sources.rows());
        let ys = source_labels[idx];
        if ys >= c {
            return Err(Error::invalid(format!("source label {ys} >= {c}")));
        }
        let target = make_target(pick_target(ys, c, boundary_targets, &mut r), c)?;
        match pgd_attack(gm, lc, sources.row(idx), idx, ys, &target, attack) {
            Ok(p) => paths.push(p),
            Err(e @ Error::NonFinite(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Ok(paths)
}

/// Samples `set_size` decoded points from `paths`, `samples_per_path` at a
/// time, cycling through the paths in order.
pub fn sample_from_paths(
    gm: &GenModel,
    paths: &[AttackPath],
    cfg: &OmadaSetConfig,
    rng: &mut Rng,
) -> Result<AugmentationSet> {
    if cfg.set_size == 0 {
        return Err(Error::invalid("set_size must be >= 1"));
    }
    if paths.is_empty() {
        return Err(Error::invalid("no attack paths to sample from"));
    }
    let per_path = cfg.samples_per_path.max(1);
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(cfg.set_size);
    let mut path_id = 0;
    while picks.len() < cfg.set_size {
        let k = per_path.min(cfg.set_size - picks.len());
        let path = &paths[path_id % paths.len()];
        for i in sample_path(path.entropies(), cfg.sample_mode, k, rng) {
            picks.push((path_id % paths.len(), i));
        }
        path_id += 1;
    }
    let codes: Vec<&[f64]> = picks
        .iter()
        .map(|&(p, i)| paths[p].codes()[i].as_slice())
        .collect();
    let decoded = gm.decode(&Matrix::from_rows(&codes)?)?;
    let samples = picks
        .iter()
        .enumerate()
        .map(|(r, &(p, i))| OmadaSample {
            input: decoded.row(r).to_vec(),
            label: transform_label(&paths[p].soft_labels()[i], cfg.label_mode),
            path_id: p,
            step_index: i,
        })
        .collect();
    Ok(AugmentationSet { samples })
}

/// Attacks, samples and decodes in one go.
pub fn build_omada_set(
    gm: &GenModel,
    lc: &LatentClassifier,
    sources: &Matrix,
    source_labels: &[usize],
    attack: &AttackConfig,
    cfg: &OmadaSetConfig,
    rng: &mut Rng,
) -> Result<AugmentationSet> {
    let paths = generate_paths(
        gm,
        lc,
        sources,
        source_labels,
        cfg.num_paths(),
        cfg.boundary_targets,
        attack,
        rng,
    )?;
    sample_from_paths(gm, &paths, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_choice_excludes_source_class() {
        let mut rng = Rng::new(4);
        for _ in 0..500 {
            match pick_target(1, 3, false, &mut rng) {
                TargetKind::SingleClass(t) => assert_ne!(t, 1),
                TargetKind::Boundary(..) => panic!("boundary target without opt-in"),
            }
        }
        let mut saw_boundary = false;
        for _ in 0..200 {
            if let TargetKind::Boundary(a, b) = pick_target(0, 3, true, &mut rng) {
                assert!(a < b && b < 3);
                saw_boundary = true;
            }
        }
        assert!(saw_boundary);
    }

    #[test]
    fn num_paths_rounds_up() {
        let cfg = OmadaSetConfig { set_size: 21, samples_per_path: 10, ..Default::default() };
        assert_eq!(cfg.num_paths(), 3);
    }
}

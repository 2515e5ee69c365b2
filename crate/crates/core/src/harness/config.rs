//! Experiment configuration.
//!
//! Config files are JSON objects. Keys may be nested objects or dotted
//! paths (`"clf.epochs": 20` is the same as `"clf": {"epochs": 20}`). The
//! file is merged over the built-in defaults, so a file only needs the
//! values it changes. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::dataset::DatasetSpec;
use crate::attack::{AttackConfig, LabelMode, OmadaSetConfig, SampleMode};
use crate::error::{Error, Result};
use crate::manifold::GenTrainConfig;
use crate::metrics::{log_grid, DEFAULT_BINS, DEFAULT_GRID_MAX, DEFAULT_GRID_MIN, DEFAULT_GRID_POINTS};
use crate::train::{
    AugmentMethod, ClfTrainConfig, DEFAULT_CEDA_PERMUTED, DEFAULT_EPSILON,
    DEFAULT_MANIFOLD_MIXUP_ALPHA, DEFAULT_MIXUP_ALPHA,
};

/// Environment variable that overrides `output_dir`.
pub const OUT_DIR_ENV: &str = "OMADA_OUT_DIR";

/// A training method as named in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    Base,
    Omada {
        #[serde(default = "default_sample_mode")]
        sample_mode: SampleMode,
        #[serde(default = "default_label_mode")]
        label_mode: LabelMode,
    },
    Mixup {
        #[serde(default = "default_mixup_alpha")]
        alpha: f64,
    },
    ManifoldMixup {
        #[serde(default = "default_manifold_alpha")]
        alpha: f64,
    },
    EpsSmoothing {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Ceda {
        #[serde(default = "default_ceda_permuted")]
        fraction_permuted: f64,
    },
}

fn default_sample_mode() -> SampleMode {
    SampleMode::UniformAlongPath
}
fn default_label_mode() -> LabelMode {
    LabelMode::Soft
}
fn default_mixup_alpha() -> f64 {
    DEFAULT_MIXUP_ALPHA
}
fn default_manifold_alpha() -> f64 {
    DEFAULT_MANIFOLD_MIXUP_ALPHA
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_ceda_permuted() -> f64 {
    DEFAULT_CEDA_PERMUTED
}

impl MethodSpec {
    pub fn omada(sample_mode: SampleMode, label_mode: LabelMode) -> Self {
        MethodSpec::Omada { sample_mode, label_mode }
    }

    /// Short name used in file names and result rows, e.g. `omada-se-u`.
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Base => "base".into(),
            MethodSpec::Omada { sample_mode, label_mode } => {
                let mut s = String::from("omada");
                if *sample_mode == SampleMode::EntropyWeighted {
                    s.push_str("-se");
                }
                match label_mode {
                    LabelMode::Soft => {}
                    LabelMode::Hard => s.push_str("-h"),
                    LabelMode::Uniform => s.push_str("-u"),
                }
                s
            }
            MethodSpec::Mixup { .. } => "mixup".into(),
            MethodSpec::ManifoldMixup { .. } => "manifold-mixup".into(),
            MethodSpec::EpsSmoothing { .. } => "eps-smoothing".into(),
            MethodSpec::Ceda { .. } => "ceda".into(),
        }
    }

    /// Inverse of [`MethodSpec::name`] with default hyperparameters.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "base" => MethodSpec::Base,
            "mixup" => MethodSpec::Mixup { alpha: DEFAULT_MIXUP_ALPHA },
            "manifold-mixup" => MethodSpec::ManifoldMixup { alpha: DEFAULT_MANIFOLD_MIXUP_ALPHA },
            "eps-smoothing" => MethodSpec::EpsSmoothing { epsilon: DEFAULT_EPSILON },
            "ceda" => MethodSpec::Ceda { fraction_permuted: DEFAULT_CEDA_PERMUTED },
            _ => {
                let rest = name.strip_prefix("omada")?;
                let (sample_mode, rest) = match rest.strip_prefix("-se") {
                    Some(r) => (SampleMode::EntropyWeighted, r),
                    None => (SampleMode::UniformAlongPath, rest),
                };
                let label_mode = match rest {
                    "" => LabelMode::Soft,
                    "-h" => LabelMode::Hard,
                    "-u" => LabelMode::Uniform,
                    _ => return None,
                };
                MethodSpec::Omada { sample_mode, label_mode }
            }
        })
    }

    pub fn needs_generator(&self) -> bool {
        matches!(self, MethodSpec::Omada { .. })
    }

    /// The training method; OMADA methods take their generated set.
    pub fn to_method(&self, set: Option<crate::attack::AugmentationSet>) -> Result<AugmentMethod> {
        Ok(match *self {
            MethodSpec::Base => AugmentMethod::None,
            MethodSpec::Omada { .. } => AugmentMethod::Omada(
                set.ok_or_else(|| Error::invalid("OMADA method built without an augmentation set"))?,
            ),
            MethodSpec::Mixup { alpha } => AugmentMethod::Mixup { alpha },
            MethodSpec::ManifoldMixup { alpha } => AugmentMethod::ManifoldMixup { alpha },
            MethodSpec::EpsSmoothing { epsilon } => AugmentMethod::EpsSmoothing { epsilon },
            MethodSpec::Ceda { fraction_permuted } => AugmentMethod::CedaNoise { fraction_permuted },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub bins: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            grid_min: DEFAULT_GRID_MIN,
            grid_max: DEFAULT_GRID_MAX,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl MetricsConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        log_grid(self.grid_min, self.grid_max, self.grid_points)
    }
}

/// Sampling and labelling of OMADA sets. The sampling and label modes
/// themselves come from each OMADA method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmadaOptions {
    pub set_size: usize,
    pub samples_per_path: usize,
    pub boundary_targets: bool,
}

impl Default for OmadaOptions {
    fn default() -> Self {
        let d = OmadaSetConfig::default();
        Self { set_size: d.set_size, samples_per_path: d.samples_per_path, boundary_targets: d.boundary_targets }
    }
}

impl OmadaOptions {
    pub fn num_paths(&self) -> usize {
        self.set_size.div_ceil(self.samples_per_path.max(1))
    }

    pub fn set_config(&self, sample_mode: SampleMode, label_mode: LabelMode) -> OmadaSetConfig {
        OmadaSetConfig {
            sample_mode,
            label_mode,
            set_size: self.set_size,
            samples_per_path: self.samples_per_path,
            boundary_targets: self.boundary_targets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Seed of the training, test and OOD draws. It is shared by all runs so
    /// that per-seed models can be ensembled on one test set.
    pub dataset_seed: u64,
    pub test_per_class: usize,
    /// OOD set: the dataset moved by this many σ along the first axis.
    pub ood_shift_sigmas: f64,
    pub gen: GenTrainConfig,
    pub attack: AttackConfig,
    pub clf: ClfTrainConfig,
    pub methods: Vec<MethodSpec>,
    pub omada: OmadaOptions,
    pub metrics: MetricsConfig,
    pub seeds: Vec<u64>,
    /// Evaluate the mean prediction of each method's per-seed models.
    pub ensemble: bool,
    /// Stochastic passes for MC-dropout rows (only when dropout is on).
    pub mc_dropout_passes: usize,
    /// Attack paths written as CSV for the first seed.
    pub export_paths: usize,
    pub save_checkpoints: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::reference_mixture(),
            dataset_seed: 2024,
            test_per_class: 3000,
            ood_shift_sigmas: 6.0,
            gen: GenTrainConfig::default(),
            attack: AttackConfig::default(),
            clf: ClfTrainConfig::default(),
            methods: vec![
                MethodSpec::Base,
                MethodSpec::omada(SampleMode::UniformAlongPath, LabelMode::Soft),
                MethodSpec::omada(SampleMode::EntropyWeighted, LabelMode::Soft),
                MethodSpec::omada(SampleMode::EntropyWeighted, LabelMode::Uniform),
                MethodSpec::Mixup { alpha: DEFAULT_MIXUP_ALPHA },
                MethodSpec::ManifoldMixup { alpha: DEFAULT_MANIFOLD_MIXUP_ALPHA },
                MethodSpec::EpsSmoothing { epsilon: DEFAULT_EPSILON },
                MethodSpec::Ceda { fraction_permuted: DEFAULT_CEDA_PERMUTED },
            ],
            omada: OmadaOptions::default(),
            metrics: MetricsConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            ensemble: true,
            mc_dropout_passes: crate::train::DEFAULT_MC_PASSES,
            export_paths: 3,
            save_checkpoints: true,
            output_dir: PathBuf::from("omada-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.gen.validate()?;
        self.attack.validate()?;
        self.clf.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        let mut names: Vec<String> = self.methods.iter().map(MethodSpec::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("method '{}' listed twice", w[0])));
        }
        if self.test_per_class == 0 {
            return Err(Error::invalid("test_per_class must be >= 1"));
        }
        if self.metrics.bins == 0 {
            return Err(Error::invalid("metrics.bins must be >= 1"));
        }
        self.metrics.grid()?;
        if self.omada.set_size == 0 && self.methods.iter().any(MethodSpec::needs_generator) {
            return Err(Error::invalid("omada.set_size must be >= 1"));
        }
        if self.mc_dropout_passes == 0 {
            return Err(Error::invalid("mc_dropout_passes must be >= 1"));
        }
        Ok(())
    }

    /// Parses a config document and merges it over the defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_overrides(value, &[])
    }

    /// Defaults, then `doc`, then `key=value` overrides. Override values are
    /// parsed as JSON when possible and taken as strings otherwise.
    pub fn from_overrides(doc: Value, sets: &[String]) -> Result<Self> {
        let mut merged = serde_json::to_value(Self::default())?;
        let doc = match doc {
            Value::Null => Value::Object(Map::new()),
            Value::Object(_) => doc,
            _ => return Err(Error::Parse("config must be a JSON object".into())),
        };
        merge(&mut merged, expand_dotted(doc)?);
        for item in sets {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("override '{item}' is not key=value")))?;
            let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
            let mut single = Map::new();
            single.insert(key.trim().to_owned(), v);
            merge(&mut merged, expand_dotted(Value::Object(single))?);
        }
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)?
            }
            None => Value::Null,
        };
        let mut cfg = Self::from_overrides(doc, sets)?;
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Rewrites `{"a.b": 1}` as `{"a": {"b": 1}}`, recursively.
fn expand_dotted(value: Value) -> Result<Value> {
    let Value::Object(map) = value else {
        return Ok(value);
    };
    let mut out = Value::Object(Map::new());
    for (key, v) in map {
        let v = expand_dotted(v)?;
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Parse(format!("bad config key '{key}'")));
        }
        let nested = parts.iter().rev().fold(v, |acc, part| {
            let mut m = Map::new();
            m.insert((*part).to_owned(), acc);
            Value::Object(m)
        });
        merge(&mut out, nested);
    }
    Ok(out)
}

/// Deep merge of objects. A tagged object whose `kind` differs from the
/// base replaces it rather than merging field by field.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let kind_changed = match (b.get("kind"), p.get("kind")) {
                (Some(x), Some(y)) => x != y,
                _ => false,
            };
            if kind_changed {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, patch) => *slot = patch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ExperimentConfig::from_json_str("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn dotted_and_nested_keys_agree() {
        let a = ExperimentConfig::from_json_str(r#"{"clf.epochs": 7, "gen": {"latent_dim": 3}}"#).unwrap();
        let b = ExperimentConfig::from_json_str(r#"{"clf": {"epochs": 7}, "gen.latent_dim": 3}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.clf.epochs, 7);
        assert_eq!(a.clf.batch_size, ClfTrainConfig::default().batch_size);
    }

    #[test]
    fn overrides_apply_last() {
        let sets = vec!["seeds=[3]".to_owned(), "output_dir=/tmp/x".to_owned(), "clf.lr=0.5".to_owned()];
        let cfg = ExperimentConfig::from_overrides(json!({"clf.lr": 0.2}), &sets).unwrap();
        assert_eq!(cfg.seeds, vec![3]);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.clf.lr, 0.5);
    }

    #[test]
    fn dataset_kind_switch_replaces() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"dataset": {"kind": "two_arcs", "radius": 1.0, "noise": 0.1, "per_class": 50}}"#,
        )
        .unwrap();
        assert_eq!(cfg.dataset, DatasetSpec::TwoArcs { radius: 1.0, noise: 0.1, per_class: 50 });
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"clf.epoch": 3}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"seeds": []}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"a..b": 1}"#).is_err());
        assert!(ExperimentConfig::from_json_str("[1]").is_err());
    }

    #[test]
    fn names_parse_back() {
        for sample in [SampleMode::UniformAlongPath, SampleMode::EntropyWeighted] {
            for label in [LabelMode::Soft, LabelMode::Hard, LabelMode::Uniform] {
                let m = MethodSpec::omada(sample, label);
                assert_eq!(MethodSpec::from_name(&m.name()), Some(m));
            }
        }
        for m in ExperimentConfig::default().methods {
            assert_eq!(MethodSpec::from_name(&m.name()), Some(m));
        }
        assert_eq!(MethodSpec::from_name("omada-x"), None);
        assert_eq!(MethodSpec::from_name("resnet"), None);
    }

    #[test]
    fn method_names() {
        let names: Vec<String> = ExperimentConfig::default().methods.iter().map(MethodSpec::name).collect();
        assert_eq!(
            names,
            ["base", "omada", "omada-se", "omada-se-u", "mixup", "manifold-mixup", "eps-smoothing", "ceda"]
        );
        let m: MethodSpec = serde_json::from_value(json!({"kind": "omada", "label_mode": "hard"})).unwrap();
        assert_eq!(m.name(), "omada-h");
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json_str(&cfg.to_json().unwrap()).unwrap(), cfg);
    }
}

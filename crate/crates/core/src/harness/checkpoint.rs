//! Text checkpoints for trained networks.
//!
//! A checkpoint is a JSON document holding a format version, a kind tag, one
//! block per network and the training history. Every parameter is stored as
//! a decimal string with 17 significant digits, which restores each `f64`
//! exactly. Parameter blocks are per layer, weights (`in × out`, row-major)
//! then biases.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::files::write_atomic;
use crate::csvfmt::fmt_f64;
use crate::error::{Error, Result};
use crate::manifold::{GenHistory, GenModel, LatentClassifier};
use crate::tensor::{Matrix, Mlp, MlpSpec};
use crate::train::{ClfHistory, ClfTrainConfig, TrainedClassifier};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Genmodel,
    Classifier,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBlock {
    pub name: String,
    pub spec: MlpSpec,
    pub weights: Vec<Vec<String>>,
    pub biases: Vec<Vec<String>>,
}

impl NetworkBlock {
    pub fn from_mlp(name: &str, net: &Mlp) -> Self {
        let text = |m: &Matrix| m.data().iter().map(|&v| fmt_f64(v)).collect();
        Self {
            name: name.to_owned(),
            spec: net.spec().clone(),
            weights: net.weights().iter().map(text).collect(),
            biases: net.biases().iter().map(text).collect(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        self.spec.validate()?;
        let sizes = &self.spec.layer_sizes;
        let layers = sizes.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Parse(format!(
                "network '{}' has {} weight and {} bias blocks, spec needs {layers}",
                self.name,
                self.weights.len(),
                self.biases.len()
            )));
        }
        let parse_block = |block: &[String], rows: usize, cols: usize, what: &str, l: usize| {
            if block.len() != rows * cols {
                return Err(Error::Parse(format!(
                    "network '{}' layer {l} {what}: {} values, expected {}",
                    self.name,
                    block.len(),
                    rows * cols
                )));
            }
            let data = block
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("network '{}': bad number '{s}'", self.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            Matrix::from_vec(rows, cols, data)
        };
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            weights.push(parse_block(&self.weights[l], sizes[l], sizes[l + 1], "weights", l)?);
            biases.push(parse_block(&self.biases[l], 1, sizes[l + 1], "biases", l)?);
        }
        Mlp::from_parts(self.spec.clone(), weights, biases)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: CheckpointKind,
    pub networks: Vec<NetworkBlock>,
    #[serde(default)]
    pub history: Value,
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    config: ClfTrainConfig,
    history: ClfHistory,
    selected_epoch: usize,
    validation_indices: Vec<usize>,
}

impl Checkpoint {
    fn new(kind: CheckpointKind, networks: Vec<NetworkBlock>, history: Value) -> Self {
        Self { format_version: FORMAT_VERSION, kind, networks, history }
    }

    pub fn from_genmodel(gm: &GenModel, lc: &LatentClassifier, history: &GenHistory) -> Result<Self> {
        Ok(Self::new(
            CheckpointKind::Genmodel,
            vec![
                NetworkBlock::from_mlp("encoder", gm.encoder()),
                NetworkBlock::from_mlp("decoder", gm.decoder()),
                NetworkBlock::from_mlp("latent_classifier", lc.net()),
            ],
            serde_json::to_value(history)?,
        ))
    }

    pub fn from_classifier(clf: &TrainedClassifier) -> Result<Self> {
        let meta = ClassifierMeta {
            config: clf.config.clone(),
            history: clf.history.clone(),
            selected_epoch: clf.selected_epoch,
            validation_indices: clf.validation_indices.clone(),
        };
        Ok(Self::new(
            CheckpointKind::Classifier,
            vec![NetworkBlock::from_mlp("classifier", &clf.net)],
            serde_json::to_value(meta)?,
        ))
    }

    pub fn from_ensemble(nets: &[Mlp]) -> Self {
        let blocks = nets
            .iter()
            .enumerate()
            .map(|(i, n)| NetworkBlock::from_mlp(&format!("member_{i}"), n))
            .collect();
        Self::new(CheckpointKind::Ensemble, blocks, Value::Null)
    }

    fn expect_kind(&self, kind: CheckpointKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Parse(format!("checkpoint holds {:?}, expected {kind:?}", self.kind)));
        }
        Ok(())
    }

    fn network(&self, name: &str) -> Result<Mlp> {
        self.networks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no network '{name}'")))?
            .to_mlp()
    }

    pub fn to_genmodel(&self) -> Result<(GenModel, LatentClassifier, GenHistory)> {
        self.expect_kind(CheckpointKind::Genmodel)?;
        let gm = GenModel::new(self.network("encoder")?, self.network("decoder")?)?;
        let lc = LatentClassifier::new(self.network("latent_classifier")?)?;
        if lc.latent_dim() != gm.latent_dim() {
            return Err(Error::Parse("latent classifier input differs from latent dimension".into()));
        }
        let history = if self.history.is_null() {
            GenHistory::default()
        } else {
            serde_json::from_value(self.history.clone())?
        };
        Ok((gm, lc, history))
    }

    pub fn to_classifier(&self) -> Result<TrainedClassifier> {
        self.expect_kind(CheckpointKind::Classifier)?;
        let meta: ClassifierMeta = serde_json::from_value(self.history.clone())?;
        Ok(TrainedClassifier {
            net: self.network("classifier")?,
            config: meta.config,
            history: meta.history,
            selected_epoch: meta.selected_epoch,
            validation_indices: meta.validation_indices,
        })
    }

    pub fn to_ensemble(&self) -> Result<Vec<Mlp>> {
        self.expect_kind(CheckpointKind::Ensemble)?;
        if self.networks.is_empty() {
            return Err(Error::Parse("ensemble checkpoint has no members".into()));
        }
        self.networks.iter().map(NetworkBlock::to_mlp).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a checkpoint, checking the format version before anything
    /// else.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Value = serde_json::from_str(text)?;
        let found = raw
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse("checkpoint lacks an integer format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(Error::Version { found: found.min(u64::from(u32::MAX)) as u32, expected: FORMAT_VERSION });
        }
        let ckpt: Checkpoint = serde_json::from_value(raw)?;
        for block in &ckpt.networks {
            block.to_mlp()?;
        }
        Ok(ckpt)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, ckpt.to_json()?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

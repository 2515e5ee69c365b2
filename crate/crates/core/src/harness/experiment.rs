//! The full method × seed experiment and its report files.
//!
//! Output files (all with a header row, floats with 17 significant digits):
//!
//! * `results.csv`: one row per (seed, method), plus `<method>-ens` rows for
//!   the mean prediction over seeds and `<method>-mcdo` rows when dropout is
//!   enabled. Columns are [`RESULT_COLUMNS`].
//! * `summary.csv`: `method,n` then `<metric>_mean,<metric>_std` for every
//!   metric column, over the successful rows of each method.
//! * `reliability_<method>.csv`: `seed,bin,count,confidence,accuracy`.
//! * `sweep_temp_<method>.csv`:
//!   `seed,temperature,nll_val,ace_val,nll_test,ace_test`.
//! * `path_<id>.csv`: attack paths of the first seed.
//! * `config.json` and, when enabled, `checkpoints/*.ckpt.json`.
//!
//! A failing cell is reported with status `error` and empty metrics; the
//! remaining cells still run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::{ExperimentConfig, MethodSpec};
use super::dataset::{gen_dataset, Dataset};
use super::files::write_atomic;
use crate::attack::{generate_paths, sample_from_paths, write_path_csv, AttackPath};
use crate::csvfmt::fmt_f64;
use crate::error::{Error, Result};
use crate::manifold::{train_generative, GenModel};
use crate::metrics::{
    accuracy, ace, auroc, ece, fit_temperature, mmc, nll, reliability_bins, sparsification_error,
    sweep_temperature, temperature_scale, Criterion, Predictions, TemperatureSweep,
};
use crate::tensor::{softmax, Matrix, Mlp, Rng};
use crate::train::{ensemble_predict, mc_dropout_predict, train_classifier};

/// Metric columns of `results.csv`, after `seed,method,status`.
pub const METRIC_COLUMNS: [&str; 14] = [
    "accuracy",
    "ace",
    "ece",
    "nll",
    "temperature",
    "ace_ts",
    "ece_ts",
    "nll_ts",
    "temperature_ace",
    "ace_ts_ace",
    "auroc",
    "mmc_ood",
    "sparsification",
    "selected_epoch",
];

pub const RESULT_COLUMNS: [&str; 18] = [
    "seed",
    "method",
    "status",
    "accuracy",
    "ace",
    "ece",
    "nll",
    "temperature",
    "ace_ts",
    "ece_ts",
    "nll_ts",
    "temperature_ace",
    "ace_ts_ace",
    "auroc",
    "mmc_ood",
    "sparsification",
    "selected_epoch",
    "message",
];

/// Train, test and OOD draws shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
    pub ood: Dataset,
}

pub fn experiment_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let root = Rng::new(cfg.dataset_seed);
    let train = gen_dataset(&cfg.dataset, &mut root.derive(0))?;
    let test_spec = cfg.dataset.with_per_class(cfg.test_per_class);
    let test = gen_dataset(&test_spec, &mut root.derive(1))?;
    let ood = gen_dataset(&test_spec.shifted(cfg.ood_shift_sigmas), &mut root.derive(2))?;
    Ok(ExperimentData { train, test, ood })
}

/// Random streams of one run. Every method of a seed shares the classifier
/// stream, so methods start from the same initialisation and split.
pub mod streams {
    pub const GENERATOR: u64 = 1;
    pub const PATHS: u64 = 2;
    pub const SET_SAMPLING: u64 = 3;
    pub const CLASSIFIER: u64 = 10;
    pub const MC_DROPOUT: u64 = 11;
}

/// Scalar metrics of one evaluated predictor. Temperature-scaled values are
/// absent for seed ensembles, which have no held-out validation data.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub accuracy: f64,
    pub ace: f64,
    pub ece: f64,
    pub nll: f64,
    pub scaled: Option<ScaledMetrics>,
    pub auroc: f64,
    pub mmc_ood: f64,
    pub sparsification: f64,
    pub selected_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMetrics {
    pub temperature: f64,
    pub ace: f64,
    pub ece: f64,
    pub nll: f64,
    pub temperature_ace: f64,
    pub ace_at_ace_optimum: f64,
}

impl CellMetrics {
    fn values(&self) -> [Option<f64>; 14] {
        let s = self.scaled.as_ref();
        [
            Some(self.accuracy),
            Some(self.ace),
            Some(self.ece),
            Some(self.nll),
            s.map(|s| s.temperature),
            s.map(|s| s.ace),
            s.map(|s| s.ece),
            s.map(|s| s.nll),
            s.map(|s| s.temperature_ace),
            s.map(|s| s.ace_at_ace_optimum),
            Some(self.auroc),
            Some(self.mmc_ood),
            Some(self.sparsification),
            self.selected_epoch.map(|e| e as f64),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Seed, or `ens` for seed ensembles.
    pub seed: String,
    pub method: String,
    pub outcome: std::result::Result<CellMetrics, String>,
}

impl ResultRow {
    pub fn metrics(&self) -> Option<&CellMetrics> {
        self.outcome.as_ref().ok()
    }

    fn csv_line(&self) -> String {
        let mut fields = vec![self.seed.clone(), self.method.clone()];
        match &self.outcome {
            Ok(m) => {
                fields.push("ok".into());
                let values = m.values();
                for (name, v) in METRIC_COLUMNS.iter().zip(values) {
                    fields.push(match v {
                        Some(v) if *name == "selected_epoch" => format!("{}", v as usize),
                        Some(v) => fmt_f64(v),
                        None => String::new(),
                    });
                }
                fields.push(String::new());
            }
            Err(msg) => {
                fields.push("error".into());
                fields.extend(std::iter::repeat_n(String::new(), METRIC_COLUMNS.len()));
                fields.push(msg.replace([',', '\n', '\r'], ";"));
            }
        }
        fields.join(",")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub output_dir: PathBuf,
}

impl ExperimentReport {
    /// Successful rows of `method`.
    pub fn method_metrics(&self, method: &str) -> Vec<&CellMetrics> {
        self.rows.iter().filter(|r| r.method == method).filter_map(ResultRow::metrics).collect()
    }
}

/// Evaluation of one predictor: test and OOD probabilities, plus validation
/// and test log-probabilities for temperature scaling when available.
struct Evaluation {
    metrics: CellMetrics,
    reliability: Vec<String>,
    sweep: Option<TemperatureSweep>,
}

struct Scored<'a> {
    test_logits: Matrix,
    ood_probs: Matrix,
    validation: Option<(Matrix, Vec<usize>)>,
    selected_epoch: Option<usize>,
    data: &'a ExperimentData,
}

fn log_probs(p: &Matrix) -> Matrix {
    p.map(|v| v.max(crate::tensor::PROB_FLOOR).ln())
}

fn evaluate(scored: Scored<'_>, cfg: &ExperimentConfig, seed: &str) -> Result<Evaluation> {
    let bins = cfg.metrics.bins;
    let test_labels = &scored.data.test.labels;
    let preds = Predictions::new(softmax(&scored.test_logits), test_labels.clone())?;
    let ood = Predictions::unlabeled(scored.ood_probs)?;
    let reliability = reliability_bins(&preds, bins)?
        .bins
        .iter()
        .enumerate()
        .map(|(i, b)| format!("{seed},{i},{},{},{}", b.count, fmt_f64(b.confidence), fmt_f64(b.accuracy)))
        .collect();
    let (scaled, sweep) = match &scored.validation {
        Some((val_logits, val_labels)) => {
            let grid = cfg.metrics.grid()?;
            let fit = fit_temperature(val_logits, val_labels, Criterion::Nll, &grid)?;
            let fit_ace = fit_temperature(val_logits, val_labels, Criterion::Ace { bins }, &grid)?;
            let at = |t: f64| -> Result<Predictions> {
                Predictions::new(temperature_scale(&scored.test_logits, t)?, test_labels.clone())
            };
            let scaled_preds = at(fit.temperature)?;
            let scaled = ScaledMetrics {
                temperature: fit.temperature,
                ace: ace(&scaled_preds, bins)?,
                ece: ece(&scaled_preds, bins)?,
                nll: nll(&scaled_preds)?,
                temperature_ace: fit_ace.temperature,
                ace_at_ace_optimum: ace(&at(fit_ace.temperature)?, bins)?,
            };
            let sweep = sweep_temperature(val_logits, val_labels, &scored.test_logits, test_labels, &grid, bins)?;
            (Some(scaled), Some(sweep))
        }
        None => (None, None),
    };
    let metrics = CellMetrics {
        accuracy: accuracy(&preds)?,
        ace: ace(&preds, bins)?,
        ece: ece(&preds, bins)?,
        nll: nll(&preds)?,
        scaled,
        auroc: auroc(&preds.confidences(), &ood.confidences())?,
        mmc_ood: mmc(&ood)?,
        sparsification: sparsification_error(&preds)?,
        selected_epoch: scored.selected_epoch,
    };
    Ok(Evaluation { metrics, reliability, sweep })
}

/// Per-method CSV bodies collected while the experiment runs.
#[derive(Default)]
struct Tables {
    reliability: BTreeMap<String, Vec<String>>,
    sweeps: BTreeMap<String, Vec<String>>,
}

impl Tables {
    fn record(&mut self, method: &str, seed: &str, eval: &Evaluation) {
        self.reliability.entry(method.to_owned()).or_default().extend(eval.reliability.iter().cloned());
        if let Some(sweep) = &eval.sweep {
            let lines = self.sweeps.entry(method.to_owned()).or_default();
            for r in &sweep.rows {
                lines.push(format!(
                    "{seed},{},{},{},{},{}",
                    fmt_f64(r.temperature),
                    fmt_f64(r.nll_val),
                    fmt_f64(r.ace_val),
                    fmt_f64(r.nll_test),
                    fmt_f64(r.ace_test)
                ));
            }
        }
    }
}

struct SeedModels {
    generator: Option<std::result::Result<(GenModel, Vec<AttackPath>), String>>,
}

fn train_seed_generator(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    seed: u64,
    out: &Path,
) -> Result<(GenModel, Vec<AttackPath>)> {
    let root = Rng::new(seed);
    let train = &data.train;
    let (gm, lc, history) =
        train_generative(&train.x, &train.labels, train.num_classes, &cfg.gen, &mut root.derive(streams::GENERATOR))?;
    if cfg.save_checkpoints {
        let ckpt = Checkpoint::from_genmodel(&gm, &lc, &history)?;
        save_checkpoint(&ckpt, &out.join("checkpoints").join(format!("genmodel_seed{seed}.ckpt.json")))?;
    }
    let num_paths = cfg.omada.num_paths();
    let paths = generate_paths(
        &gm,
        &lc,
        &train.x,
        &train.labels,
        num_paths,
        cfg.omada.boundary_targets,
        &cfg.attack,
        &mut root.derive(streams::PATHS),
    )?;
    Ok((gm, paths))
}

/// Trains and evaluates one (seed, method) cell; returns the chosen network.
fn run_cell(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    seed: u64,
    method: &MethodSpec,
    models: &SeedModels,
    tables: &mut Tables,
    rows: &mut Vec<ResultRow>,
    out: &Path,
) -> Result<Mlp> {
    let root = Rng::new(seed);
    let name = method.name();
    let set = match method {
        MethodSpec::Omada { sample_mode, label_mode } => {
            let (gm, paths) = match &models.generator {
                Some(Ok(g)) => g,
                Some(Err(e)) => return Err(Error::invalid(format!("generator failed: {e}"))),
                None => return Err(Error::invalid("generator was not trained")),
            };
            let set_cfg = cfg.omada.set_config(*sample_mode, *label_mode);
            Some(sample_from_paths(gm, paths, &set_cfg, &mut root.derive(streams::SET_SAMPLING))?)
        }
        _ => None,
    };
    let clf_cfg = crate::train::ClfTrainConfig { seed, ..cfg.clf.clone() };
    let train = &data.train;
    let trained = train_classifier(
        &train.x,
        &train.one_hot(),
        &method.to_method(set)?,
        &clf_cfg,
        &mut root.derive(streams::CLASSIFIER),
    )?;
    if cfg.save_checkpoints {
        save_checkpoint(
            &Checkpoint::from_classifier(&trained)?,
            &out.join("checkpoints").join(format!("classifier_{name}_seed{seed}.ckpt.json")),
        )?;
    }
    let val_idx = &trained.validation_indices;
    let val_x = train.x.select_rows(val_idx);
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| train.labels[i]).collect();
    let seed_s = seed.to_string();
    let eval = evaluate(
        Scored {
            test_logits: trained.net.predict_logits(&data.test.x)?,
            ood_probs: softmax(&trained.net.predict_logits(&data.ood.x)?),
            validation: Some((trained.net.predict_logits(&val_x)?, val_labels.clone())),
            selected_epoch: Some(trained.selected_epoch),
            data,
        },
        cfg,
        &seed_s,
    )?;
    tables.record(&name, &seed_s, &eval);
    rows.push(ResultRow { seed: seed_s.clone(), method: name.clone(), outcome: Ok(eval.metrics) });

    if trained.net.spec().dropout_rate > 0.0 {
        let mc_name = format!("{name}-mcdo");
        let mut rng = root.derive(streams::MC_DROPOUT);
        let passes = cfg.mc_dropout_passes;
        let outcome = (|| {
            let scored = Scored {
                test_logits: log_probs(&mc_dropout_predict(&trained.net, &data.test.x, passes, &mut rng)?),
                ood_probs: mc_dropout_predict(&trained.net, &data.ood.x, passes, &mut rng)?,
                validation: Some((
                    log_probs(&mc_dropout_predict(&trained.net, &val_x, passes, &mut rng)?),
                    val_labels.clone(),
                )),
                selected_epoch: Some(trained.selected_epoch),
                data,
            };
            evaluate(scored, cfg, &seed_s)
        })();
        match outcome {
            Ok(eval) => {
                tables.record(&mc_name, &seed_s, &eval);
                rows.push(ResultRow { seed: seed_s.clone(), method: mc_name, outcome: Ok(eval.metrics) });
            }
            Err(e) => rows.push(ResultRow { seed: seed_s, method: mc_name, outcome: Err(e.to_string()) }),
        }
    }
    Ok(trained.net)
}

fn summary_csv(rows: &[ResultRow]) -> String {
    let mut header = vec!["method".to_string(), "n".to_string()];
    for c in METRIC_COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    let mut out = header.join(",") + "\n";
    for method in order {
        let ok: Vec<[Option<f64>; 14]> = rows
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.metrics().map(CellMetrics::values))
            .collect();
        let mut fields = vec![method.to_owned(), ok.len().to_string()];
        for c in 0..METRIC_COLUMNS.len() {
            let vals: Vec<f64> = ok.iter().filter_map(|v| v[c]).collect();
            let (mean, std) = mean_std(&vals);
            fields.push(mean.map(fmt_f64).unwrap_or_default());
            fields.push(std.map(fmt_f64).unwrap_or_default());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 || values.iter().all(|&v| v == values[0]) {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = RESULT_COLUMNS.join(",") + "\n";
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Runs every (seed, method) cell and writes the report files into
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_atomic(&out.join("config.json"), cfg.to_json()?.as_bytes())?;
    let data = experiment_data(cfg)?;
    let needs_generator = cfg.methods.iter().any(MethodSpec::needs_generator);

    let mut rows = Vec::new();
    let mut tables = Tables::default();
    let mut members: BTreeMap<String, Vec<Mlp>> = BTreeMap::new();
    for (si, &seed) in cfg.seeds.iter().enumerate() {
        let generator = needs_generator.then(|| train_seed_generator(cfg, &data, seed, &out).map_err(|e| e.to_string()));
        if si == 0 {
            if let Some(Ok((_, paths))) = &generator {
                for (id, path) in paths.iter().take(cfg.export_paths).enumerate() {
                    let mut buf = Vec::new();
                    write_path_csv(path, &mut buf)?;
                    write_atomic(&out.join(format!("path_{id}.csv")), &buf)?;
                }
            }
        }
        let models = SeedModels { generator };
        for method in &cfg.methods {
            let name = method.name();
            match run_cell(cfg, &data, seed, method, &models, &mut tables, &mut rows, &out) {
                Ok(net) => members.entry(name).or_default().push(net),
                Err(e) => rows.push(ResultRow { seed: seed.to_string(), method: name, outcome: Err(e.to_string()) }),
            }
        }
    }

    if cfg.ensemble {
        for method in &cfg.methods {
            let name = method.name();
            let ens_name = format!("{name}-ens");
            let Some(nets) = members.get(&name) else {
                rows.push(ResultRow { seed: "ens".into(), method: ens_name, outcome: Err("no trained members".into()) });
                continue;
            };
            let outcome = (|| {
                if cfg.save_checkpoints {
                    save_checkpoint(
                        &Checkpoint::from_ensemble(nets),
                        &out.join("checkpoints").join(format!("ensemble_{name}.ckpt.json")),
                    )?;
                }
                let scored = Scored {
                    test_logits: log_probs(&ensemble_predict(nets, &data.test.x)?),
                    ood_probs: ensemble_predict(nets, &data.ood.x)?,
                    validation: None,
                    selected_epoch: None,
                    data: &data,
                };
                evaluate(scored, cfg, "ens")
            })();
            match outcome {
                Ok(eval) => {
                    tables.record(&ens_name, "ens", &eval);
                    rows.push(ResultRow { seed: "ens".into(), method: ens_name, outcome: Ok(eval.metrics) });
                }
                Err(e) => rows.push(ResultRow { seed: "ens".into(), method: ens_name, outcome: Err(e.to_string()) }),
            }
        }
    }

    for (method, lines) in &tables.reliability {
        let body = format!("seed,bin,count,confidence,accuracy\n{}\n", lines.join("\n"));
        write_atomic(&out.join(format!("reliability_{method}.csv")), body.as_bytes())?;
    }
    for (method, lines) in &tables.sweeps {
        let body = format!("seed,temperature,nll_val,ace_val,nll_test,ace_test\n{}\n", lines.join("\n"));
        write_atomic(&out.join(format!("sweep_temp_{method}.csv")), body.as_bytes())?;
    }
    write_atomic(&out.join("results.csv"), results_csv(&rows).as_bytes())?;
    write_atomic(&out.join("summary.csv"), summary_csv(&rows).as_bytes())?;
    Ok(ExperimentReport { rows, output_dir: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_is_zero_only_for_identical_values() {
        assert_eq!(mean_std(&[0.3, 0.3, 0.3]), (Some(0.3), Some(0.0)));
        assert_eq!(mean_std(&[1.0]), (Some(1.0), Some(0.0)));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[]), (None, None));
    }

    #[test]
    fn error_rows_keep_the_column_count() {
        let row = ResultRow { seed: "1".into(), method: "base".into(), outcome: Err("bad, worse".into()) };
        let line = row.csv_line();
        assert_eq!(line.split(',').count(), RESULT_COLUMNS.len());
        assert!(line.ends_with("bad; worse"));
    }
}

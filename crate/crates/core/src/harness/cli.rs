//! Command-line entry point.
//!
//! Every subcommand reads the experiment config (`--config`, optional) and
//! `--set key=value` overrides, and writes into the configured output
//! directory. Usage errors exit with code 2, runtime errors with code 1.

use std::ffi::OsString;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointKind};
use super::config::{ExperimentConfig, MethodSpec};
use super::experiment::{experiment_data, run_experiment, streams, ExperimentData};
use super::files::write_atomic;
use super::tables::{dataset_csv, parse_set_csv, set_csv};
use crate::attack::{
    build_omada_set, generate_paths, write_path_csv, AugmentationSet, LabelMode, SampleMode,
};
use crate::csvfmt::fmt_f64;
use crate::error::{Error, Result};
use crate::manifold::train_generative;
use crate::metrics::{
    accuracy, ace, auroc, ece, mmc, nll, sparsification_error, sweep_temperature, Predictions,
};
use crate::tensor::{Matrix, Mlp, Rng};
use crate::train::{ensemble_predict, train_classifier};

#[derive(Debug, Parser)]
#[command(name = "omada", version, about = "On-manifold adversarial data augmentation experiments")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config merged over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set clf.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Run seed (defaults to the first configured seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SampleArg {
    Uniform,
    Entropy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelArg {
    Soft,
    Hard,
    Uniform,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write train.csv, test.csv and ood.csv.
    GenData(Common),
    /// Train the generative model and latent classifier.
    TrainGen(Common),
    /// Build an OMADA augmentation set from a generative checkpoint.
    BuildSet {
        #[command(flatten)]
        common: Common,
        /// Generative checkpoint (default: <out>/genmodel.ckpt.json).
        #[arg(long)]
        gen: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "entropy")]
        sample: SampleArg,
        #[arg(long, value_enum, default_value = "soft")]
        label: LabelArg,
    },
    /// Train one classifier.
    TrainClf {
        #[command(flatten)]
        common: Common,
        /// Method name, e.g. base, omada-se-u or mixup. Settings come from the
        /// config entry of that name when there is one.
        #[arg(long, default_value = "base")]
        method: String,
        /// Augmentation set CSV for OMADA methods (default: <out>/omada_set.csv).
        #[arg(long)]
        set_file: Option<PathBuf>,
    },
    /// Evaluate a classifier or ensemble checkpoint on the test and OOD sets.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write sweep_temp.csv for a classifier checkpoint.
    SweepTemp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Export attack paths of a generative checkpoint as path_<id>.csv.
    Paths {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gen: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        count: usize,
    },
    /// Run the full experiment.
    Run(Common),
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.sets)
    }

    fn seed(&self, cfg: &ExperimentConfig) -> u64 {
        self.seed.unwrap_or(cfg.seeds[0])
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn cli_dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn default_gen_path(cfg: &ExperimentConfig, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| cfg.output_dir.join("genmodel.ckpt.json"))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenData(common) => {
            let cfg = common.load()?;
            let data = experiment_data(&cfg)?;
            for (name, set) in [("train", &data.train), ("test", &data.test), ("ood", &data.ood)] {
                write_atomic(&cfg.output_dir.join(format!("{name}.csv")), dataset_csv(set).as_bytes())?;
            }
            println!("wrote {} train, {} test, {} ood rows", data.train.len(), data.test.len(), data.ood.len());
        }
        Command::TrainGen(common) => {
            let cfg = common.load()?;
            let seed = common.seed(&cfg);
            let data = experiment_data(&cfg)?;
            let t = &data.train;
            let (gm, lc, history) = train_generative(
                &t.x,
                &t.labels,
                t.num_classes,
                &cfg.gen,
                &mut Rng::new(seed).derive(streams::GENERATOR),
            )?;
            let dest = cfg.output_dir.join("genmodel.ckpt.json");
            save_checkpoint(&Checkpoint::from_genmodel(&gm, &lc, &history)?, &dest)?;
            if let Some(last) = history.epochs.last() {
                println!(
                    "reconstruction {} latent accuracy {}",
                    fmt_f64(last.reconstruction),
                    fmt_f64(last.latent_accuracy)
                );
            }
            println!("wrote {}", dest.display());
        }
        Command::BuildSet { common, gen, sample, label } => {
            let cfg = common.load()?;
            let seed = common.seed(&cfg);
            let (gm, lc, _) = load_checkpoint(&default_gen_path(&cfg, gen))?.to_genmodel()?;
            let data = experiment_data(&cfg)?;
            let sample_mode = match sample {
                SampleArg::Uniform => SampleMode::UniformAlongPath,
                SampleArg::Entropy => SampleMode::EntropyWeighted,
            };
            let label_mode = match label {
                LabelArg::Soft => LabelMode::Soft,
                LabelArg::Hard => LabelMode::Hard,
                LabelArg::Uniform => LabelMode::Uniform,
            };
            let set = build_omada_set(
                &gm,
                &lc,
                &data.train.x,
                &data.train.labels,
                &cfg.attack,
                &cfg.omada.set_config(sample_mode, label_mode),
                &mut Rng::new(seed).derive(streams::PATHS),
            )?;
            let dest = cfg.output_dir.join("omada_set.csv");
            write_atomic(&dest, set_csv(&set).as_bytes())?;
            println!("wrote {} samples to {}", set.len(), dest.display());
        }
        Command::TrainClf { common, method, set_file } => {
            let cfg = common.load()?;
            let seed = common.seed(&cfg);
            let spec = cfg
                .methods
                .iter()
                .find(|m| m.name() == method)
                .cloned()
                .or_else(|| MethodSpec::from_name(&method))
                .ok_or_else(|| Error::invalid(format!("unknown method '{method}'")))?;
            let set = match &spec {
                MethodSpec::Omada { .. } => Some(read_set(&set_file.unwrap_or_else(|| cfg.output_dir.join("omada_set.csv")))?),
                _ => None,
            };
            let data = experiment_data(&cfg)?;
            let clf_cfg = crate::train::ClfTrainConfig { seed, ..cfg.clf.clone() };
            let trained = train_classifier(
                &data.train.x,
                &data.train.one_hot(),
                &spec.to_method(set)?,
                &clf_cfg,
                &mut Rng::new(seed).derive(streams::CLASSIFIER),
            )?;
            let dest = cfg.output_dir.join(format!("classifier_{method}.ckpt.json"));
            save_checkpoint(&Checkpoint::from_classifier(&trained)?, &dest)?;
            println!("selected epoch {}; wrote {}", trained.selected_epoch, dest.display());
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.load()?;
            let data = experiment_data(&cfg)?;
            let nets = load_nets(&checkpoint)?;
            let bins = cfg.metrics.bins;
            let preds = Predictions::new(ensemble_predict(&nets, &data.test.x)?, data.test.labels.clone())?;
            let ood = Predictions::unlabeled(ensemble_predict(&nets, &data.ood.x)?)?;
            let rows = [
                ("accuracy", accuracy(&preds)?),
                ("ace", ace(&preds, bins)?),
                ("ece", ece(&preds, bins)?),
                ("nll", nll(&preds)?),
                ("auroc", auroc(&preds.confidences(), &ood.confidences())?),
                ("mmc_ood", mmc(&ood)?),
                ("sparsification", sparsification_error(&preds)?),
            ];
            println!("metric,value");
            for (k, v) in rows {
                println!("{k},{}", fmt_f64(v));
            }
        }
        Command::SweepTemp { common, checkpoint } => {
            let cfg = common.load()?;
            let data = experiment_data(&cfg)?;
            let clf = load_checkpoint(&checkpoint)?.to_classifier()?;
            let sweep = sweep_for(&clf.net, &clf.validation_indices, &data, &cfg)?;
            let mut body = String::from("temperature,nll_val,ace_val,nll_test,ace_test\n");
            for r in &sweep.rows {
                body.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f64(r.temperature),
                    fmt_f64(r.nll_val),
                    fmt_f64(r.ace_val),
                    fmt_f64(r.nll_test),
                    fmt_f64(r.ace_test)
                ));
            }
            write_atomic(&cfg.output_dir.join("sweep_temp.csv"), body.as_bytes())?;
            println!(
                "argmin nll {} argmin ace {} differ {}",
                fmt_f64(sweep.argmin_nll),
                fmt_f64(sweep.argmin_ace),
                sweep.optima_differ
            );
        }
        Command::Paths { common, gen, count } => {
            let cfg = common.load()?;
            let seed = common.seed(&cfg);
            let (gm, lc, _) = load_checkpoint(&default_gen_path(&cfg, gen))?.to_genmodel()?;
            let data = experiment_data(&cfg)?;
            let paths = generate_paths(
                &gm,
                &lc,
                &data.train.x,
                &data.train.labels,
                count,
                cfg.omada.boundary_targets,
                &cfg.attack,
                &mut Rng::new(seed).derive(streams::PATHS),
            )?;
            for (id, path) in paths.iter().enumerate() {
                let mut buf = Vec::new();
                write_path_csv(path, &mut buf)?;
                write_atomic(&cfg.output_dir.join(format!("path_{id}.csv")), &buf)?;
            }
            println!("wrote {} paths", paths.len());
        }
        Command::Run(common) => {
            let mut cfg = common.load()?;
            if let Some(seed) = common.seed {
                cfg.seeds = vec![seed];
            }
            let report = run_experiment(&cfg)?;
            let failed = report.rows.iter().filter(|r| r.outcome.is_err()).count();
            println!(
                "{} result rows ({failed} failed) in {}",
                report.rows.len(),
                report.output_dir.display()
            );
        }
    }
    Ok(())
}

fn read_set(path: &Path) -> Result<AugmentationSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_set_csv(BufReader::new(file))
}

fn load_nets(path: &Path) -> Result<Vec<Mlp>> {
    let ckpt = load_checkpoint(path)?;
    match ckpt.kind {
        CheckpointKind::Classifier => Ok(vec![ckpt.to_classifier()?.net]),
        CheckpointKind::Ensemble => ckpt.to_ensemble(),
        CheckpointKind::Genmodel => Err(Error::invalid("expected a classifier or ensemble checkpoint")),
    }
}

fn sweep_for(
    net: &Mlp,
    validation: &[usize],
    data: &ExperimentData,
    cfg: &ExperimentConfig,
) -> Result<crate::metrics::TemperatureSweep> {
    if validation.is_empty() {
        return Err(Error::invalid("checkpoint carries no validation rows"));
    }
    let val_x: Matrix = data.train.x.select_rows(validation);
    let val_labels: Vec<usize> = validation.iter().map(|&i| data.train.labels[i]).collect();
    sweep_temperature(
        &net.predict_logits(&val_x)?,
        &val_labels,
        &net.predict_logits(&data.test.x)?,
        &data.test.labels,
        &cfg.metrics.grid()?,
        cfg.metrics.bins,
    )
}

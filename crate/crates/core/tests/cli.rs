//! Command-line behaviour: exit codes, produced files and their schemas.

use std::path::Path;
use std::process::Command;

use omada::harness::checkpoint::load_checkpoint;
use omada::harness::cli::cli_dispatch;
use omada::harness::experiment::RESULT_COLUMNS;

const FAST: [&str; 7] = [
    "gen.epochs=3",
    "clf.epochs=2",
    "clf.lr_milestones=[1]",
    "attack.steps=50",
    "omada.set_size=60",
    "test_per_class=50",
    "seeds=[0]",
];

fn args(cmd: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec!["omada".to_string(), cmd.to_string()];
    for s in FAST {
        v.push("--set".into());
        v.push(s.into());
    }
    v.push("--set".into());
    v.push(format!("output_dir={}", out.display()));
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn binary_without_arguments_is_a_usage_error() {
    let status = Command::new(env!("CARGO_BIN_EXE_omada")).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn usage_and_help_exit_codes() {
    assert_eq!(cli_dispatch(["omada"]), 2);
    assert_eq!(cli_dispatch(["omada", "frobnicate"]), 2);
    assert_eq!(cli_dispatch(["omada", "--help"]), 0);
    assert_eq!(cli_dispatch(["omada", "build-set", "--sample", "sideways"]), 2);
}

#[test]
fn bad_config_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli_dispatch(args("gen-data", dir.path(), &["--set", "no_such_key=1"])), 1);
    assert_eq!(cli_dispatch(args("gen-data", dir.path(), &["--set", "clf.batch_size=0"])), 1);
    let missing = dir.path().join("missing.json");
    assert_eq!(cli_dispatch(args("gen-data", dir.path(), &["--config", missing.to_str().unwrap()])), 1);
}

#[test]
fn stepwise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    assert_eq!(cli_dispatch(args("gen-data", out, &[])), 0);
    assert_eq!(header(&out.join("train.csv")), "x_0,x_1,label");
    assert!(out.join("test.csv").exists() && out.join("ood.csv").exists());

    assert_eq!(cli_dispatch(args("train-gen", out, &[])), 0);
    let gen = load_checkpoint(&out.join("genmodel.ckpt.json")).unwrap();
    assert!(gen.to_genmodel().is_ok());

    assert_eq!(cli_dispatch(args("build-set", out, &["--sample", "uniform", "--label", "hard"])), 0);
    let set = std::fs::read_to_string(out.join("omada_set.csv")).unwrap();
    assert!(set.starts_with("x_0,x_1,p_class_0,p_class_1,p_class_2,path_id,step_index\n"));
    assert_eq!(set.lines().count(), 61);

    assert_eq!(cli_dispatch(args("train-clf", out, &["--method", "omada-h"])), 0);
    let ckpt = out.join("classifier_omada-h.ckpt.json");
    assert!(load_checkpoint(&ckpt).unwrap().to_classifier().is_ok());
    assert_eq!(cli_dispatch(args("train-clf", out, &["--method", "mixup"])), 0);
    assert_eq!(cli_dispatch(args("train-clf", out, &["--method", "no-such-method"])), 1);

    let ckpt = ckpt.to_str().unwrap();
    assert_eq!(cli_dispatch(args("eval", out, &["--checkpoint", ckpt])), 0);
    assert_eq!(cli_dispatch(args("sweep-temp", out, &["--checkpoint", ckpt])), 0);
    let sweep = std::fs::read_to_string(out.join("sweep_temp.csv")).unwrap();
    assert_eq!(sweep.lines().next().unwrap(), "temperature,nll_val,ace_val,nll_test,ace_test");
    assert_eq!(sweep.lines().count(), 201);

    assert_eq!(cli_dispatch(args("paths", out, &["--count", "2"])), 0);
    for id in 0..2 {
        let path = out.join(format!("path_{id}.csv"));
        assert_eq!(header(&path), "step,z1,z2,p_class_0,p_class_1,p_class_2,entropy");
        let text = std::fs::read_to_string(&path).unwrap();
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').count(), 7);
        }
    }
}

#[test]
fn run_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let extra = ["--set", "methods=[{\"kind\":\"base\"},{\"kind\":\"omada\",\"sample_mode\":\"entropy_weighted\"}]"];
    assert_eq!(cli_dispatch(args("run", out, &extra)), 0);
    for file in ["config.json", "results.csv", "summary.csv", "reliability_base.csv", "sweep_temp_omada-se.csv"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(lines.next().unwrap(), RESULT_COLUMNS.join(","));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.starts_with("0,base,ok,")));
    assert!(rows.iter().any(|r| r.starts_with("0,omada-se,ok,")));
    for r in rows {
        assert_eq!(r.split(',').count(), RESULT_COLUMNS.len());
    }
}

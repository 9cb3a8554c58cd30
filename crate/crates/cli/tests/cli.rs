use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use porepinn::config::{preset, Scale};
use porepinn::experiment::ExperimentConfig;
use porepinn::model::ArchSpec;

fn porepinn(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_porepinn"))
        .args(args)
        .env("POREPINN_OUT", out_root)
        .env_remove("POREPINN_JOBS")
        .output()
        .expect("binary runs")
}

/// Writes a config holding preset `name` shrunk to seconds of work.
fn tiny_config(dir: &Path, name: &str) -> PathBuf {
    let mut c = preset(name, Scale::Desk).unwrap();
    c.grid = vec![11, 13];
    c.points.interior = 48;
    c.points.inlet = 12;
    c.points.outlet = 12;
    c.points.wall = 12;
    let outputs = c.arch.outputs();
    let branches: Vec<(&str, usize, usize, bool)> = outputs.iter().map(|o| (o.as_str(), 1, 6, false)).collect();
    c.arch = ArchSpec::standard(2, (2, 10), &branches);
    c.schedule.adam_epochs = 30;
    c.schedule.lbfgs_max_iters = 5;
    let mut e = ExperimentConfig::from_preset(name, Scale::Desk);
    e.preset = None;
    e.case = Some(c);
    e.seed = 5;
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(&e).unwrap()).unwrap();
    path
}

fn ok_status(o: &Output) -> bool {
    matches!(o.status.code(), Some(0) | Some(2))
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn train_is_reproducible_across_processes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "B");
    let cfg = cfg.to_str().unwrap();
    let mut traces = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let o = porepinn(&["train", "--config", cfg, "--quiet", "--out", out.to_str().unwrap()], tmp.path());
        assert!(ok_status(&o), "{}", text(&o));
        for f in ["config.json", "reference.csv", "reference.json", "checkpoint.ppck", "trace.csv", "report.csv", "report.json", "summary.json", "timing.json", "kde_p.csv", "re_histogram_p.csv"] {
            assert!(out.join(f).is_file(), "missing {f}");
        }
        traces.push(fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    let header = String::from_utf8_lossy(&traces[0]);
    assert!(header.starts_with("epoch,phase,"), "{}", header.lines().next().unwrap());
}

#[test]
fn evaluate_and_generate_reference_write_their_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "B");
    let cfg = cfg.to_str().unwrap();
    let refdir = tmp.path().join("ref");
    let o = porepinn(&["generate-reference", "--config", cfg, "--out", refdir.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let reference = refdir.join("reference.csv");
    assert!(reference.is_file() && refdir.join("reference.json").is_file());

    let run = tmp.path().join("run");
    let o = porepinn(
        &["train", "--config", cfg, "--quiet", "--reference", reference.to_str().unwrap(), "--out", run.to_str().unwrap()],
        tmp.path(),
    );
    assert!(ok_status(&o), "{}", text(&o));
    let eval = tmp.path().join("eval");
    let ckpt = run.join("checkpoint.ppck");
    let o = porepinn(
        &["evaluate", "--config", cfg, "--checkpoint", ckpt.to_str().unwrap(), "--reference", reference.to_str().unwrap(), "--out", eval.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(fs::read(eval.join("report.csv")).unwrap(), fs::read(run.join("report.csv")).unwrap());
}

#[test]
fn default_output_goes_under_the_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "B");
    let o = porepinn(&["generate-reference", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(tmp.path().join("reference").join("B").join("reference.csv").is_file());
}

#[test]
fn bad_input_exits_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = porepinn(&["train", "--preset", "no-such-case", "--quiet"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("no-such-case"));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"preset": "B", "sed": 3}"#).unwrap();
    let o = porepinn(&["train", "--config", bad.to_str().unwrap(), "--quiet"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));

    let o = porepinn(&["train", "--preset", "D", "--quiet"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("--source"));

    let o = porepinn(&["train", "--preset", "B", "--weight", "30=1"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn weight_sweep_writes_its_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "B");
    let dir = tmp.path().join("sweep");
    let o = porepinn(
        &["sweep-weights", "--config", cfg.to_str().unwrap(), "--scales", "1,100", "--quiet", "--out", dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(ok_status(&o), "{}", text(&o));
    let table = fs::read_to_string(dir.join("weights.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("lambda,e_final,remaining_loss,inlet_v_relative_l2,p_relative_l2"));
    assert_eq!(lines.count(), 2);
}

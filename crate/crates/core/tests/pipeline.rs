use std::path::{Path, PathBuf};
use std::process::Command;

use oncopipe::pipeline::synth::{synth_cohort, CohortSpec, PhantomSpec};
use oncopipe::pipeline::{run_pipeline, PipelineConfig, RunOptions, RunReport, Stage, REPORT_FILE};

fn small_cohort(dir: &Path, patients: usize) -> PipelineConfig {
    let spec = CohortSpec {
        patients,
        phantom: PhantomSpec {
            dims: [16, 16, 16],
            ..Default::default()
        },
        ..Default::default()
    };
    synth_cohort(&spec, 3, dir).unwrap();
    PipelineConfig::load(&dir.join("config.toml")).unwrap()
}

fn imaging_only(mut cfg: PipelineConfig) -> PipelineConfig {
    cfg.stages = vec![Stage::Preprocess, Stage::Ensemble, Stage::Crf, Stage::Metrics];
    cfg
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oncopipe"));
    c.env("ONCOPIPE_THREADS", "2");
    c
}

fn first_ct(dir: &Path) -> PathBuf {
    let mut rdr = csv::Reader::from_path(dir.join("manifest.csv")).unwrap();
    let row = rdr.records().next().unwrap().unwrap();
    dir.join(&row[1])
}

#[test]
fn imaging_stages_score_every_patient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = imaging_only(small_cohort(dir.path(), 5));
    let report = run_pipeline(&cfg, RunOptions::default()).unwrap();
    assert_eq!((report.succeeded, report.failed), (5, 0), "{:?}", report.patients.values().next());
    let seg = report.segmentation.unwrap();
    assert_eq!(seg.scored, 5);
    assert!(seg.refined_mean.unwrap().dsc > 0.5);
    let metrics = std::fs::read_to_string(cfg.output.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 5);
    assert!(report.artifacts.contains_key("metrics.csv"));
}

#[test]
fn unreadable_patient_is_recorded_and_others_continue() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = imaging_only(small_cohort(dir.path(), 4));
    let ct = first_ct(dir.path());
    std::fs::write(&ct, b"not a volume").unwrap();
    let report = run_pipeline(&cfg, RunOptions::default()).unwrap();
    assert_eq!(report.succeeded + report.failed, 4);
    assert_eq!(report.failed, 1);
    assert!(report.has_failures());
    let bad: Vec<_> = report.patients.values().filter(|p| !p.ok).collect();
    assert!(bad[0].error.as_deref().unwrap().contains("raw_json"));
    assert!(run_pipeline(&cfg, RunOptions { strict: true }).is_err());
}

#[test]
fn missing_input_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = imaging_only(small_cohort(dir.path(), 3));
    std::fs::remove_file(first_ct(dir.path())).unwrap();
    let err = run_pipeline(&cfg, RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("ct"), "{err}");
    assert!(!cfg.output.exists());
}

#[test]
fn identical_prediction_and_truth_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    small_cohort(dir.path(), 2);
    let mut rdr = csv::Reader::from_path(dir.path().join("manifest.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let truth_col = headers.iter().position(|h| h == "truth_mask_path").unwrap();
    let mut cases = String::from("patient_id,pred_path,truth_path\n");
    for row in rdr.records() {
        let row = row.unwrap();
        let t = dir.path().join(&row[truth_col]);
        cases += &format!("{},{},{}\n", &row[0], t.display(), t.display());
    }
    let cases_path = dir.path().join("cases.csv");
    std::fs::write(&cases_path, cases).unwrap();
    let out = dir.path().join("scores.csv");
    let st = bin().arg("metrics").arg(&cases_path).arg("-o").arg(&out).status().unwrap();
    assert!(st.success());
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let h = rdr.headers().unwrap().clone();
    let dsc = h.iter().position(|c| c == "dsc").unwrap();
    for row in rdr.records() {
        assert_eq!(row.unwrap()[dsc].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn cli_run_is_reproducible_and_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort");
    let st = bin().args(["synth", "--patients", "12", "--seed", "4", "-o"]).arg(&cohort).status().unwrap();
    assert!(st.success());
    let cfg = cohort.join("config.toml");
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let st = bin().arg("run").arg("--config").arg(&cfg).arg("-o").arg(&out).status().unwrap();
        assert!(matches!(st.code(), Some(0 | 1)));
        reports.push(std::fs::read(out.join(REPORT_FILE)).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report: RunReport = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(report.succeeded + report.failed, 12);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 1\nno_such_key = 3\n").unwrap();
    let st = bin().arg("run").arg("--config").arg(&bad).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn cli_loss_eval_prints_the_value() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.json");
    std::fs::write(&p, r#"{"y": [1, 0, 1], "p": [1, 0, 1]}"#).unwrap();
    let out = bin().arg("loss-eval").arg(&p).args(["--kind", "dice"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.trim().ends_with('0'), "{text}");
}

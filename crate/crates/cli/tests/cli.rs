//! Command-line behaviour, exercised through the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use twopath::metrics::bin_average;
use twopath::oracle::PosteriorVector;
use twopath::sweep::read_sweep_csv;

fn twopath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twopath")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = twopath(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = twopath(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn csv_rows(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

#[test]
fn generate_row_counts_and_determinism() {
    let t = TempDir::new().unwrap();
    let (a, b, z) = (t.path().join("a"), t.path().join("b"), t.path().join("z"));
    ok(&["generate", "--preset", "small-error-1d", "--samples", "10", "--out", s(&a)]);
    ok(&["generate", "--preset", "small-error-1d", "--samples", "10", "--out", s(&b)]);
    ok(&["generate", "--samples", "0", "--out", s(&z)]);
    let rows = csv_rows(&a.join("dataset.csv"));
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0], "y,x0");
    assert_eq!(csv_rows(&z.join("dataset.csv")), vec!["y,x0"]);
    for f in ["dataset.csv", "dataset.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let sidecar: serde_json::Value = serde_json::from_slice(&fs::read(a.join("dataset.json")).unwrap()).unwrap();
    assert_eq!(sidecar["samples"], 10);
    assert_eq!(sidecar["model"]["weights"][0], 0.5);
}

#[test]
fn train_separable_and_rerun() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(
        t.path(),
        "sep.json",
        r#"{"model": {"weights": [0.5, 0.5], "components": [{"mu": -6.0, "sigma": 0.5}, {"mu": 6.0, "sigma": 0.5}]},
            "samples": 400, "mlp": {"learning_rate": 0.01}}"#,
    );
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["generate", "--config", s(&cfg), "--out", s(&a)]);
    let data = a.join("dataset.csv");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&a)]);
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&b)]);
    assert_eq!(fs::read(a.join("model.json")).unwrap(), fs::read(b.join("model.json")).unwrap());
    assert_eq!(fs::read(a.join("train_report.csv")).unwrap(), fs::read(b.join("train_report.csv")).unwrap());

    let report = csv_rows(&a.join("train_report.csv"));
    assert_eq!(report[0], "stage,epoch,loss");
    assert_eq!(report.len(), 1 + 1 + 30 + 1);
    let last = report.last().unwrap();
    assert!(last.starts_with("final,30,"));
    let loss: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(loss < 0.01, "final loss {loss}");
}

#[test]
fn train_rejects_mismatched_dimensions_before_writing() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    ok(&["generate", "--samples", "50", "--out", s(&d)]);
    let out = t.path().join("never");
    let err = fails(&["train", "--preset", "ten-digit-2d", "--data", s(&d.join("dataset.csv")), "--out", s(&out)]);
    assert!(err.contains("input_dim"), "{err}");
    assert!(!out.exists());
}

#[test]
fn train_names_the_offending_cell() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("bad.csv");
    fs::write(&data, "y,x0\n0,1.5\n1,oops\n").unwrap();
    let err = fails(&["train", "--data", s(&data), "--out", s(&t.path().join("o"))]);
    assert!(err.contains("row 2") && err.contains("x0"), "{err}");
}

#[test]
fn eval_rows_and_recomputed_metrics() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    ok(&["generate", "--samples", "500", "--out", s(&d)]);
    ok(&["train", "--data", s(&d.join("dataset.csv")), "--epochs", "2", "--out", s(&d)]);
    let ckpt = d.join("model.json");
    ok(&["eval", "--checkpoint", s(&ckpt), "--out", s(&d)]);
    let text = fs::read(d.join("eval.csv")).unwrap();
    let (records, sentinels) = read_sweep_csv(&text[..]).unwrap();
    assert_eq!((records.len(), sentinels), (142, 0));
    for r in &records {
        assert_eq!(r.params.unwrap().mu1, -2.0);
        let p = PosteriorVector::new(r.p_true.clone()).unwrap();
        let q = PosteriorVector::new(r.q_pred.clone()).unwrap();
        let m = twopath::metrics::PrecisionPair::between(&p, &q).unwrap();
        assert!((m.kl - r.kl).abs() < 1e-12 && (m.abs_diff - r.abs_diff).abs() < 1e-12);
    }

    let one = write_config(t.path(), "one.json", r#"{"locations": {"range": {"start": 1.0, "stop": 1.0, "step": 0.5}}}"#);
    let o = t.path().join("one");
    ok(&["eval", "--config", s(&one), "--checkpoint", s(&ckpt), "--out", s(&o)]);
    assert_eq!(csv_rows(&o.join("eval.csv")).len(), 2);

    let err = fails(&["eval", "--preset", "ten-digit-2d", "--checkpoint", s(&ckpt), "--out", s(&o)]);
    assert!(err.contains("input_dim"), "{err}");
}

#[test]
fn invalid_configuration_has_no_side_effects() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("o");
    let err = fails(&["generate", "--preset", "mnist", "--out", s(&out)]);
    assert!(err.contains("large-error-1d"), "{err}");
    let bad = write_config(t.path(), "bad.json", r#"{"mlp": {"batch_size": 0}}"#);
    fails(&["sweep", "--config", s(&bad), "--out", s(&out)]);
    let typo = write_config(t.path(), "typo.json", r#"{"sampels": 4}"#);
    fails(&["generate", "--config", s(&typo), "--out", s(&out)]);
    fails(&["sweep", "--parallelism", "0", "--out", s(&out)]);
    fails(&["generate", "--config", s(&t.path().join("missing.json")), "--out", s(&out)]);
    assert!(!out.exists());
}

const SMALL_GRID: &str = r#"{"grid": {"priors": [0.3, 0.7], "mu1": [0, 6], "sigma1": [1, 4], "sigma2": [2]},
    "samples": 300, "mlp": {"epochs": 2}}"#;

#[test]
fn sweep_file_contract_and_parallel_determinism() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), "grid.json", SMALL_GRID);
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["sweep", "--config", s(&cfg), "--out", s(&a), "--parallelism", "1"]);
    ok(&["sweep", "--config", s(&cfg), "--out", s(&b), "--parallelism", "3"]);
    let names = [
        "sweep.csv",
        "manifest.json",
        "failures.csv",
        "marginal_prior.csv",
        "marginal_mu1.csv",
        "marginal_sigma_pair.csv",
        "scatter.csv",
        "binned_kl_density.csv",
        "binned_kl_sparsity.csv",
        "binned_abs_diff_density.csv",
        "binned_abs_diff_sparsity.csv",
    ];
    for f in names {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(csv_rows(&a.join("sweep.csv")).len(), 1 + 8 * 142);
    assert_eq!(csv_rows(&a.join("scatter.csv")).len(), 1 + 8 * 142);
    assert_eq!(csv_rows(&a.join("failures.csv")), vec!["index,p1,mu1,sigma1,sigma2,message"]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["points"], 8);
    assert_eq!(manifest["failure_count"], 0);
    assert_eq!(manifest["master_seed"], 0);
    assert_eq!(manifest["mlp"]["epochs"], 2);
    assert!(manifest.get("parallelism").is_none());
}

#[test]
fn paper_scale_is_gated() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("p");
    let plan = ok(&["sweep", "--paper-scale", "--out", s(&out)]);
    assert!(plan.contains("9000 grid points") && plan.contains("1278000 records"), "{plan}");
    assert!(!out.exists());
    fails(&["sweep", "--confirm", "--out", s(&out)]);
}

#[test]
fn report_figures_match_recomputation() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), "grid.json", SMALL_GRID);
    let sw = t.path().join("sweep");
    ok(&["sweep", "--config", s(&cfg), "--out", s(&sw)]);
    let rep = t.path().join("report");
    let listed = ok(&["report", "--sweep", s(&sw), "--out", s(&rep), "--bins", "12", "--svg"]);
    for fig in ["fig2a", "fig2b", "fig2c", "fig2d", "fig2e", "fig2f", "fig3a", "fig3b", "fig3c", "fig3d"] {
        assert!(rep.join(format!("{fig}.csv")).is_file(), "{fig}.csv");
        let svg = fs::read_to_string(rep.join(format!("{fig}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    assert_eq!(listed.lines().count(), 20);

    let (records, _) = read_sweep_csv(&fs::read(sw.join("sweep.csv")).unwrap()[..]).unwrap();
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.sparsity, r.abs_diff)).collect();
    let mut want = Vec::new();
    bin_average(&pts, 12).unwrap().write_csv(&mut want).unwrap();
    assert_eq!(fs::read(rep.join("fig3d.csv")).unwrap(), want);
    assert_eq!(csv_rows(&rep.join("fig2e.csv")).len(), 1 + 2);

    let empty = t.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let err = fails(&["report", "--sweep", s(&empty)]);
    assert!(err.contains("sweep.csv") && err.contains("manifest.json"), "{err}");
}

#[test]
fn path_rows_and_constant_path() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    ok(&["generate", "--preset", "ten-digit-2d", "--samples", "2000", "--out", s(&d)]);
    ok(&["train", "--preset", "ten-digit-2d", "--data", s(&d.join("dataset.csv")), "--epochs", "2", "--out", s(&d)]);
    let ckpt = d.join("model.json");
    ok(&["path", "--preset", "ten-digit-2d", "--checkpoint", s(&ckpt), "--out", s(&d)]);
    let rows = csv_rows(&d.join("path.csv"));
    assert_eq!(rows.len(), 17);
    assert!(rows[0].starts_with("sample,v0,v1,density,sparsity,p_true_0"));

    let c = t.path().join("c");
    ok(&["path", "--preset", "ten-digit-2d", "--checkpoint", s(&ckpt), "--out", s(&c), "--start=3,3", "--end=3,3", "--points", "4"]);
    let rows = csv_rows(&c.join("path.csv"));
    assert_eq!(rows.len(), 5);
    let strip = |r: &str| r.split_once(',').unwrap().1.to_string();
    assert!(rows[1..].iter().all(|r| strip(r) == strip(&rows[1])));

    let err = fails(&["path", "--checkpoint", s(&ckpt), "--out", s(&c)]);
    assert!(err.contains("2-D"), "{err}");
}

/// Three collinear, well separated clusters: the density valleys sit at the
/// midpoints `v0 = -5` and `v0 = 5`, where the posterior switches class.
#[test]
fn path_error_peaks_sit_in_density_valleys() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(
        t.path(),
        "three.json",
        r#"{"model": {"weights": [0.3333333333333333, 0.3333333333333333, 0.33333333333333337],
                      "components": [{"mu": [-10.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]},
                                     {"mu": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]},
                                     {"mu": [10.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]}]},
            "embedding": {"dim": 8, "seed": 5},
            "samples": 6000,
            "path": {"start": [-10.0, 0.0], "end": [10.0, 0.0], "num_samples": 81}}"#,
    );
    let d = t.path().join("d");
    ok(&["generate", "--config", s(&cfg), "--out", s(&d)]);
    ok(&["train", "--config", s(&cfg), "--data", s(&d.join("dataset.csv")), "--epochs", "5", "--out", s(&d)]);
    ok(&["path", "--config", s(&cfg), "--checkpoint", s(&d.join("model.json")), "--out", s(&d)]);

    let rows = csv_rows(&d.join("path.csv"));
    let header: Vec<&str> = rows[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (v0, dens, kl) = (col("v0"), col("density"), col("kl"));
    let parsed: Vec<Vec<f64>> =
        rows[1..].iter().map(|r| r.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    for (lo, hi, valley) in [(-10.0, 0.0, -5.0), (0.0, 10.0, 5.0)] {
        let half: Vec<&Vec<f64>> = parsed.iter().filter(|r| r[v0] > lo && r[v0] < hi).collect();
        let peak = half.iter().max_by(|a, b| a[kl].total_cmp(&b[kl])).unwrap();
        let min_density = half.iter().min_by(|a, b| a[dens].total_cmp(&b[dens])).unwrap();
        assert!((min_density[v0] - valley).abs() < 0.3, "density valley at {}", min_density[v0]);
        assert!((peak[v0] - valley).abs() <= 1.5, "error peak at {} (valley {valley})", peak[v0]);
    }
}

#[test]
fn presets_listing() {
    let list = ok(&["presets"]);
    assert_eq!(list.lines().count(), 3);
    let json = ok(&["presets", "--json"]);
    assert!(json.contains("large-error-1d: {\"weights\":[0.6,0.4]"), "{json}");
}

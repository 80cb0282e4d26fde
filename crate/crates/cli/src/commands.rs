use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use twopath::embedding::{sample_embedded, ReconstructiveMap};
use twopath::generator::{AnyMixture, LabeledDataset, Mixture, PRESET_NAMES};
use twopath::metrics::{bin_average, BinnedSeries};
use twopath::nn::{train, MlpConfig, MlpModel};
use twopath::rng::RngKey;
use twopath::sweep::{
    evaluate_model_1d, evaluate_plane, marginalize, run_path, run_sweep, scatter_factors, write_failures_csv,
    write_scatter_csv, EvalRecord, EvalSpec, Factor, GridSpec, PathSpec, RecordWriter, SweepManifest,
};

use crate::config::{RunConfig, DEFAULT_PATH_SAMPLES, DEFAULT_SAMPLES, DEFAULT_SWEEP_SAMPLES};

pub const DATASET_CSV: &str = "dataset.csv";
pub const DATASET_JSON: &str = "dataset.json";
pub const CHECKPOINT: &str = "model.json";
pub const TRAIN_REPORT: &str = "train_report.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const MANIFEST: &str = "manifest.json";
pub const FAILURES_CSV: &str = "failures.csv";
pub const SCATTER_CSV: &str = "scatter.csv";
pub const PATH_CSV: &str = "path.csv";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Input dimension seen by the network.
fn input_dim(model: &AnyMixture, map: Option<&ReconstructiveMap>) -> usize {
    map.map_or(model.dim(), ReconstructiveMap::dim)
}

#[derive(Serialize)]
struct DatasetSidecar<'a> {
    model: &'a AnyMixture,
    embedding: Option<&'a ReconstructiveMap>,
    samples: usize,
    seed: u64,
}

pub fn generate(cfg: &RunConfig) -> Result<PathBuf> {
    let model = cfg.mixture()?;
    let map = cfg.map_for(&model)?;
    let n = cfg.samples.unwrap_or(DEFAULT_SAMPLES);
    let key = RngKey::new(cfg.seed(), 0);
    let data = match (&model, &map) {
        (AnyMixture::OneD(m), _) => m.sample(n, key),
        (AnyMixture::TwoD(m), Some(map)) => sample_embedded(m, map, n, key)?,
        (AnyMixture::TwoD(_), None) => unreachable!("2-D models always have an embedding"),
    };

    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let mut w = create(&out, DATASET_CSV)?;
    data.write_csv(&mut w)?;
    w.flush()?;
    let sidecar = DatasetSidecar { model: &model, embedding: map.as_ref(), samples: n, seed: cfg.seed() };
    write_json(&out, DATASET_JSON, &sidecar)?;
    Ok(out.join(DATASET_CSV))
}

pub fn train_cmd(cfg: &RunConfig, dataset: &Path) -> Result<PathBuf> {
    let model = cfg.mixture()?;
    let map = cfg.map_for(&model)?;
    let dim = input_dim(&model, map.as_ref());
    let k = model.num_components();
    let mlp = cfg.mlp_for(dim, k)?;

    let data = LabeledDataset::read_csv(open(dataset)?, k)
        .with_context(|| format!("reading dataset {}", dataset.display()))?;
    ensure!(
        data.dim() == dim,
        "dataset {} has {} feature columns but the configured model expects input_dim {dim}",
        dataset.display(),
        data.dim()
    );
    ensure!(!data.is_empty(), "dataset {} has no rows", dataset.display());

    let (trained, report) = train(&mlp, &data)?;
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let mut w = create(&out, CHECKPOINT)?;
    trained.write_checkpoint(&mut w)?;
    w.flush()?;
    let mut w = create(&out, TRAIN_REPORT)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    eprintln!(
        "trained {} epochs: loss {:.6} -> {:.6} ({})",
        mlp.epochs,
        report.initial_loss,
        report.final_loss,
        if report.converged { "converged" } else { "not converged" }
    );
    Ok(out.join(CHECKPOINT))
}

fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    MlpModel::read_checkpoint(open(path)?).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn check_compatible(trained: &MlpModel, dim: usize, k: usize) -> Result<()> {
    ensure!(
        trained.input_dim() == dim,
        "checkpoint expects input_dim {} but the configured model provides {dim}",
        trained.input_dim()
    );
    ensure!(
        trained.num_categories() == k,
        "checkpoint predicts {} categories but the configured model has {k}",
        trained.num_categories()
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path) -> Result<PathBuf> {
    let model = cfg.mixture()?;
    let map = cfg.map_for(&model)?;
    let locations = cfg.locations_for(model.dim())?;
    let trained = load_checkpoint(checkpoint)?;
    check_compatible(&trained, input_dim(&model, map.as_ref()), model.num_components())?;

    let k = model.num_components();
    let out = cfg.out_dir();
    match (&model, &map) {
        (AnyMixture::OneD(m), _) => {
            let records = evaluate_model_1d(m, &trained, &locations.points_1d()?)?;
            ensure_dir(&out)?;
            write_records(RecordWriter::sweep(create(&out, EVAL_CSV)?, k)?, &records)?;
        }
        (AnyMixture::TwoD(m), Some(map)) => {
            let records = evaluate_plane(m, map, &trained, &locations.points_2d()?)?;
            ensure_dir(&out)?;
            write_records(RecordWriter::plane(create(&out, EVAL_CSV)?, k)?, &records)?;
        }
        (AnyMixture::TwoD(_), None) => unreachable!("2-D models always have an embedding"),
    }
    Ok(out.join(EVAL_CSV))
}

fn write_records<W: Write>(mut w: RecordWriter<W>, records: &[EvalRecord]) -> Result<()> {
    for r in records {
        w.write(r)?;
    }
    w.finish()?.flush()?;
    Ok(())
}

pub struct SweepOptions {
    pub paper_scale: bool,
    pub confirm: bool,
}

/// Resolve the grid and evaluation spec of a sweep.
pub fn sweep_plan(cfg: &RunConfig, paper_scale: bool) -> Result<(GridSpec, EvalSpec)> {
    let mut eval = EvalSpec::desk(cfg.seed());
    let grid = if paper_scale {
        eval.samples = DEFAULT_SAMPLES;
        eval.mlp.epochs = MlpConfig::default_1d(2).epochs;
        GridSpec::full()
    } else {
        eval.samples = DEFAULT_SWEEP_SAMPLES;
        cfg.grid.clone().unwrap_or_else(GridSpec::reduced)
    };
    if let Some(n) = cfg.samples {
        eval.samples = n;
    }
    eval.locations = cfg.locations_for(1)?;
    eval.mlp = cfg.mlp.clone().unwrap_or_default().apply(eval.mlp);
    grid.validate()?;
    eval.validate()?;
    Ok((grid, eval))
}

pub fn sweep(cfg: &RunConfig, opts: &SweepOptions) -> Result<Option<PathBuf>> {
    let (grid, eval) = sweep_plan(cfg, opts.paper_scale)?;
    let parallelism = cfg.parallelism()?;
    let bins = cfg.bins()?;
    let locations = eval.locations.points_1d()?.len();
    if opts.paper_scale && !opts.confirm {
        println!(
            "paper-scale sweep: {} grid points x {} locations = {} records, {} samples per point, {} epochs",
            grid.len(),
            locations,
            grid.len() * locations,
            eval.samples,
            eval.mlp.epochs
        );
        println!("nothing was run; pass --confirm to execute (expect hours to days of compute)");
        return Ok(None);
    }

    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let summary = {
        let w = create(&out, SWEEP_CSV)?;
        run_sweep(&grid, &eval, parallelism, w)?
    };
    let mut w = create(&out, FAILURES_CSV)?;
    write_failures_csv(&summary.failures, &mut w)?;
    w.flush()?;
    write_json(&out, MANIFEST, &SweepManifest::new(&grid, &eval, &summary))?;

    let (records, _) = twopath::sweep::read_sweep_csv(open(&out.join(SWEEP_CSV))?)?;
    write_derived(&out, &records, bins)?;
    eprintln!(
        "sweep: {} points, {} records, {} failures -> {}",
        summary.points,
        summary.records,
        summary.failures.len(),
        out.display()
    );
    Ok(Some(out.join(SWEEP_CSV)))
}

/// Marginal, scatter and binned files derived from sweep records.
pub fn write_derived(out: &Path, records: &[EvalRecord], bins: usize) -> Result<()> {
    for factor in Factor::ALL {
        let mut w = create(out, &format!("marginal_{}.csv", factor.name()))?;
        marginalize(records, factor)?.write_csv(&mut w)?;
        w.flush()?;
    }
    let scatter = scatter_factors(records);
    let mut w = create(out, SCATTER_CSV)?;
    write_scatter_csv(&scatter, &mut w)?;
    w.flush()?;
    for (metric, axis) in BINNED {
        let mut w = create(out, &format!("binned_{metric}_{axis}.csv"))?;
        binned(records, metric, axis, bins)?.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub const BINNED: [(&str, &str); 4] =
    [("kl", "density"), ("abs_diff", "density"), ("kl", "sparsity"), ("abs_diff", "sparsity")];

/// Equal-width bin means of `metric` over `axis`.
pub fn binned(records: &[EvalRecord], metric: &str, axis: &str, bins: usize) -> Result<BinnedSeries> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .map(|r| {
            let x = if axis == "density" { r.density } else { r.sparsity };
            let y = if metric == "kl" { r.kl } else { r.abs_diff };
            (x, y)
        })
        .collect();
    Ok(bin_average(&points, bins)?)
}

/// Path precedence: flag endpoints, then the config path, then first to last
/// cluster mean.
pub fn path(
    cfg: &RunConfig,
    checkpoint: &Path,
    endpoints: Option<([f64; 2], [f64; 2])>,
    points: Option<usize>,
) -> Result<PathBuf> {
    let model = cfg.mixture()?;
    let AnyMixture::TwoD(m) = &model else {
        bail!("path evaluation needs a 2-D model (e.g. the ten-digit-2d preset)");
    };
    let map = cfg.map_for(&model)?.expect("2-D models always have an embedding");
    let mut spec = match (endpoints, cfg.path) {
        (Some((start, end)), _) => PathSpec { start, end, num_samples: DEFAULT_PATH_SAMPLES },
        (None, Some(p)) => p,
        (None, None) => {
            let c = m.components();
            PathSpec { start: c[0].mu, end: c[c.len() - 1].mu, num_samples: DEFAULT_PATH_SAMPLES }
        }
    };
    if let Some(n) = points {
        spec.num_samples = n;
    }
    spec.points()?;
    let trained = load_checkpoint(checkpoint)?;
    check_compatible(&trained, map.dim(), m.num_components())?;

    let records = run_path(m, &map, &trained, &spec)?;
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    write_records(RecordWriter::plane(create(&out, PATH_CSV)?, m.num_components())?, &records)?;
    Ok(out.join(PATH_CSV))
}

pub fn presets(json: bool) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    for name in PRESET_NAMES {
        let m = twopath::generator::preset(name)?;
        if json {
            writeln!(stdout, "{name}: {}", serde_json::to_string(&m)?)?;
        } else {
            writeln!(stdout, "{name}\t{}-D, {} clusters", m.dim(), m.num_components())?;
        }
    }
    Ok(())
}

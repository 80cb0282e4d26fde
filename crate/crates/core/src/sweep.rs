//! Grid sweeps and path evaluations comparing trained classifiers with the
//! oracle.
//!
//! A sweep enumerates two-cluster 1-D models over a parameter grid; every
//! grid point samples its own dataset, trains its own classifier and emits
//! one [`EvalRecord`] per evaluation location. Points run concurrently, but
//! results reach the output in grid order, so the bytes written depend only
//! on the specs and the master seed.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::embedding::ReconstructiveMap;
use crate::error::{Error, Result};
use crate::generator::{Mixture, Mixture1D, Mixture2D};
use crate::math::format_float;
use crate::metrics::{abs_difference, kl_divergence, PrecisionPair};
use crate::nn::{train, MlpConfig, MlpModel};
use crate::oracle::{factor_report, posterior_2d, sparsity_hg, PosteriorVector};
use crate::rng::{derive_seed, RngKey};

/// Grid over the two-cluster family `(p, 1 - p)`, `N(mu1, sigma1)`, `N(-mu1, sigma2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub priors: Vec<f64>,
    pub mu1: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
}

fn steps(from: i32, to: i32, scale: f64) -> Vec<f64> {
    (from..=to).map(|i| i as f64 / scale).collect()
}

impl GridSpec {
    /// `p(y=1)` in 0.1..=0.9 step 0.1, `mu1` in 0..=9, both sigmas in 1..=10:
    /// 9 x 10 x 10 x 10 = 9000 points.
    pub fn full() -> Self {
        Self {
            priors: steps(1, 9, 10.0),
            mu1: steps(0, 9, 1.0),
            sigma1: steps(1, 10, 1.0),
            sigma2: steps(1, 10, 1.0),
        }
    }

    /// First, middle and last value of each full axis: 81 points.
    pub fn reduced() -> Self {
        Self {
            priors: vec![0.1, 0.5, 0.9],
            mu1: vec![0.0, 5.0, 9.0],
            sigma1: vec![1.0, 5.0, 10.0],
            sigma2: vec![1.0, 5.0, 10.0],
        }
    }

    pub fn len(&self) -> usize {
        self.priors.len() * self.mu1.len() * self.sigma1.len() * self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("priors", &self.priors),
            ("mu1", &self.mu1),
            ("sigma1", &self.sigma1),
            ("sigma2", &self.sigma2),
        ] {
            if axis.is_empty() {
                return Err(Error::InvalidSpec(format!("grid axis `{name}` is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!("grid axis `{name}` has a non-finite value")));
            }
        }
        if let Some(p) = self.priors.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidSpec(format!("prior {p} outside (0, 1)")));
        }
        if let Some(s) = self.sigma1.iter().chain(&self.sigma2).find(|s| **s <= 0.0) {
            return Err(Error::InvalidSpec(format!("standard deviation {s} must be > 0")));
        }
        Ok(())
    }
}

/// Parameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub p1: f64,
    pub mu1: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl GridParams {
    pub fn model(&self) -> Result<Mixture1D> {
        Mixture1D::two_cluster(self.p1, self.mu1, self.sigma1, -self.mu1, self.sigma2)
    }

    /// Read the parameters back from a two-cluster model with `mu2 = -mu1`
    /// (cluster 1 is index 0).
    pub fn from_model(model: &Mixture1D) -> Option<Self> {
        match (model.weights(), model.components()) {
            ([p1, _], [c1, c2]) if c2.mu == -c1.mu => {
                Some(Self { p1: *p1, mu1: c1.mu, sigma1: c1.sigma, sigma2: c2.sigma })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub params: GridParams,
    pub model: Mixture1D,
}

/// Cartesian product in lexicographic order: priors outermost, then `mu1`,
/// `sigma1`, and `sigma2` innermost.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<GridPoint>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.len());
    for &p1 in &spec.priors {
        for &mu1 in &spec.mu1 {
            for &sigma1 in &spec.sigma1 {
                for &sigma2 in &spec.sigma2 {
                    let params = GridParams { p1, mu1, sigma1, sigma2 };
                    out.push(GridPoint { index: out.len(), params, model: params.model()? });
                }
            }
        }
    }
    Ok(out)
}

/// Inclusive arithmetic range `start, start + step, ...` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    /// `-35, -34.5, ..., 35.5`: 142 locations.
    pub fn standard() -> Self {
        Self { start: -35.0, stop: 35.5, step: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidSpec(format!("range step must be > 0, got {}", self.step)));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.stop < self.start {
            return Err(Error::InvalidSpec(format!(
                "range bounds must be finite with start <= stop ({}, {})",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.start + self.step * i as f64).collect())
    }
}

/// Where predictions are compared with the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locations {
    Range(Range),
    Points(Vec<f64>),
    /// Row-major lattice over the plane: `y` outer, `x` inner.
    Lattice { x: Range, y: Range },
    Points2d(Vec<[f64; 2]>),
}

impl Locations {
    pub fn standard() -> Self {
        Locations::Range(Range::standard())
    }

    pub fn points_1d(&self) -> Result<Vec<f64>> {
        match self {
            Locations::Range(r) => r.values(),
            Locations::Points(p) => Ok(p.clone()),
            _ => Err(Error::InvalidSpec("expected 1-D evaluation locations".into())),
        }
    }

    pub fn points_2d(&self) -> Result<Vec<[f64; 2]>> {
        match self {
            Locations::Lattice { x, y } => {
                let xs = x.values()?;
                Ok(y.values()?.into_iter().flat_map(|b| xs.iter().map(move |&a| [a, b])).collect())
            }
            Locations::Points2d(p) => Ok(p.clone()),
            _ => Err(Error::InvalidSpec("expected 2-D evaluation locations".into())),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Locations::Range(_) | Locations::Points(_) => 1,
            Locations::Lattice { .. } | Locations::Points2d(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub locations: Locations,
    /// Training samples drawn per grid point.
    pub samples: usize,
    /// Training configuration; its `seed` is replaced per grid point.
    pub mlp: MlpConfig,
    pub master_seed: u64,
}

impl EvalSpec {
    /// Standard evaluation range, reduced sample count and epoch budget.
    pub fn desk(master_seed: u64) -> Self {
        let mut mlp = MlpConfig::default_1d(2);
        mlp.epochs = DESK_EPOCHS;
        Self { locations: Locations::standard(), samples: 2000, mlp, master_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidSpec("samples per grid point must be >= 1".into()));
        }
        match &self.locations {
            Locations::Range(r) => r.validate()?,
            Locations::Lattice { x, y } => {
                x.validate()?;
                y.validate()?;
            }
            Locations::Points(p) if p.iter().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidSpec("non-finite evaluation location".into()))
            }
            Locations::Points2d(p) if p.iter().flatten().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidSpec("non-finite evaluation location".into()))
            }
            _ => {}
        }
        self.mlp.validate()
    }
}

/// Epoch budget of the desk-scale sweep configuration.
pub const DESK_EPOCHS: usize = 10;

/// One evaluation location of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub params: Option<GridParams>,
    pub location: Vec<f64>,
    pub density: f64,
    pub sparsity: f64,
    pub p_true: Vec<f64>,
    pub q_pred: Vec<f64>,
    pub kl: f64,
    pub abs_diff: f64,
}

impl EvalRecord {
    fn new(
        params: Option<GridParams>,
        location: Vec<f64>,
        density: f64,
        sparsity: f64,
        truth: PosteriorVector,
        predicted: PosteriorVector,
    ) -> Result<Self> {
        let m = PrecisionPair::between(&truth, &predicted)?;
        Ok(Self {
            params,
            location,
            density,
            sparsity,
            p_true: truth.into(),
            q_pred: predicted.into(),
            kl: m.kl,
            abs_diff: m.abs_diff,
        })
    }

    /// Recompute `(kl, abs_diff)` from the stored posterior entries.
    pub fn recompute_metrics(&self) -> Result<(f64, f64)> {
        let p = PosteriorVector::new(self.p_true.clone())?;
        let q = PosteriorVector::new(self.q_pred.clone())?;
        Ok((kl_divergence(&p, &q)?, abs_difference(&p, &q)?))
    }
}

/// Per-point RNG wiring: data from stream `point_index` of the master seed,
/// training from a seed derived from `(master, point_index)`.
pub fn point_seeds(master_seed: u64, point_index: usize) -> (RngKey, u64) {
    (
        RngKey::new(master_seed, point_index as u64),
        derive_seed(master_seed, point_index as u64, 1),
    )
}

/// Train on the evaluation locations of one 1-D model and compare with the oracle.
pub fn evaluate_model_1d(
    model: &Mixture1D,
    trained: &MlpModel,
    locations: &[f64],
) -> Result<Vec<EvalRecord>> {
    let params = GridParams::from_model(model);
    locations
        .iter()
        .map(|&x| {
            let report = factor_report(model, x)?;
            let q = trained.predict_posterior(&[x])?;
            EvalRecord::new(params, vec![x], report.density, report.sparsity, report.posterior, q)
        })
        .collect()
}

/// Sample, train and evaluate one grid point.
pub fn run_grid_point(point: &GridPoint, eval: &EvalSpec) -> Result<Vec<EvalRecord>> {
    eval.validate()?;
    let locations = eval.locations.points_1d()?;
    let (data_key, train_seed) = point_seeds(eval.master_seed, point.index);
    let data = point.model.sample(eval.samples, data_key);
    let mut cfg = eval.mlp.clone();
    cfg.seed = train_seed;
    cfg.input_dim = 1;
    cfg.num_categories = point.model.num_components();
    let (trained, _) = train(&cfg, &data)?;
    let mut records = evaluate_model_1d(&point.model, &trained, &locations)?;
    for r in &mut records {
        r.params = Some(point.params);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub params: GridParams,
    pub message: String,
}

/// Outcome of one grid point, delivered in grid order.
#[derive(Debug)]
pub enum PointOutcome {
    Done { point: GridPoint, records: Vec<EvalRecord> },
    Failed { point: GridPoint, failure: PointFailure },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub points: usize,
    pub records: usize,
    pub failures: Vec<PointFailure>,
}

/// Run every grid point with up to `parallelism` workers, handing outcomes to
/// `sink` strictly in grid order.
pub fn run_sweep_with<F>(grid: &GridSpec, eval: &EvalSpec, parallelism: usize, mut sink: F) -> Result<SweepSummary>
where
    F: FnMut(PointOutcome) -> Result<()>,
{
    if parallelism == 0 {
        return Err(Error::InvalidSpec("parallelism must be >= 1".into()));
    }
    eval.validate()?;
    eval.locations.points_1d()?;
    let points = enumerate_grid(grid)?;
    let workers = parallelism.min(points.len());
    let next = AtomicUsize::new(0);
    let mut summary = SweepSummary { points: points.len(), records: 0, failures: Vec::new() };

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel::<(usize, Result<Vec<EvalRecord>>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (points, next) = (&points, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let result = run_grid_point(&points[i], eval);
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut emit = 0;
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(result) = pending.remove(&emit) {
                let point = points[emit].clone();
                let outcome = match result {
                    Ok(records) => {
                        summary.records += records.len();
                        PointOutcome::Done { point, records }
                    }
                    Err(e) => {
                        let failure = PointFailure { index: emit, params: point.params, message: e.to_string() };
                        summary.failures.push(failure.clone());
                        PointOutcome::Failed { point, failure }
                    }
                };
                if let Err(e) = sink(outcome) {
                    // stop handing out work; workers drain and exit
                    next.store(points.len(), Ordering::Relaxed);
                    return Err(e);
                }
                emit += 1;
            }
        }
        Ok(())
    })?;

    if summary.failures.len() == summary.points {
        return Err(Error::AllPointsFailed(summary.points));
    }
    Ok(summary)
}

/// Run a sweep and stream the records CSV to `out`. Failed points produce a
/// sentinel row (grid parameters followed by `NaN` fields).
pub fn run_sweep<W: Write>(grid: &GridSpec, eval: &EvalSpec, parallelism: usize, out: W) -> Result<SweepSummary> {
    let mut writer = RecordWriter::sweep(out, 2)?;
    let summary = run_sweep_with(grid, eval, parallelism, |outcome| match outcome {
        PointOutcome::Done { records, .. } => records.iter().try_for_each(|r| writer.write(r)),
        PointOutcome::Failed { point, .. } => writer.write_sentinel(&point.params),
    })?;
    writer.finish()?;
    Ok(summary)
}

/// Run a sweep and keep the records in memory (grid order).
pub fn run_sweep_collect(grid: &GridSpec, eval: &EvalSpec, parallelism: usize) -> Result<(Vec<EvalRecord>, SweepSummary)> {
    let mut all = Vec::new();
    let summary = run_sweep_with(grid, eval, parallelism, |outcome| {
        if let PointOutcome::Done { records, .. } = outcome {
            all.extend(records);
        }
        Ok(())
    })?;
    Ok((all, summary))
}

/// Everything needed to regenerate a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub tool: String,
    pub version: String,
    pub grid: GridSpec,
    pub eval: EvalSpec,
    pub mlp: MlpConfig,
    pub master_seed: u64,
    pub points: usize,
    pub records: usize,
    pub failure_count: usize,
}

impl SweepManifest {
    pub fn new(grid: &GridSpec, eval: &EvalSpec, summary: &SweepSummary) -> Self {
        Self {
            tool: "twopath".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            grid: grid.clone(),
            eval: eval.clone(),
            mlp: eval.mlp.clone(),
            master_seed: eval.master_seed,
            points: summary.points,
            records: summary.records,
            failure_count: summary.failures.len(),
        }
    }
}

pub fn write_failures_csv<W: Write>(failures: &[PointFailure], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["index", "p1", "mu1", "sigma1", "sigma2", "message"])?;
    for f in failures {
        w.write_record([
            f.index.to_string(),
            format_float(f.params.p1),
            format_float(f.params.mu1),
            format_float(f.params.sigma1),
            format_float(f.params.sigma2),
            f.message.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schema {
    /// `p1,mu1,sigma1,sigma2,x,...`
    Sweep,
    /// `sample,v0,v1,...`
    Plane,
}

/// CSV writer for evaluation records.
///
/// Sweep schema: `p1,mu1,sigma1,sigma2,x,density,sparsity,p_true_0..,q_pred_0..,kl,abs_diff`.
/// Plane schema (paths and 2-D lattices): `sample,v0,v1,density,...` with the
/// same trailing columns.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
    schema: Schema,
    k: usize,
    row: usize,
}

impl<W: Write> RecordWriter<W> {
    pub fn sweep(out: W, k: usize) -> Result<Self> {
        Self::with_schema(out, Schema::Sweep, k)
    }

    pub fn plane(out: W, k: usize) -> Result<Self> {
        Self::with_schema(out, Schema::Plane, k)
    }

    fn with_schema(out: W, schema: Schema, k: usize) -> Result<Self> {
        let mut inner = csv_writer(out);
        let mut header: Vec<String> = match schema {
            Schema::Sweep => ["p1", "mu1", "sigma1", "sigma2", "x"].map(String::from).to_vec(),
            Schema::Plane => ["sample", "v0", "v1"].map(String::from).to_vec(),
        };
        header.extend(["density", "sparsity"].map(String::from));
        header.extend((0..k).map(|i| format!("p_true_{i}")));
        header.extend((0..k).map(|i| format!("q_pred_{i}")));
        header.extend(["kl", "abs_diff"].map(String::from));
        inner.write_record(&header)?;
        Ok(Self { inner, schema, k, row: 0 })
    }

    pub fn write(&mut self, r: &EvalRecord) -> Result<()> {
        if r.p_true.len() != self.k || r.q_pred.len() != self.k {
            return Err(Error::LengthMismatch { left: self.k, right: r.p_true.len() });
        }
        let mut row: Vec<String> = Vec::with_capacity(9 + 2 * self.k);
        match self.schema {
            Schema::Sweep => {
                if r.location.len() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, actual: r.location.len() });
                }
                // models outside the grid family leave the parameter columns blank
                match r.params {
                    Some(p) => row.extend([p.p1, p.mu1, p.sigma1, p.sigma2].map(format_float)),
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
                row.push(format_float(r.location[0]));
            }
            Schema::Plane => {
                if r.location.len() != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, actual: r.location.len() });
                }
                row.push(self.row.to_string());
                row.extend(r.location.iter().map(|v| format_float(*v)));
            }
        }
        row.push(format_float(r.density));
        row.push(format_float(r.sparsity));
        row.extend(r.p_true.iter().chain(&r.q_pred).map(|v| format_float(*v)));
        row.push(format_float(r.kl));
        row.push(format_float(r.abs_diff));
        self.inner.write_record(&row)?;
        self.row += 1;
        Ok(())
    }

    fn write_sentinel(&mut self, p: &GridParams) -> Result<()> {
        let mut row: Vec<String> = [p.p1, p.mu1, p.sigma1, p.sigma2].map(format_float).to_vec();
        row.extend(std::iter::repeat_n("NaN".to_string(), 5 + 2 * self.k));
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Read a sweep-schema CSV back into records. Sentinel rows are skipped and
/// counted.
pub fn read_sweep_csv<R: Read>(input: R) -> Result<(Vec<EvalRecord>, usize)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let k = header.iter().filter(|h| h.starts_with("p_true_")).count();
    let expected = 9 + 2 * k;
    if k == 0 || header.len() != expected || header.get(0) != Some("p1") || header.get(4) != Some("x") {
        return Err(Error::Schema("not a sweep records CSV".into()));
    }
    let mut records = Vec::new();
    let mut sentinels = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let blank_params = rec.iter().take(4).all(str::is_empty);
        let vals: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                if j < 4 && blank_params {
                    return Ok(f64::NAN);
                }
                s.parse::<f64>()
                    .map_err(|_| Error::Schema(format!("row {}, column {}: `{s}` is not a number", i + 1, &header[j])))
            })
            .collect::<Result<_>>()?;
        if vals[4].is_nan() {
            sentinels += 1;
            continue;
        }
        let params = (!blank_params).then(|| GridParams { p1: vals[0], mu1: vals[1], sigma1: vals[2], sigma2: vals[3] });
        records.push(EvalRecord {
            params,
            location: vec![vals[4]],
            density: vals[5],
            sparsity: vals[6],
            p_true: vals[7..7 + k].to_vec(),
            q_pred: vals[7 + k..7 + 2 * k].to_vec(),
            kl: vals[7 + 2 * k],
            abs_diff: vals[8 + 2 * k],
        });
    }
    Ok((records, sentinels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Prior,
    Mu1,
    SigmaPair,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Prior, Factor::Mu1, Factor::SigmaPair];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Prior => "prior",
            Factor::Mu1 => "mu1",
            Factor::SigmaPair => "sigma_pair",
        }
    }
}

impl std::str::FromStr for Factor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(Factor::Prior),
            "mu1" => Ok(Factor::Mu1),
            "sigma_pair" => Ok(Factor::SigmaPair),
            other => Err(Error::UnknownFactor(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalCell {
    pub mean_kl: f64,
    pub mean_abs_diff: f64,
    pub count: usize,
}

#[derive(Debug, Default, Clone, Copy)]
struct Acc {
    kl: f64,
    abs: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, r: &EvalRecord) {
        self.kl += r.kl;
        self.abs += r.abs_diff;
        self.n += 1;
    }

    fn cell(self) -> MarginalCell {
        let n = self.n as f64;
        MarginalCell { mean_kl: self.kl / n, mean_abs_diff: self.abs / n, count: self.n }
    }
}

/// Mean precision per factor value, averaging over everything else.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Curve { factor: Factor, points: Vec<(f64, MarginalCell)> },
    /// Dense `sigma1 x sigma2` matrix; cells with no records are `None`.
    Matrix { sigma1: Vec<f64>, sigma2: Vec<f64>, cells: Vec<Vec<Option<MarginalCell>>> },
}

impl Marginal {
    /// Curves: `<factor>,mean_kl,mean_abs_diff,count`. Matrix (long form, every
    /// cell): `sigma1,sigma2,mean_kl,mean_abs_diff,count`, blank for empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        match self {
            Marginal::Curve { factor, points } => {
                let col = if *factor == Factor::Prior { "p1" } else { "mu1" };
                w.write_record([col, "mean_kl", "mean_abs_diff", "count"])?;
                for (v, c) in points {
                    w.write_record([format_float(*v), format_float(c.mean_kl), format_float(c.mean_abs_diff), c.count.to_string()])?;
                }
            }
            Marginal::Matrix { sigma1, sigma2, cells } => {
                w.write_record(["sigma1", "sigma2", "mean_kl", "mean_abs_diff", "count"])?;
                for (i, s1) in sigma1.iter().enumerate() {
                    for (j, s2) in sigma2.iter().enumerate() {
                        let (kl, ab, n) = match cells[i][j] {
                            Some(c) => (format_float(c.mean_kl), format_float(c.mean_abs_diff), c.count.to_string()),
                            None => (String::new(), String::new(), "0".to_string()),
                        };
                        w.write_record([format_float(*s1), format_float(*s2), kl, ab, n])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Group records by a grid factor (arithmetic mean of both metrics).
pub fn marginalize(records: &[EvalRecord], factor: Factor) -> Result<Marginal> {
    let with_params: Vec<(&EvalRecord, GridParams)> =
        records.iter().filter_map(|r| r.params.map(|p| (r, p))).collect();
    if with_params.is_empty() {
        return Err(Error::Empty("records with grid parameters"));
    }
    match factor {
        Factor::Prior | Factor::Mu1 => {
            let mut groups: BTreeMap<OrderedFloat<f64>, Acc> = BTreeMap::new();
            for (r, p) in with_params {
                let key = if factor == Factor::Prior { p.p1 } else { p.mu1 };
                groups.entry(OrderedFloat(key)).or_default().add(r);
            }
            Ok(Marginal::Curve { factor, points: groups.into_iter().map(|(k, a)| (k.0, a.cell())).collect() })
        }
        Factor::SigmaPair => {
            let mut groups: BTreeMap<(OrderedFloat<f64>, OrderedFloat<f64>), Acc> = BTreeMap::new();
            for (r, p) in with_params {
                groups.entry((OrderedFloat(p.sigma1), OrderedFloat(p.sigma2))).or_default().add(r);
            }
            let mut s1: Vec<f64> = groups.keys().map(|k| k.0 .0).collect();
            let mut s2: Vec<f64> = groups.keys().map(|k| k.1 .0).collect();
            for v in [&mut s1, &mut s2] {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
            let cells = s1
                .iter()
                .map(|&a| {
                    s2.iter()
                        .map(|&b| groups.get(&(OrderedFloat(a), OrderedFloat(b))).map(|acc| acc.cell()))
                        .collect()
                })
                .collect();
            Ok(Marginal::Matrix { sigma1: s1, sigma2: s2, cells })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub density: f64,
    pub sparsity: f64,
    pub kl: f64,
    pub abs_diff: f64,
}

pub fn scatter_factors(records: &[EvalRecord]) -> Vec<ScatterPoint> {
    records
        .iter()
        .map(|r| ScatterPoint { density: r.density, sparsity: r.sparsity, kl: r.kl, abs_diff: r.abs_diff })
        .collect()
}

pub fn write_scatter_csv<W: Write>(points: &[ScatterPoint], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["density", "sparsity", "kl", "abs_diff"])?;
    for p in points {
        w.write_record([p.density, p.sparsity, p.kl, p.abs_diff].map(format_float))?;
    }
    w.flush()?;
    Ok(())
}

/// Straight segment across the latent plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub num_samples: usize,
}

impl PathSpec {
    pub fn points(&self) -> Result<Vec<[f64; 2]>> {
        if self.num_samples < 2 {
            return Err(Error::InvalidSpec(format!("a path needs >= 2 samples, got {}", self.num_samples)));
        }
        if self.start.iter().chain(&self.end).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path endpoint".into()));
        }
        let last = (self.num_samples - 1) as f64;
        Ok((0..self.num_samples)
            .map(|i| {
                let t = i as f64 / last;
                [0, 1].map(|c| self.start[c] + t * (self.end[c] - self.start[c]))
            })
            .collect())
    }
}

/// Evaluate a trained classifier at plane points: each point is embedded,
/// predicted, and compared with the planar posterior. Density is `f(v)` and
/// sparsity is H_G.
pub fn evaluate_plane(
    model: &Mixture2D,
    map: &ReconstructiveMap,
    trained: &MlpModel,
    points: &[[f64; 2]],
) -> Result<Vec<EvalRecord>> {
    if trained.input_dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), actual: trained.input_dim() });
    }
    if trained.num_categories() != model.num_components() {
        return Err(Error::DimensionMismatch { expected: model.num_components(), actual: trained.num_categories() });
    }
    points
        .iter()
        .map(|&v| {
            let x = map.embed(v)?;
            let q = trained.predict_posterior(&x)?;
            let p = posterior_2d(model, v)?;
            EvalRecord::new(None, v.to_vec(), model.pdf(v), sparsity_hg(model, v)?, p, q)
        })
        .collect()
}

/// Records along a straight latent path.
pub fn run_path(
    model: &Mixture2D,
    map: &ReconstructiveMap,
    trained: &MlpModel,
    path: &PathSpec,
) -> Result<Vec<EvalRecord>> {
    evaluate_plane(model, map, trained, &path.points()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(GridSpec::full().len(), 9000);
        assert_eq!(enumerate_grid(&GridSpec::full()).unwrap().len(), 9000);
        assert_eq!(enumerate_grid(&GridSpec::reduced()).unwrap().len(), 81);
        let single = GridSpec { priors: vec![0.3], mu1: vec![2.0], sigma1: vec![1.0], sigma2: vec![3.0] };
        let pts = enumerate_grid(&single).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].model, Mixture1D::two_cluster(0.3, 2.0, 1.0, -2.0, 3.0).unwrap());
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let pts = enumerate_grid(&GridSpec::reduced()).unwrap();
        let p = |i: usize| pts[i].params;
        assert_eq!(p(0), GridParams { p1: 0.1, mu1: 0.0, sigma1: 1.0, sigma2: 1.0 });
        assert_eq!(p(1).sigma2, 5.0);
        assert_eq!(p(3).sigma1, 5.0);
        assert_eq!(p(9).mu1, 5.0);
        assert_eq!(p(27).p1, 0.5);
        assert!(pts.iter().enumerate().all(|(i, g)| g.index == i));
    }

    #[test]
    fn grid_validation() {
        let mut g = GridSpec::reduced();
        g.mu1.clear();
        assert!(enumerate_grid(&g).is_err());
        let mut g = GridSpec::reduced();
        g.priors.push(1.0);
        assert!(enumerate_grid(&g).is_err());
        let mut g = GridSpec::reduced();
        g.sigma2.push(0.0);
        assert!(enumerate_grid(&g).is_err());
    }

    #[test]
    fn standard_range_has_142_locations() {
        let v = Range::standard().values().unwrap();
        assert_eq!(v.len(), 142);
        assert_eq!(v[0], -35.0);
        assert_eq!(v[141], 35.5);
        assert_eq!(Range { start: 1.0, stop: 1.0, step: 0.5 }.values().unwrap(), vec![1.0]);
        assert!(Range { start: 0.0, stop: 1.0, step: 0.0 }.values().is_err());
    }

    #[test]
    fn lattice_is_row_major() {
        let l = Locations::Lattice {
            x: Range { start: 0.0, stop: 1.0, step: 1.0 },
            y: Range { start: 5.0, stop: 6.0, step: 1.0 },
        };
        assert_eq!(l.points_2d().unwrap(), vec![[0.0, 5.0], [1.0, 5.0], [0.0, 6.0], [1.0, 6.0]]);
        assert!(l.points_1d().is_err());
    }

    #[test]
    fn path_interpolates_endpoints() {
        let p = PathSpec { start: [0.0, 0.0], end: [3.0, -6.0], num_samples: 4 };
        assert_eq!(p.points().unwrap(), vec![[0.0, 0.0], [1.0, -2.0], [2.0, -4.0], [3.0, -6.0]]);
        assert!(PathSpec { num_samples: 1, ..p }.points().is_err());
    }

    fn record(p1: f64, mu1: f64, s1: f64, s2: f64, kl: f64, abs_diff: f64) -> EvalRecord {
        EvalRecord {
            params: Some(GridParams { p1, mu1, sigma1: s1, sigma2: s2 }),
            location: vec![0.0],
            density: 0.1,
            sparsity: 0.5,
            p_true: vec![0.5, 0.5],
            q_pred: vec![0.5, 0.5],
            kl,
            abs_diff,
        }
    }

    #[test]
    fn marginal_of_constant_metric_is_constant() {
        let recs: Vec<_> = enumerate_grid(&GridSpec::reduced())
            .unwrap()
            .iter()
            .map(|g| record(g.params.p1, g.params.mu1, g.params.sigma1, g.params.sigma2, 0.25, 0.125))
            .collect();
        for f in Factor::ALL {
            match marginalize(&recs, f).unwrap() {
                Marginal::Curve { points, .. } => {
                    assert_eq!(points.len(), 3);
                    assert!(points.iter().all(|(_, c)| c.mean_kl == 0.25 && c.mean_abs_diff == 0.125 && c.count == 27));
                }
                Marginal::Matrix { cells, .. } => {
                    assert!(cells.iter().flatten().all(|c| c.unwrap().mean_kl == 0.25 && c.unwrap().count == 9));
                }
            }
        }
    }

    #[test]
    fn marginal_errors() {
        assert!(marginalize(&[], Factor::Prior).is_err());
        assert!("sigma".parse::<Factor>().is_err());
        assert_eq!("sigma_pair".parse::<Factor>().unwrap(), Factor::SigmaPair);
    }

    #[test]
    fn sweep_csv_round_trip_and_sentinels() {
        let recs = vec![record(0.1, 2.0, 1.0, 3.0, 0.01, 0.02), record(0.1, 2.0, 1.0, 3.0, 0.5, 0.25)];
        let mut w = RecordWriter::sweep(Vec::new(), 2).unwrap();
        for r in &recs {
            w.write(r).unwrap();
        }
        w.write_sentinel(&GridParams { p1: 0.9, mu1: 0.0, sigma1: 1.0, sigma2: 1.0 }).unwrap();
        let buf = w.finish().unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "p1,mu1,sigma1,sigma2,x,density,sparsity,p_true_0,p_true_1,q_pred_0,q_pred_1,kl,abs_diff\n"
        ));
        let (back, sentinels) = read_sweep_csv(&buf[..]).unwrap();
        assert_eq!(back, recs);
        assert_eq!(sentinels, 1);
    }
}

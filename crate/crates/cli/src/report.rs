//! Figure data (CSV) and optional static SVG renderings from a sweep directory.
//!
//! | file  | content                                  |
//! |-------|------------------------------------------|
//! | fig2a | mean KL by prior `p1`                    |
//! | fig2b | mean absolute difference by prior `p1`   |
//! | fig2c | mean KL by `mu1`                         |
//! | fig2d | mean absolute difference by `mu1`        |
//! | fig2e | mean KL over the `(sigma1, sigma2)` grid |
//! | fig2f | mean absolute difference, same grid      |
//! | fig3a | binned mean KL over density              |
//! | fig3b | binned mean absolute difference, density |
//! | fig3c | binned mean KL over sparsity             |
//! | fig3d | binned mean absolute difference, sparsity|

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use twopath::math::format_float;
use twopath::metrics::BinnedSeries;
use twopath::sweep::{marginalize, read_sweep_csv, EvalRecord, Factor, Marginal, MarginalCell};

use crate::commands::{binned, MANIFEST, SWEEP_CSV};

const REQUIRED: [&str; 2] = [SWEEP_CSV, MANIFEST];

pub const FIG3: [(&str, &str, &str); 4] = [
    ("fig3a", "kl", "density"),
    ("fig3b", "abs_diff", "density"),
    ("fig3c", "kl", "sparsity"),
    ("fig3d", "abs_diff", "sparsity"),
];

pub fn report(sweep_dir: &Path, out: Option<&Path>, bins: usize, svg: bool) -> Result<Vec<PathBuf>> {
    if bins == 0 {
        bail!("bins must be >= 1");
    }
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|f| !sweep_dir.join(f).is_file()).collect();
    if !missing.is_empty() {
        bail!("sweep directory {} is missing: {}", sweep_dir.display(), missing.join(", "));
    }
    let path = sweep_dir.join(SWEEP_CSV);
    let file = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let (records, _) = read_sweep_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    if records.is_empty() {
        bail!("{} holds no completed records", path.display());
    }

    let out = out.unwrap_or(sweep_dir);
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut written = Vec::new();
    let mut emit = |name: String, body: String| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, body).with_context(|| format!("cannot write {}", p.display()))?;
        written.push(p);
        Ok(())
    };

    for (factor, kl_fig, abs_fig) in [(Factor::Prior, "fig2a", "fig2b"), (Factor::Mu1, "fig2c", "fig2d")] {
        let Marginal::Curve { points, .. } = marginalize(&records, factor)? else {
            unreachable!("scalar factors give curves")
        };
        let col = if factor == Factor::Prior { "p1" } else { "mu1" };
        for (fig, metric, pick) in [(kl_fig, "kl", kl as fn(&MarginalCell) -> f64), (abs_fig, "abs_diff", abs)] {
            let mut csv = format!("{col},mean_{metric},count\n");
            for (v, c) in &points {
                writeln!(csv, "{},{},{}", format_float(*v), format_float(pick(c)), c.count)?;
            }
            emit(format!("{fig}.csv"), csv)?;
            if svg {
                let xy: Vec<(f64, f64)> = points.iter().map(|(v, c)| (*v, pick(c))).collect();
                emit(format!("{fig}.svg"), line_svg(&format!("mean {metric} by {col}"), col, &xy))?;
            }
        }
    }

    let Marginal::Matrix { sigma1, sigma2, cells } = marginalize(&records, Factor::SigmaPair)? else {
        unreachable!("sigma pairs give a matrix")
    };
    for (fig, metric, pick) in [("fig2e", "kl", kl as fn(&MarginalCell) -> f64), ("fig2f", "abs_diff", abs)] {
        let mut csv = format!("sigma1,sigma2,mean_{metric},count\n");
        for (i, s1) in sigma1.iter().enumerate() {
            for (j, s2) in sigma2.iter().enumerate() {
                match &cells[i][j] {
                    Some(c) => writeln!(csv, "{},{},{},{}", format_float(*s1), format_float(*s2), format_float(pick(c)), c.count)?,
                    None => writeln!(csv, "{},{},,0", format_float(*s1), format_float(*s2))?,
                }
            }
        }
        emit(format!("{fig}.csv"), csv)?;
        if svg {
            let values: Vec<Vec<Option<f64>>> =
                cells.iter().map(|row| row.iter().map(|c| c.as_ref().map(pick)).collect()).collect();
            emit(format!("{fig}.svg"), heatmap_svg(&format!("mean {metric}"), &sigma1, &sigma2, &values))?;
        }
    }

    for (fig, metric, axis) in FIG3 {
        let series = binned(&records, metric, axis, bins)?;
        let mut buf = Vec::new();
        series.write_csv(&mut buf)?;
        emit(format!("{fig}.csv"), String::from_utf8(buf)?)?;
        if svg {
            emit(format!("{fig}.svg"), scatter_svg(&records, metric, axis, &series))?;
        }
    }
    Ok(written)
}

fn kl(c: &MarginalCell) -> f64 {
    c.mean_kl
}

fn abs(c: &MarginalCell) -> f64 {
    c.mean_abs_diff
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const M: f64 = 48.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            match (lo.is_finite(), hi > lo) {
                (true, true) => (lo, hi),
                (true, false) => (lo - 0.5, lo + 0.5),
                _ => (0.0, 1.0),
            }
        };
        Self { x: span(&mut xs.clone()), y: span(&mut ys.clone()) }
    }

    fn px(&self, x: f64) -> f64 {
        M + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * M)
    }

    fn py(&self, y: f64) -> f64 {
        H - M - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * M)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n"
        );
        s += &format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n");
        s += &format!("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{title}</text>\n", W / 2.0);
        s += &format!(
            "<path d=\"M{M} {t} V{b} H{r}\" stroke=\"black\" fill=\"none\"/>\n",
            t = M,
            b = H - M,
            r = W - M
        );
        s += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xlabel}</text>\n", W / 2.0, H - 10.0);
        s += &format!("<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">{ylabel}</text>\n", H / 2.0, H / 2.0);
        for (v, x, y, anchor) in [
            (self.x.0, M, H - M + 14.0, "start"),
            (self.x.1, W - M, H - M + 14.0, "end"),
        ] {
            s += &format!("<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\">{}</text>\n", tick(v));
        }
        for (v, y) in [(self.y.0, H - M), (self.y.1, M + 4.0)] {
            s += &format!("<text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{}</text>\n", M - 4.0, tick(v));
        }
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn polyline(frame: &Frame, xy: &[(f64, f64)], color: &str) -> String {
    let pts: Vec<String> = xy
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
        .collect();
    format!("<polyline points=\"{}\" stroke=\"{color}\" stroke-width=\"2\" fill=\"none\"/>\n", pts.join(" "))
}

fn line_svg(title: &str, xlabel: &str, xy: &[(f64, f64)]) -> String {
    let frame = Frame::fit(xy.iter().map(|p| p.0), xy.iter().map(|p| p.1));
    let mut s = frame.open(title, xlabel, "mean");
    s += &polyline(&frame, xy, "#1f77b4");
    for (x, y) in xy {
        s += &format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>\n", frame.px(*x), frame.py(*y));
    }
    s + "</svg>\n"
}

/// KL values span many decades, so KL plots use `log10(max(kl, 1e-12))`.
fn scatter_svg(records: &[EvalRecord], metric: &str, axis: &str, series: &BinnedSeries) -> String {
    let log = metric == "kl";
    let y = |v: f64| if log { v.max(1e-12).log10() } else { v };
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| {
            let x = if axis == "density" { r.density } else { r.sparsity };
            (x, y(if log { r.kl } else { r.abs_diff }))
        })
        .collect();
    let frame = Frame::fit(pts.iter().map(|p| p.0), pts.iter().map(|p| p.1));
    let ylabel = if log { "log10 kl" } else { metric };
    let mut s = frame.open(&format!("{metric} vs {axis}"), axis, ylabel);
    for (px, py) in &pts {
        s += &format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1\" fill=\"#999\" fill-opacity=\"0.4\"/>\n",
            frame.px(*px),
            frame.py(*py)
        );
    }
    let overlay: Vec<(f64, f64)> = series
        .means
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|m| ((series.edges[i] + series.edges[i + 1]) / 2.0, y(m))))
        .collect();
    s += &polyline(&frame, &overlay, "#d62728");
    s + "</svg>\n"
}

fn heatmap_svg(title: &str, rows: &[f64], cols: &[f64], values: &[Vec<Option<f64>>]) -> String {
    let flat: Vec<f64> = values.iter().flatten().flatten().copied().collect();
    let (lo, hi) = flat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let frame = Frame { x: (0.0, cols.len() as f64), y: (0.0, rows.len() as f64) };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
    s += &format!("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{title} (rows sigma1, columns sigma2)</text>\n", W / 2.0);
    let cw = frame.px(1.0) - frame.px(0.0);
    let ch = frame.py(0.0) - frame.py(1.0);
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let fill = match values[i][j] {
                Some(v) => {
                    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                    let g = (255.0 * (1.0 - t)).round() as u8;
                    format!("rgb(255,{g},{g})")
                }
                None => "#eee".to_string(),
            };
            s += &format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cw:.1}\" height=\"{ch:.1}\" fill=\"{fill}\" stroke=\"white\"/>\n",
                frame.px(j as f64),
                frame.py(i as f64 + 1.0)
            );
            if i == 0 {
                s += &format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{c}</text>\n", frame.px(j as f64 + 0.5), H - M + 14.0);
            }
        }
        s += &format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{r}</text>\n", M - 4.0, frame.py(i as f64 + 0.5));
    }
    s + "</svg>\n"
}

//! Aggregation of a run directory: final-value statistics per solver and
//! size, best-so-far curves, and step-count scaling for unlimited runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gna_core::training::Regime;
use serde::{Deserialize, Serialize};

use crate::experiment::Manifest;
use crate::plot::{band_plot, loglog_plot, BandSeries, PointSeries};
use crate::runner::{read_history, read_runs, RunRow, MANIFEST_FILE};
use crate::{io_err, HarnessError};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SCALING_FILE: &str = "scaling.csv";
pub const SCALING_FIT_FILE: &str = "scaling_fit.csv";
pub const PLOT_DIR: &str = "plots";

/// Mean, sample standard deviation (0 for a single value), min and max.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let std = if count > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(Stats {
        count,
        mean,
        std,
        min,
        max,
    })
}

/// Median with `+∞` allowed; the mean of the two middle values for even
/// counts. `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 {
        v[k / 2]
    } else {
        let (a, b) = (v[k / 2 - 1], v[k / 2]);
        if a.is_infinite() || b.is_infinite() {
            f64::INFINITY
        } else {
            0.5 * (a + b)
        }
    })
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// `None` unless at least two distinct positive `x` with positive finite `y`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(LogLogFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: String,
    pub problem: String,
    pub n: usize,
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub solved: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub solver: String,
    pub n: usize,
    pub runs: usize,
    pub solved: usize,
    /// Unsolved runs count as `+∞`.
    pub median_steps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFitRow {
    pub solver: String,
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub regime: Regime,
    pub summary: Vec<SummaryRow>,
    pub scaling: Vec<ScalingRow>,
    pub fits: Vec<ScalingFitRow>,
    /// `(problem, n)` to per-solver best-so-far bands.
    pub curves: BTreeMap<(String, usize), Vec<BandSeries>>,
}

/// Mean and min-max band of best-so-far curves, shorter curves extended
/// by their last value.
pub fn band(name: &str, curves: &[Vec<f64>]) -> Option<BandSeries> {
    let len = curves.iter().map(Vec::len).max()?;
    if len == 0 {
        return None;
    }
    let at = |c: &Vec<f64>, i: usize| c.get(i).or(c.last()).copied();
    let mut s = BandSeries {
        name: name.to_string(),
        x: (1..=len).map(|m| m as f64).collect(),
        mean: Vec::with_capacity(len),
        lo: Vec::with_capacity(len),
        hi: Vec::with_capacity(len),
    };
    for i in 0..len {
        let vals: Vec<f64> = curves.iter().filter_map(|c| at(c, i)).collect();
        let st = summarize(&vals)?;
        s.mean.push(st.mean);
        s.lo.push(st.min);
        s.hi.push(st.max);
    }
    Some(s)
}

pub fn build_report(dir: &Path) -> Result<Report, HarnessError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest = Manifest::from_toml(&text)?;
    let rows = read_runs(dir)?;
    if rows.is_empty() {
        return Err(HarnessError::Usage(format!("{} contains no runs", dir.display())));
    }

    let mut groups: BTreeMap<(String, String, usize), Vec<&RunRow>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.solver.clone(), row.problem.clone(), row.n))
            .or_default()
            .push(row);
    }

    let mut summary = Vec::new();
    let mut scaling = Vec::new();
    let mut curves: BTreeMap<(String, usize), Vec<BandSeries>> = BTreeMap::new();
    for ((solver, problem, n), runs) in &groups {
        let finals: Vec<f64> = runs.iter().filter(|r| r.ok()).filter_map(|r| r.final_best_f).collect();
        let failed = runs.iter().filter(|r| !r.ok()).count();
        let solved = runs.iter().filter(|r| r.steps_to_solve.is_some()).count();
        if let Some(st) = summarize(&finals) {
            summary.push(SummaryRow {
                solver: solver.clone(),
                problem: problem.clone(),
                n: *n,
                runs: runs.len(),
                failed,
                mean: st.mean,
                std: st.std,
                min: st.min,
                max: st.max,
                solved,
            });
        }
        let mut best_curves = Vec::new();
        for r in runs.iter().filter(|r| r.ok()) {
            best_curves.push(read_history(dir, r)?.best_curve());
        }
        if let Some(b) = band(solver, &best_curves) {
            curves.entry((problem.clone(), *n)).or_default().push(b);
        }
        if manifest.plan.spec.regime == Regime::Unlimited {
            let steps: Vec<f64> = runs
                .iter()
                .map(|r| r.steps_to_solve.map_or(f64::INFINITY, |s| s as f64))
                .collect();
            scaling.push(ScalingRow {
                solver: solver.clone(),
                n: *n,
                runs: runs.len(),
                solved,
                median_steps: median(&steps).unwrap_or(f64::INFINITY),
            });
        }
    }

    let mut fits = Vec::new();
    let mut by_solver: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &scaling {
        by_solver
            .entry(s.solver.as_str())
            .or_default()
            .push((s.n as f64, s.median_steps));
    }
    for (solver, pts) in by_solver {
        if let Some(f) = loglog_fit(&pts) {
            fits.push(ScalingFitRow {
                solver: solver.to_string(),
                slope: f.slope,
                intercept: f.intercept,
                points: f.points,
            });
        }
    }
    Ok(Report {
        regime: manifest.plan.spec.regime,
        summary,
        scaling,
        fits,
        curves,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_report(dir: &Path, report: &Report) -> Result<(), HarnessError> {
    write_csv(&dir.join(SUMMARY_FILE), &report.summary)?;
    let plots = dir.join(PLOT_DIR);
    fs::create_dir_all(&plots).map_err(|e| io_err(&plots, e))?;
    let xlabel = match report.regime {
        Regime::Limited => "queries",
        Regime::Unlimited => "training steps",
    };
    for ((problem, n), series) in &report.curves {
        let svg = band_plot(&format!("{problem}, n = {n}"), xlabel, "best f so far", series);
        let path = plots.join(format!("best-{problem}-n{n}.svg"));
        fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
    }
    if report.regime == Regime::Unlimited {
        write_csv(&dir.join(SCALING_FILE), &report.scaling)?;
        write_csv(&dir.join(SCALING_FIT_FILE), &report.fits)?;
        let mut series: Vec<PointSeries> = Vec::new();
        for s in &report.scaling {
            if !s.median_steps.is_finite() {
                continue;
            }
            let point = ((s.n as f64).log10(), s.median_steps.log10());
            match series.iter_mut().find(|p| p.name == s.solver) {
                Some(p) => p.points.push(point),
                None => series.push(PointSeries {
                    name: s.solver.clone(),
                    points: vec![point],
                    line: None,
                }),
            }
        }
        for p in &mut series {
            if let Some(f) = report.fits.iter().find(|f| f.solver == p.name) {
                // ln-space fit expressed in log10 coordinates.
                p.line = Some((f.intercept / std::f64::consts::LN_10, f.slope));
            }
        }
        let svg = loglog_plot("median steps to solve", "n", "steps", &series);
        let path = plots.join("scaling.svg");
        fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

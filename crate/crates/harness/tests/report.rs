use std::fs;
use std::path::PathBuf;

use gna_core::problems::ProblemKind;
use gna_core::training::Regime;
use gna_harness::experiment::{ExperimentSpec, Solver};
use gna_harness::report::{band, build_report, loglog_fit, median, summarize, write_report};
use gna_harness::runner::execute;

fn spec(out: PathBuf, seeds: Vec<u64>, regime: Regime, solvers: Vec<Solver>) -> ExperimentSpec {
    ExperimentSpec {
        problem: ProblemKind::Xorsat,
        sizes: vec![6],
        seeds,
        solvers,
        regime,
        budget: 24,
        max_steps: Some(40),
        beta_min: None,
        beta_upper: None,
        train_to_cap: false,
        out,
    }
}

#[test]
fn summary_statistics_by_hand() {
    let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!((s.count, s.mean, s.min, s.max), (4, 2.5, 1.0, 4.0));
    assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    let one = summarize(&[7.5]).unwrap();
    assert_eq!((one.mean, one.std, one.min, one.max), (7.5, 0.0, 7.5, 7.5));
    assert!(summarize(&[]).is_none());
}

#[test]
fn median_counts_unsolved_as_infinite() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    assert_eq!(median(&[1.0, f64::INFINITY, 5.0]), Some(5.0));
    assert_eq!(median(&[1.0, f64::INFINITY, f64::INFINITY]), Some(f64::INFINITY));
    assert_eq!(median(&[1.0, f64::INFINITY]), Some(f64::INFINITY));
    assert_eq!(median(&[]), None);
}

#[test]
fn loglog_fit_recovers_power_law() {
    let pts: Vec<(f64, f64)> = [10.0, 15.0, 20.0, 25.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(2.5))).collect();
    let fit = loglog_fit(&pts).unwrap();
    assert!((fit.slope - 2.5).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
    assert_eq!(fit.points, 4);
    let with_inf = [(10.0, 100.0), (20.0, 800.0), (30.0, f64::INFINITY)];
    let fit = loglog_fit(&with_inf).unwrap();
    assert!((fit.slope - 3.0).abs() < 1e-12);
    assert_eq!(fit.points, 2);
    assert!(loglog_fit(&[(10.0, 5.0)]).is_none());
    assert!(loglog_fit(&[(10.0, 5.0), (10.0, 7.0)]).is_none());
}

#[test]
fn band_extends_short_curves_with_their_last_value() {
    let b = band("x", &[vec![5.0, 3.0, 1.0], vec![4.0]]).unwrap();
    assert_eq!(b.x, vec![1.0, 2.0, 3.0]);
    assert_eq!(b.mean, vec![4.5, 3.5, 2.5]);
    assert_eq!(b.lo, vec![4.0, 3.0, 1.0]);
    assert_eq!(b.hi, vec![5.0, 4.0, 4.0]);
    assert!(band("x", &[]).is_none());
}

#[test]
fn limited_report_matches_run_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_path_buf();
    let plan = spec(out.clone(), vec![0, 1, 2], Regime::Limited, vec![Solver::GnaSa, Solver::Sa])
        .plan()
        .unwrap();
    let rows = execute(&plan, 2).unwrap();
    let report = build_report(&out).unwrap();
    write_report(&out, &report).unwrap();
    assert!(report.scaling.is_empty());
    assert_eq!(report.summary.len(), 2);
    for s in &report.summary {
        let finals: Vec<f64> = rows
            .iter()
            .filter(|r| r.solver == s.solver)
            .map(|r| r.final_best_f.unwrap())
            .collect();
        let mean = finals.iter().sum::<f64>() / 3.0;
        let var = finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 2.0;
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - var.sqrt()).abs() < 1e-12);
        assert_eq!(s.runs, 3);
        assert_eq!(s.failed, 0);
    }
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.starts_with("solver,problem,n,runs,failed,mean,std,min,max,solved\n"));
    let svg = fs::read_to_string(out.join("plots/best-xorsat-n6.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<polygon") && svg.contains("gna-sa"));
    assert!(!out.join("scaling.csv").exists());
}

#[test]
fn single_run_has_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_path_buf();
    execute(&spec(out.clone(), vec![4], Regime::Limited, vec![Solver::Sa]).plan().unwrap(), 1).unwrap();
    let report = build_report(&out).unwrap();
    assert_eq!(report.summary.len(), 1);
    let s = &report.summary[0];
    assert_eq!(s.std, 0.0);
    assert_eq!(s.min, s.mean);
    assert_eq!(s.max, s.mean);
}

#[test]
fn unlimited_report_writes_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_path_buf();
    let mut s = spec(out.clone(), vec![0, 1], Regime::Unlimited, vec![Solver::GnaPt]);
    s.sizes = vec![6, 9];
    let rows = execute(&s.plan().unwrap(), 1).unwrap();
    let report = build_report(&out).unwrap();
    write_report(&out, &report).unwrap();
    assert_eq!(report.scaling.len(), 2);
    for sc in &report.scaling {
        let steps: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == sc.n)
            .map(|r| r.steps_to_solve.map_or(f64::INFINITY, |v| v as f64))
            .collect();
        assert_eq!(Some(sc.median_steps), median(&steps));
    }
    assert!(out.join("scaling.csv").exists());
    assert!(out.join("scaling_fit.csv").exists());
    assert!(out.join("plots/scaling.svg").exists());
}

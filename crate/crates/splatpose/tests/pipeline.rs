mod common;

use splatpose::error::Error;
use splatpose::pipeline::{run_pipeline, run_seed, write_outputs, MetricsRow};
use splatpose::report;

#[test]
fn same_seed_same_metrics() {
    let cfg = common::small_config();
    let a = run_seed(&cfg, &cfg.scene, 3).unwrap();
    let b = run_seed(&cfg, &cfg.scene, 3).unwrap();
    assert_eq!(a.len(), 2);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.metrics, y.metrics);
        assert_eq!(x.poses, y.poses);
        assert_eq!(x.field, y.field);
    }
}

#[test]
fn ablations_cover_every_variant() {
    let mut cfg = common::small_config();
    cfg.ablations = true;
    cfg.view_counts = vec![2];
    let cases = run_seed(&cfg, &cfg.scene, 0).unwrap();
    let variants: Vec<&str> = cases.iter().map(|c| c.metrics.variant.as_str()).collect();
    assert_eq!(variants, ["full", "no-uncertainty", "no-ba", "no-diffusion-frames"]);
    for c in &cases {
        let m = &c.metrics;
        assert!((0.0..=1.0).contains(&m.add_auc) && m.adds_auc >= m.add_auc, "{m:?}");
        assert!(m.chamfer.is_finite() && m.psnr.is_finite());
    }
}

#[test]
fn report_over_five_seeds() {
    let mut cfg = common::small_config();
    cfg.seeds = 5;
    cfg.view_counts = vec![2];
    let dir = tempfile::tempdir().unwrap();
    let cases = run_pipeline(&cfg).unwrap();
    write_outputs(dir.path(), &cfg, &cases).unwrap();
    for f in ["metrics.csv", "metrics.json", "poses.csv", "timings.csv", "object.ply", "graph.json", "solver_costs.csv", "config.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }

    let rows = report::report(dir.path()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].runs, 5);
    let metrics: Vec<MetricsRow> = cases.iter().map(|c| c.metrics.clone()).collect();
    let auc: Vec<f64> = metrics.iter().map(|m| m.add_auc).collect();
    assert_eq!(rows[0].add_auc_median, report::median_iqr(&auc).0);
    assert!(dir.path().join("report.md").is_file());
    assert!(dir.path().join("report.csv").is_file());
}

#[test]
fn report_of_single_run_has_zero_spread() {
    let cfg = common::small_config();
    let dir = tempfile::tempdir().unwrap();
    let cases = run_pipeline(&cfg).unwrap();
    write_outputs(dir.path(), &cfg, &cases).unwrap();
    let rows = report::report(dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.runs == 1 && r.add_auc_iqr == 0.0 && r.psnr_iqr == 0.0));
}

#[test]
fn report_without_runs_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(report::report(dir.path()), Err(Error::MissingRuns(_))));
}

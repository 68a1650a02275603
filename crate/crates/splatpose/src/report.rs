//! Aggregates per-seed metrics into median ± IQR tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::pipeline::MetricsRow;

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median (mean of the middle pair for even counts) and interquartile range.
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    (median, quantile(&v, 0.75) - quantile(&v, 0.25))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub object: String,
    pub variant: String,
    pub views: usize,
    pub runs: usize,
    pub add_auc_median: f64,
    pub add_auc_iqr: f64,
    pub adds_auc_median: f64,
    pub adds_auc_iqr: f64,
    pub chamfer_median: f64,
    pub chamfer_iqr: f64,
    pub psnr_median: f64,
    pub psnr_iqr: f64,
}

fn find_metrics(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_metrics(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.csv") {
            out.push(p);
        }
    }
    Ok(())
}

/// Every metrics row found under `dir`, in path order.
pub fn collect(dir: &Path) -> Result<Vec<MetricsRow>> {
    let mut files = Vec::new();
    if dir.is_dir() {
        find_metrics(dir, &mut files)?;
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(io::read_csv::<MetricsRow>(f)?);
    }
    if rows.is_empty() {
        return Err(Error::MissingRuns(dir.to_path_buf()));
    }
    Ok(rows)
}

/// One summary row per `(object, variant, views)`.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.object.clone(), r.variant.clone(), r.views)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((object, variant, views), g)| {
            let stat = |f: fn(&MetricsRow) -> f64| median_iqr(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (add_auc_median, add_auc_iqr) = stat(|r| r.add_auc);
            let (adds_auc_median, adds_auc_iqr) = stat(|r| r.adds_auc);
            let (chamfer_median, chamfer_iqr) = stat(|r| r.chamfer);
            let (psnr_median, psnr_iqr) = stat(|r| r.psnr);
            SummaryRow {
                object,
                variant,
                views,
                runs: g.len(),
                add_auc_median,
                add_auc_iqr,
                adds_auc_median,
                adds_auc_iqr,
                chamfer_median,
                chamfer_iqr,
                psnr_median,
                psnr_iqr,
            }
        })
        .collect()
}

/// Markdown table; chamfer is shown in millimetres.
pub fn markdown(rows: &[SummaryRow]) -> String {
    let mut s = String::from("| object | variant | views | runs | ADD AUC | ADD-S AUC | CD (mm) | PSNR (dB) |\n");
    s.push_str("|---|---|---:|---:|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.3} ± {:.3} | {:.2} ± {:.2} |\n",
            r.object,
            r.variant,
            r.views,
            r.runs,
            r.add_auc_median,
            r.add_auc_iqr,
            r.adds_auc_median,
            r.adds_auc_iqr,
            r.chamfer_median * 1e3,
            r.chamfer_iqr * 1e3,
            r.psnr_median,
            r.psnr_iqr,
        ));
    }
    s
}

/// Reads every `metrics.csv` under `dir` and writes `report.csv` and
/// `report.md` next to them.
pub fn report(dir: &Path) -> Result<Vec<SummaryRow>> {
    let rows = summarize(&collect(dir)?);
    io::write_csv(&dir.join("report.csv"), &rows)?;
    let path = dir.join("report.md");
    fs::write(&path, markdown(&rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_and_iqr_examples() {
        assert_eq!(median_iqr(&[3.0]), (3.0, 0.0));
        assert_eq!(median_iqr(&[5.0, 1.0, 4.0, 2.0, 3.0]), (3.0, 2.0));
        assert_eq!(median_iqr(&[1.0, 2.0, 3.0, 4.0]).0, 2.5);
    }

    proptest! {
        #[test]
        fn odd_median_is_the_sorted_middle(mut v in prop::collection::vec(-1e3f64..1e3, 1..20)) {
            if v.len() % 2 == 0 { v.pop(); }
            let (m, iqr) = median_iqr(&v);
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            prop_assert_eq!(m, s[s.len() / 2]);
            prop_assert!(iqr >= 0.0);
        }
    }
}

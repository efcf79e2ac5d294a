//! Metric tables: CSV `metric,value,stderr` and an aligned text table.
//! `stderr` is the standard error across repeats and is blank for a
//! single run or an absent metric.

use std::fmt::Write as _;

use scoremol_core::metrics::MetricsReport;

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub metric: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
}

/// Combines reports from repeated runs row by row. A metric absent from any
/// run is absent from the summary. `fdd_label` replaces the `FDD/Test` name.
pub fn summarize(reports: &[MetricsReport], fdd_label: &str) -> Vec<Row> {
    let Some(first) = reports.first() else { return Vec::new() };
    let per_run: Vec<Vec<(String, Option<f64>)>> = reports.iter().map(|r| r.rows()).collect();
    first
        .rows()
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let vals: Option<Vec<f64>> = per_run.iter().map(|rows| rows[i].1).collect();
            let metric = if name == "FDD/Test" { fdd_label.to_string() } else { name.clone() };
            let (value, stderr) = match vals {
                Some(v) => {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let se = (v.len() > 1).then(|| {
                        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
                        (var / n).sqrt()
                    });
                    (Some(mean), se)
                }
                None => (None, None),
            };
            Row { metric, value, stderr }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut s = String::from("metric,value,stderr\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.metric, cell(r.value), cell(r.stderr));
    }
    s
}

pub fn to_table(rows: &[Row]) -> String {
    let w = rows.iter().map(|r| r.metric.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<w$}  {:>10}  {:>10}\n", "metric", "value", "stderr");
    for r in rows {
        let v = r.value.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
        let e = r.stderr.map(|x| format!("{x:.4}")).unwrap_or_default();
        let _ = writeln!(s, "{:<w$}  {v:>10}  {e:>10}", r.metric);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(valid: f64, fdd: Option<f64>) -> MetricsReport {
        MetricsReport {
            n_generated: 4,
            n_train: 4,
            n_test: 4,
            valid,
            empty: 0,
            unique: vec![(1000, None)],
            novelty: 0.5,
            intdiv1: 0.25,
            intdiv2: 0.3,
            filters: 1.0,
            fdd,
        }
    }

    #[test]
    fn single_run_has_blank_stderr() {
        let rows = summarize(&[report(1.0, Some(2.0))], "FDD/Train");
        let csv = to_csv(&rows);
        assert!(csv.starts_with("metric,value,stderr\nValid,1.000000,\nUnique@1k,,\nFDD/Train,2.000000,\n"), "{csv}");
    }

    #[test]
    fn repeats_give_standard_error() {
        let rows = summarize(&[report(1.0, Some(1.0)), report(0.5, None), report(0.0, Some(3.0))], "FDD/Test");
        assert_eq!(rows[0].value, Some(0.5));
        assert!((rows[0].stderr.unwrap() - (0.25f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(rows[2], Row { metric: "FDD/Test".into(), value: None, stderr: None });
        let table = to_table(&rows);
        assert!(table.lines().any(|l| l.starts_with("FDD/Test") && l.contains("n/a")));
    }
}

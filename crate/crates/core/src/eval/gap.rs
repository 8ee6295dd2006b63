//! Aligned generalization-gap series and their rank correlation with
//! recognizability.

use serde::{Deserialize, Serialize};

use super::fcmi::fcmi_bound;
use crate::train::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub run_id: String,
    pub n: usize,
    pub train_err: f64,
    pub test_err: Option<f64>,
    pub gap: Option<f64>,
    pub recognizability: Option<f64>,
    pub fcmi_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    /// Spearman correlation of recognizability against gap; absent when
    /// undefined.
    pub spearman: Option<f64>,
    /// Why the correlation is absent.
    pub note: Option<String>,
}

impl GapReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("run,n,train_err,test_err,gap,recognizability,fcmi_bound\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.run_id,
                r.n,
                r.train_err,
                opt(r.test_err),
                opt(r.gap),
                opt(r.recognizability),
                opt(r.fcmi_bound)
            ));
        }
        out
    }
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks; `None` for fewer than two points
/// or when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn gap_report(records: &[RunRecord]) -> GapReport {
    let rows: Vec<GapRow> = records
        .iter()
        .map(|r| {
            let f = &r.final_metrics;
            GapRow {
                run_id: r.run_id.clone(),
                n: r.n_train,
                train_err: f.train_err,
                test_err: f.test_err,
                gap: f.gap,
                recognizability: f.recognizability,
                fcmi_bound: f.fcmi.map(|mi| fcmi_bound(mi * r.n_train as f64, r.n_train)),
            }
        })
        .collect();
    let (rec, gap): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| Some((r.recognizability?, r.gap?)))
        .unzip();
    let spearman = spearman(&rec, &gap);
    let note = match (spearman, rec.len()) {
        (Some(_), _) => None,
        (None, k) if k < 2 => Some(format!("{k} row(s) with both recognizability and gap")),
        (None, _) => Some("constant series (all values tied)".into()),
    };
    GapReport { rows, spearman, note }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
    }
}

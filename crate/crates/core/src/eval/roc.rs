//! AUC, recognizability, ROC curves and achievable regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Input(format!(
            "need non-empty score sets, got {} positive and {} negative",
            pos.len(),
            neg.len()
        )));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::Input("scores contain NaN".into()));
    }
    Ok(())
}

/// Mann-Whitney AUC with half credit for ties.
///
/// Sorts once and counts, per tie group, `2·(negatives strictly below) +
/// (negatives tied)` for each positive. The integer total is divided once,
/// so the result equals the pairwise definition exactly.
pub fn auc_roc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut twice: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        twice += p * (2 * neg_below + q);
        neg_below += q;
        i = j;
    }
    Ok(twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64)
}

/// Symmetrized recognizability from an AUC.
pub fn recognizability_from_auc(auc: f64) -> f64 {
    2.0 * auc.max(1.0 - auc) - 1.0
}

/// `2·max(AUC, 1 − AUC) − 1`; `pos` are joint-arrangement scores and `neg`
/// marginal-arrangement scores.
pub fn recognizability(pos: &[f64], neg: &[f64]) -> Result<f64> {
    Ok(recognizability_from_auc(auc_roc(pos, neg)?))
}

/// Piecewise-linear ROC curve from `(0,0)` to `(1,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false-positive rate, true-positive rate)` pairs.
    pub points: Vec<(f64, f64)>,
    /// Decision threshold of each point; `+∞` for the origin.
    pub thresholds: Vec<f64>,
}

/// Empirical curve over every distinct score, predicting positive when
/// `score ≥ threshold`.
pub fn roc_curve(pos: &[f64], neg: &[f64]) -> Result<RocCurve> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (m, k) = (pos.len() as f64, neg.len() as f64);

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let tau = all[i].0;
        while i < all.len() && all[i].0 == tau {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / k, tp as f64 / m));
        thresholds.push(tau);
    }
    Ok(RocCurve { points, thresholds })
}

impl RocCurve {
    /// Builds a curve from points, checking endpoints and monotonicity.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        let curve = Self {
            thresholds: vec![f64::NAN; points.len()],
            points,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        let (Some(&first), Some(&last)) = (self.points.first(), self.points.last()) else {
            return Err(Error::Input("ROC curve has no points".into()));
        };
        if first != (0.0, 0.0) || last != (1.0, 1.0) {
            return Err(Error::Input(format!(
                "ROC curve must run from (0,0) to (1,1), got {first:?} to {last:?}"
            )));
        }
        if !monotone(&self.points) {
            return Err(Error::Input("ROC curve coordinates must be non-decreasing".into()));
        }
        Ok(())
    }

    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }

    /// Upper convex hull (the ROC of the best randomized tests).
    pub fn convex_hull(&self) -> RocCurve {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for p in pts {
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                // drop b unless a → b → p turns clockwise
                let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            if hull.last() == Some(&p) {
                continue;
            }
            hull.push(p);
        }
        RocCurve {
            thresholds: vec![f64::NAN; hull.len()],
            points: hull,
        }
    }

    /// `fpr,tpr,threshold` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for (&(x, y), t) in self.points.iter().zip(&self.thresholds) {
            out.push_str(&format!("{x},{y},{t}\n"));
        }
        out
    }
}

fn monotone(points: &[(f64, f64)]) -> bool {
    points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1)
}

/// Closed polygon given as its vertex sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
}

impl Polygon {
    /// Shoelace area (absolute value).
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let twice: f64 = (0..v.len())
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in &self.vertices {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// The curve followed by its reflection through `(½, ½)`.
///
/// Walking the curve from `(0,0)` to `(1,1)` and then the reflected curve
/// back traces the boundary of the region between them, whose area is
/// `2·AUC − 1` when `AUC ≥ ½`.
pub fn achievable_region(curve: &RocCurve) -> Polygon {
    let mut vertices = curve.points.clone();
    let n = curve.points.len();
    if n > 2 {
        vertices.extend(
            curve.points[1..n - 1]
                .iter()
                .map(|&(x, y)| (1.0 - x, 1.0 - y)),
        );
    }
    Polygon { vertices }
}

/// Endpoint (c1), monotonicity (c2) and concavity (c3) checks on a curve `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocConditions {
    /// `|ψ(1) − ψ(0) − 1|`.
    pub c1_err: f64,
    /// `ψ′ ≥ 0`: both coordinates non-decreasing.
    pub c2_ok: bool,
    /// `ψ″ ≤ 0`: segment slopes non-increasing.
    pub c3_ok: bool,
}

impl RocConditions {
    pub fn all_pass(&self, c1_tol: f64) -> bool {
        self.c1_err <= c1_tol && self.c2_ok && self.c3_ok
    }
}

/// Relative slack allowed between successive slopes in the concavity check.
const SLOPE_TOL: f64 = 1e-9;

pub fn roc_conditions_check(curve: &RocCurve) -> RocConditions {
    let pts = &curve.points;
    let c1_err = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (b.1 - a.1 - 1.0).abs(),
        _ => 1.0,
    };
    let c2_ok = monotone(pts);
    let mut c3_ok = true;
    let mut prev = f64::INFINITY;
    for w in pts.windows(2) {
        let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        let slope = if dx > 0.0 {
            dy / dx
        } else if dy > 0.0 {
            f64::INFINITY
        } else {
            continue;
        };
        if slope > prev && slope - prev > SLOPE_TOL * prev.abs().max(1.0) {
            c3_ok = false;
        }
        prev = slope;
    }
    RocConditions { c1_err, c2_ok, c3_ok }
}

/// Count, mean, spread and range of a score set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ScoreSummary {
    pub fn of(scores: &[f64]) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self {
            count: scores.len(),
            mean,
            std: var.sqrt(),
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizabilityReport {
    pub auc: f64,
    pub recognizability: f64,
    pub positive: ScoreSummary,
    pub negative: ScoreSummary,
    pub curve: RocCurve,
    pub region: Polygon,
}

/// Full report on joint (`pos`) versus marginal (`neg`) critic scores.
pub fn recognizability_report(pos: &[f64], neg: &[f64]) -> Result<RecognizabilityReport> {
    let auc = auc_roc(pos, neg)?;
    let curve = roc_curve(pos, neg)?;
    let region = achievable_region(&curve);
    Ok(RecognizabilityReport {
        auc,
        recognizability: recognizability_from_auc(auc),
        positive: ScoreSummary::of(pos),
        negative: ScoreSummary::of(neg),
        curve,
        region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(auc_roc(&[5.0, 5.0, 5.0], &[5.0]).unwrap(), 0.5);
        assert!(matches!(auc_roc(&[], &[1.0]), Err(Error::Input(_))));
        assert!(auc_roc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn recognizability_examples() {
        assert_eq!(recognizability_from_auc(0.5), 0.0);
        assert_eq!(recognizability_from_auc(1.0), 1.0);
        assert_eq!(recognizability_from_auc(0.75), 0.5);
        assert_eq!(recognizability_from_auc(0.25), 0.5);
    }

    #[test]
    fn separated_curve_hits_corner() {
        let c = roc_curve(&[2.0, 3.0], &[0.0, 1.0]).unwrap();
        assert!(c.points.contains(&(0.0, 1.0)));
        assert_eq!(c.area(), 1.0);
        let region = achievable_region(&c);
        assert_eq!(region.area(), 1.0);
    }

    #[test]
    fn all_tied_curve_is_diagonal() {
        let c = roc_curve(&[1.0; 4], &[1.0; 3]).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(achievable_region(&c).area(), 0.0);
        let cond = roc_conditions_check(&c);
        assert!(cond.all_pass(0.0));
    }

    #[test]
    fn hull_of_staircase_is_concave() {
        let c = roc_curve(&[0.9, 0.4, 0.8, 0.1, 0.6], &[0.5, 0.2, 0.7, 0.3, 0.0]).unwrap();
        let hull = c.convex_hull();
        assert_eq!(hull.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(hull.points.last(), Some(&(1.0, 1.0)));
        let cond = roc_conditions_check(&hull);
        assert!(cond.c2_ok && cond.c3_ok && cond.c1_err == 0.0);
        assert!(hull.area() >= c.area());
    }

    #[test]
    fn from_points_rejects_bad_curves() {
        assert!(RocCurve::from_points(vec![(0.0, 0.0), (0.5, 0.4), (1.0, 1.0)]).is_ok());
        assert!(RocCurve::from_points(vec![(0.0, 0.1), (1.0, 1.0)]).is_err());
        assert!(RocCurve::from_points(vec![(0.0, 0.0), (0.5, 0.6), (0.4, 0.7), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn summaries() {
        let s = ScoreSummary::of(&[1.0, 3.0]);
        assert_eq!((s.count, s.mean, s.std, s.min, s.max), (2, 2.0, 1.0, 1.0, 3.0));
    }
}

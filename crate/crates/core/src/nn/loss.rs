use super::Matrix;
use crate::error::{shape_err, Error, Result};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the
/// logits, `(softmax − onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (rows, classes) = logits.dim();
    if rows != labels.len() {
        return shape_err("softmax_cross_entropy labels", rows, labels.len());
    }
    if rows == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }

    let scale = 1.0 / rows as f64;
    let mut grad = Matrix::zeros((rows, classes));
    let mut total = 0.0;
    for (i, (row, &y)) in logits.outer_iter().zip(labels).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - row[y];
        let mut g = grad.row_mut(i);
        for (k, &v) in row.iter().enumerate() {
            g[k] = (v - log_z).exp() * scale;
        }
        g[y] -= scale;
    }
    Ok((total * scale, grad))
}

//! Pointwise losses, all mean-reduced. Non-finite inputs are rejected here,
//! which is where NaNs produced anywhere in a forward pass surface.

use super::tensor::{push_custom, Scalar, Tensor};
use super::{NnError, Result};

const BCE_EPS: f64 = 1e-7;

fn check_finite<T: Scalar>(x: &Tensor<T>, op: &'static str) -> Result<()> {
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite(op));
    }
    Ok(())
}

/// Mean absolute error.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            op: "l1_loss",
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    check_finite(pred, "l1_loss.pred")?;
    check_finite(target, "l1_loss.target")?;
    let n = T::from_f64(pred.numel() as f64);
    let loss: T = pred
        .values()
        .iter()
        .zip(target.values().iter())
        .map(|(&p, &t)| (p - t).abs())
        .sum::<T>()
        / n;
    let (p_vals, t_vals) = (pred.values().to_vec(), target.values().to_vec());
    let (p_node, t_node) = (pred.node_id(), target.node_id());
    let backward = Box::new(move |g: &[T], gs: &mut super::tensor::GradStore<T>| {
        let scale = g[0] / n;
        gs.accumulate(p_node, |gp| {
            for i in 0..gp.len() {
                gp[i] += scale * sign(p_vals[i] - t_vals[i]);
            }
        });
        gs.accumulate(t_node, |gt| {
            for i in 0..gt.len() {
                gt[i] -= scale * sign(p_vals[i] - t_vals[i]);
            }
        });
    });
    Ok(push_custom(pred.tape(), vec![loss], vec![1], backward))
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Mean binary cross-entropy; predictions are clamped into
/// `[1e-7, 1 - 1e-7]` before the logs.
pub fn bce_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            op: "bce_loss",
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    check_finite(pred, "bce_loss.pred")?;
    check_finite(target, "bce_loss.target")?;
    let lo = T::from_f64(BCE_EPS);
    let hi = T::one() - lo;
    let n = T::from_f64(pred.numel() as f64);
    let clamped: Vec<T> =
        pred.values().iter().map(|&p| if p < lo { lo } else if p > hi { hi } else { p }).collect();
    let mut loss = T::zero();
    for (&p, &y) in clamped.iter().zip(target.values().iter()) {
        loss -= y * p.ln() + (T::one() - y) * (T::one() - p).ln();
    }
    loss /= n;

    let t_vals = target.values().to_vec();
    let p_raw = pred.values().to_vec();
    let (p_node, t_node) = (pred.node_id(), target.node_id());
    let backward = Box::new(move |g: &[T], gs: &mut super::tensor::GradStore<T>| {
        let scale = g[0] / n;
        gs.accumulate(p_node, |gp| {
            for i in 0..gp.len() {
                // No gradient through the clamp when it is active.
                if p_raw[i] < lo || p_raw[i] > hi {
                    continue;
                }
                let p = clamped[i];
                let y = t_vals[i];
                gp[i] += scale * ((T::one() - y) / (T::one() - p) - y / p);
            }
        });
        gs.accumulate(t_node, |gt| {
            for i in 0..gt.len() {
                let p = clamped[i];
                gt[i] += scale * ((T::one() - p).ln() - p.ln());
            }
        });
    });
    Ok(push_custom(pred.tape(), vec![loss], vec![1], backward))
}

/// Cross-entropy between `logits: [n, V]` and one label per row, mean over
/// the `n` sequence positions.
pub fn ce_loss<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    if logits.shape().len() != 2 || logits.shape()[0] != labels.len() {
        return Err(NnError::ShapeMismatch {
            op: "ce_loss",
            detail: format!("logits {:?} vs {} labels", logits.shape(), labels.len()),
        });
    }
    check_finite(logits, "ce_loss.logits")?;
    let (n, v) = (logits.shape()[0], logits.shape()[1]);
    for &l in labels {
        if l >= v {
            return Err(NnError::LabelOutOfRange { label: l, vocab: v });
        }
    }
    let vals = logits.values().to_vec();
    let mut loss = T::zero();
    let mut log_zs = Vec::with_capacity(n);
    for (r, &label) in labels.iter().enumerate() {
        let row = &vals[r * v..(r + 1) * v];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_z = row.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
        log_zs.push(log_z);
        loss += log_z - row[label];
    }
    let n_t = T::from_f64(n as f64);
    loss /= n_t;

    let labels_owned = labels.to_vec();
    let node = logits.node_id();
    let backward = Box::new(move |g: &[T], gs: &mut super::tensor::GradStore<T>| {
        let scale = g[0] / n_t;
        gs.accumulate(node, |gx| {
            for (r, &label) in labels_owned.iter().enumerate() {
                let row = &vals[r * v..(r + 1) * v];
                for j in 0..v {
                    let softmax = (row[j] - log_zs[r]).exp();
                    let target = if j == label { T::one() } else { T::zero() };
                    gx[r * v + j] += scale * (softmax - target);
                }
            }
        });
    });
    Ok(push_custom(logits.tape(), vec![loss], vec![1], backward))
}

//! Connectionist temporal classification loss via the standard forward
//! recursion in log space, with the analytic gradient from the
//! forward-backward variables.

use super::tensor::{push_custom, Scalar, Tensor};
use super::{NnError, Result};

/// Smallest frame count that can emit `labels` (a blank is required between
/// repeated labels).
pub fn ctc_min_frames(labels: &[usize]) -> usize {
    let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
    labels.len() + repeats
}

fn log_add<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (T::one() + (lo - hi).exp()).ln()
}

/// `log_probs: [T, V+1]` with the blank at index `V`; `labels` must use
/// indices `< V`. Returns the negative log probability of all alignments
/// that collapse to `labels`.
pub fn ctc_loss<T: Scalar>(log_probs: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    if log_probs.shape().len() != 2 {
        return Err(NnError::ShapeMismatch {
            op: "ctc_loss",
            detail: format!("expected [T, V+1], got {:?}", log_probs.shape()),
        });
    }
    let (t_len, width) = (log_probs.shape()[0], log_probs.shape()[1]);
    if width < 2 {
        return Err(NnError::ShapeMismatch {
            op: "ctc_loss",
            detail: format!("vocabulary too small: {width}"),
        });
    }
    let blank = width - 1;
    for &l in labels {
        if l >= blank {
            return Err(NnError::LabelOutOfRange { label: l, vocab: blank });
        }
    }
    let min_frames = ctc_min_frames(labels);
    if t_len < min_frames {
        return Err(NnError::CtcInfeasible { frames: t_len, labels: labels.len(), min_frames });
    }
    if log_probs.values().iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("ctc_loss.log_probs"));
    }

    // Extended label sequence: blank, l1, blank, l2, ..., blank.
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(labels.iter().flat_map(|&l| [l, blank]))
        .collect();
    let s_len = ext.len();
    let lp = log_probs.values().to_vec();
    let at = |t: usize, k: usize| lp[t * width + k];
    let ninf = T::neg_infinity();

    // Forward variables, alpha[t][s] includes the emission at t.
    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = at(0, ext[0]);
    if s_len > 1 {
        alpha[1] = at(0, ext[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[(t - 1) * s_len + s];
            if s >= 1 {
                acc = log_add(acc, alpha[(t - 1) * s_len + s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, alpha[(t - 1) * s_len + s - 2]);
            }
            alpha[t * s_len + s] =
                if acc == ninf { ninf } else { acc + at(t, ext[s]) };
        }
    }
    let mut log_p = alpha[(t_len - 1) * s_len + s_len - 1];
    if s_len > 1 {
        log_p = log_add(log_p, alpha[(t_len - 1) * s_len + s_len - 2]);
    }

    // Backward variables, beta[t][s] also includes the emission at t.
    let mut beta = vec![ninf; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = at(t_len - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[(t_len - 1) * s_len + s_len - 2] = at(t_len - 1, ext[s_len - 2]);
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[(t + 1) * s_len + s];
            if s + 1 < s_len {
                acc = log_add(acc, beta[(t + 1) * s_len + s + 1]);
            }
            if s + 2 < s_len && ext[s + 2] != blank && ext[s + 2] != ext[s] {
                acc = log_add(acc, beta[(t + 1) * s_len + s + 2]);
            }
            beta[t * s_len + s] = if acc == ninf { ninf } else { acc + at(t, ext[s]) };
        }
    }

    let node = log_probs.node_id();
    let loss = -log_p;
    let lp_owned = lp.clone();
    let backward = Box::new(move |g: &[T], gs: &mut super::tensor::GradStore<T>| {
        gs.accumulate(node, |gx| {
            for t in 0..t_len {
                // log sum over states with label k of alpha+beta (minus the
                // doubly counted emission).
                let mut per_label = vec![ninf; width];
                for s in 0..s_len {
                    let a = alpha[t * s_len + s];
                    let b = beta[t * s_len + s];
                    if a == ninf || b == ninf {
                        continue;
                    }
                    let k = ext[s];
                    per_label[k] = log_add(per_label[k], a + b - lp_owned[t * width + k]);
                }
                for k in 0..width {
                    if per_label[k] == ninf {
                        continue;
                    }
                    // d(-logP)/d lp(t,k) = -exp(gamma(t,k) - logP)
                    gx[t * width + k] -= g[0] * (per_label[k] - log_p).exp();
                }
            }
        });
    });
    Ok(push_custom(log_probs.tape(), vec![loss], vec![1], backward))
}

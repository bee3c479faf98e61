//! Central finite-difference verification of analytic gradients, run in
//! double precision.

use super::store::ParamStore;
use super::tensor::Gradients;

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compare `analytic` against central differences of `loss_fn` for every
/// parameter in the store. Large parameters are subsampled to at most
/// `max_components` evenly spaced entries.
pub fn finite_diff_check<F>(
    store: &mut ParamStore<f64>,
    analytic: &Gradients<f64>,
    mut loss_fn: F,
    eps: f64,
    max_components: usize,
) -> GradCheckReport
where
    F: FnMut(&ParamStore<f64>) -> f64,
{
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.values(id).len();
        let step = (n / max_components.max(1)).max(1);
        for i in (0..n).step_by(step) {
            let original = store.values(id)[i];
            store.values_mut(id)[i] = original + eps;
            let plus = loss_fn(store);
            store.values_mut(id)[i] = original - eps;
            let minus = loss_fn(store);
            store.values_mut(id)[i] = original;

            let fd = (plus - minus) / (2.0 * eps);
            let an = analytic.for_param(id).map_or(0.0, |g| g[i]);
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
            }
        }
    }
    report
}

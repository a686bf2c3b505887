//! Central-difference verification of analytic gradients.

use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::{Result, TensorError};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1, |analytic|)` over checked coordinates.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

/// Compare the gradient of the scalar built by `f` against central
/// differences with step `h`, for every parameter in `store`.
///
/// `max_coords` caps the coordinates checked per tensor (evenly strided);
/// `None` checks all of them. `f` must be deterministic.
pub fn grad_check<F>(
    store: &mut ParamStore,
    h: f64,
    max_coords: Option<usize>,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, s)?;
        if g.value(out).numel() != 1 {
            return Err(TensorError::Dimension("grad_check needs a scalar output".into()));
        }
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    let grads = g.backward(out)?;
    store.zero_grad();
    store.accumulate(&g, &grads);
    let analytic: Vec<(String, Vec<f64>)> = store
        .iter()
        .map(|(n, t)| (n.to_string(), t.grad().expect("zeroed").to_vec()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    for (name, grad) in analytic {
        let n = grad.len();
        let stride = match max_coords {
            Some(c) if c > 0 && n > c => n.div_ceil(c),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let orig = store.get(&name).expect("present").data()[i];
            store.get_mut(&name).expect("present").data_mut()[i] = orig + h;
            let plus = eval(store)?;
            store.get_mut(&name).expect("present").data_mut()[i] = orig - h;
            let minus = eval(store)?;
            store.get_mut(&name).expect("present").data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let err = (grad[i] - numeric).abs() / grad[i].abs().max(1.0);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((name.clone(), i));
                }
            }
        }
    }
    Ok(report)
}

//! Central-difference gradient checking for taped functions.

use super::{Tensor, TensorError};

/// Result of checking one parameter tensor.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: usize,
    pub worst_index: usize,
}

/// Compare analytic gradients against central differences.
///
/// `f` evaluates the scalar loss for the given parameter values; when
/// `want_grads` is true it must also fill each tensor's `grad`. Relative
/// error per entry is |analytic - fd| / max(1e-8, |fd|). Any NaN in the
/// loss or gradients is an error.
pub fn finite_diff_check(
    params: &mut [Tensor],
    eps: f64,
    f: &mut dyn FnMut(&mut [Tensor], bool) -> Result<f64, TensorError>,
) -> Result<GradCheckReport, TensorError> {
    for p in params.iter_mut() {
        p.zero_grad();
    }
    let loss = f(params, true)?;
    if !loss.is_finite() {
        return Err(TensorError::NonFinite {
            context: "finite_diff_check loss".into(),
        });
    }
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            p.grad
                .clone()
                .unwrap_or_else(|| vec![0.0; p.data.len()])
        })
        .collect();
    for (pi, g) in analytic.iter().enumerate() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                context: format!("finite_diff_check analytic grad of param {pi}"),
            });
        }
    }

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: 0,
        worst_index: 0,
    };
    for pi in 0..params.len() {
        for ei in 0..params[pi].data.len() {
            let orig = params[pi].data[ei];
            params[pi].data[ei] = orig + eps;
            let up = f(params, false)?;
            params[pi].data[ei] = orig - eps;
            let down = f(params, false)?;
            params[pi].data[ei] = orig;
            let fd = (up - down) / (2.0 * eps);
            if !fd.is_finite() {
                return Err(TensorError::NonFinite {
                    context: format!("finite_diff_check fd at param {pi} index {ei}"),
                });
            }
            let rel = (analytic[pi][ei] - fd).abs() / fd.abs().max(1e-8);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = pi;
                report.worst_index = ei;
            }
        }
    }
    Ok(report)
}

use alloc::string::String;
use alloc::vec::Vec;

use super::{NumError, ParamSet, Tensor};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name and element index of the largest error.
    pub worst: Option<(String, usize)>,
}

/// Relative error with a small floor so that two vanishing values compare equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the gradients `objective` accumulates into `params` against
/// central differences with step `h`, on up to `per_param` evenly spaced
/// elements of every entry.
///
/// `objective` must return the scalar loss and add its gradient into the
/// parameter gradients.
pub fn grad_check<F>(params: &mut ParamSet, h: f64, per_param: usize, mut objective: F) -> Result<GradReport, NumError>
where
    F: FnMut(&mut ParamSet) -> Result<f64, NumError>,
{
    params.zero_grad();
    objective(params)?;
    let analytic: Vec<Tensor> = params.ids().map(|id| params.grad(id).clone()).collect();
    let mut report = GradReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    let ids: Vec<_> = params.ids().collect();
    for (id, grad) in ids.into_iter().zip(&analytic) {
        let n = grad.len();
        let stride = (n / per_param.max(1)).max(1);
        for k in (0..n).step_by(stride).take(per_param) {
            let orig = params.scalar(id, k);
            params.set_scalar(id, k, orig + h);
            let up = objective(params)?;
            params.set_scalar(id, k, orig - h);
            let down = objective(params)?;
            params.set_scalar(id, k, orig);
            let numeric = (up - down) / (2.0 * h);
            let err = rel_err(grad.data()[k], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((params.name(id).into(), k));
            }
        }
    }
    params.zero_grad();
    Ok(report)
}

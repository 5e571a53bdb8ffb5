//! Central finite-difference verification of analytic gradients.

use super::params::ParamSet;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

/// Compares `grad` (analytic, at `params`) against central differences of
/// `loss`. Relative error is `|a − n| / max(|a|, |n|, floor)`; the floor keeps
/// vanishing gradients from inflating the ratio. At most `per_tensor`
/// evenly spaced entries of each tensor are probed.
pub fn gradient_check(
    params: &ParamSet<f64>,
    grad: &ParamSet<f64>,
    loss: impl Fn(&ParamSet<f64>) -> f64,
    step: f64,
    per_tensor: usize,
) -> GradCheckReport {
    const FLOOR: f64 = 1e-6;
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: String::new(),
    };
    let mut probe = params.clone();
    for (name, t) in params.iter() {
        let n = t.len();
        let stride = n.div_ceil(per_tensor.max(1)).max(1);
        for idx in (0..n).step_by(stride) {
            let orig = t.as_slice().expect("standard layout")[idx];
            let set = |p: &mut ParamSet<f64>, v: f64| {
                p.get_mut(name).expect("same names").as_slice_mut().expect("standard layout")[idx] = v;
            };
            set(&mut probe, orig + step);
            let up = loss(&probe);
            set(&mut probe, orig - step);
            let down = loss(&probe);
            set(&mut probe, orig);
            let numeric = (up - down) / (2.0 * step);
            let analytic = grad.tensor(name).as_standard_layout()[[idx / t.ncols(), idx % t.ncols()]];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{name}[{idx}]: analytic {analytic:e}, numeric {numeric:e}");
            }
        }
    }
    report
}

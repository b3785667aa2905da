//! Central finite-difference verification of analytic gradients.

use super::tensor::ParamSet;

/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are judged on absolute error instead of amplified round-off.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `tensor[index]` of the worst entry.
    pub worst: String,
}

/// Compares `analytic` against `(L(θ + h e_i) − L(θ − h e_i)) / 2h` for every
/// scalar parameter in `params`.
pub fn check_gradients<P, F>(params: &P, analytic: &P, loss: F, h: f64) -> GradCheckReport
where
    P: ParamSet<f64> + Clone,
    F: Fn(&P) -> f64,
{
    let grads = analytic.flatten();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: String::new(),
    };
    let mut names = Vec::new();
    params.visit(&mut |name, _, t| names.push((name.to_string(), t.len())));

    let mut flat = 0;
    for (tensor, (name, len)) in names.iter().enumerate() {
        for i in 0..*len {
            let eval = |delta: f64| {
                let mut p = params.clone();
                let mut k = 0;
                p.visit_mut(&mut |_, _, t| {
                    if k == tensor {
                        t[i] += delta;
                    }
                    k += 1;
                });
                loss(&p)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = grads[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = format!("{name}[{i}] analytic {a:e} numeric {numeric:e}");
                }
            }
            report.checked += 1;
            flat += 1;
        }
    }
    report
}

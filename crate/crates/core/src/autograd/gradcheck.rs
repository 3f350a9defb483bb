use super::{AutogradError, Graph, Tensor, Var};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|analytic - numeric| / max(1, |analytic|)`.
    pub max_rel_error: f64,
    /// Coordinate achieving `max_rel_error`.
    pub worst_coordinate: Option<usize>,
    /// Coordinates skipped because a `±eps` step crosses a rectifier kink.
    pub excluded: Vec<usize>,
    pub checked: usize,
}

/// Checks the gradient of a scalar function `f` at `x` with central
/// differences of step `eps`.
///
/// `f` receives a fresh graph and the input variable; it is evaluated once
/// for the analytic gradient and twice more per coordinate. Coordinates
/// whose perturbation changes the sign pattern of any rectifier input are
/// reported in `excluded` instead of being compared.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<GradCheckReport, AutogradError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, AutogradError>,
{
    if !(eps > 0.0) {
        return Err(AutogradError::BadStep(eps));
    }
    let eval = |point: &Tensor| -> Result<(f64, Vec<bool>), AutogradError> {
        let mut g = Graph::new();
        // A leaf that tracks gradients, so `f` may differentiate through it.
        let v = g.param(point.clone());
        let out = f(&mut g, v)?;
        Ok((g.value(out).item(), g.kink_pattern()))
    };

    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let out = f(&mut g, xv)?;
    if !g.value(out).is_finite() {
        return Err(AutogradError::NonFinite { coordinate: 0 });
    }
    let base_pattern = g.kink_pattern();
    let grad = g.grad_of(out, &[xv])?[0];
    let analytic = g.value(grad).clone();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coordinate: None,
        excluded: Vec::new(),
        checked: 0,
    };
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let (fp, pat_p) = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let (fm, pat_m) = eval(&probe)?;
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() || !analytic.data()[i].is_finite() {
            return Err(AutogradError::NonFinite { coordinate: i });
        }
        if pat_p != base_pattern || pat_m != base_pattern {
            report.excluded.push(i);
            continue;
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(1.0);
        report.checked += 1;
        if err > report.max_rel_error || report.worst_coordinate.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_coordinate = Some(i);
        }
    }
    Ok(report)
}

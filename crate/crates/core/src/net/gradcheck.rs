use std::fmt;

use super::Parameters;

/// Denominator floor for relative errors, so entries whose true gradient is
/// zero are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorReport {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub tensors: Vec<TensorReport>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradReport {
    /// Entry with the largest relative error.
    pub fn worst(&self) -> Option<&TensorReport> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn max_rel_err(&self) -> f64 {
        self.worst().map_or(0.0, |t| t.max_rel_err)
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tensors {
            let flag = if t.max_rel_err <= self.tolerance { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{:<4} {:<24} max_rel_err={:.3e} at [{}] analytic={:.6e} numeric={:.6e}",
                flag, t.name, t.max_rel_err, t.worst_index, t.analytic, t.numeric
            )?;
        }
        match self.worst() {
            Some(w) => write!(
                f,
                "{} (tolerance {:.0e}, worst {} {:.3e})",
                if self.passed { "passed" } else { "failed" },
                self.tolerance,
                w.name,
                w.max_rel_err
            ),
            None => write!(f, "no parameters"),
        }
    }
}

/// Finite-difference formula used by [`grad_check_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error O(h^2).
    Central,
    /// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`, error O(h^4).
    FivePoint,
}

/// Compares `analytic` against central differences of `f` around `params`,
/// one scalar entry at a time.
pub fn grad_check<P, F>(f: F, params: &P, analytic: &P, step: f64, tolerance: f64, floor: f64) -> GradReport
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    grad_check_with(f, params, analytic, step, tolerance, floor, Stencil::Central)
}

/// [`grad_check`] with a choice of difference formula.
pub fn grad_check_with<P, F>(
    f: F,
    params: &P,
    analytic: &P,
    step: f64,
    tolerance: f64,
    floor: f64,
    stencil: Stencil,
) -> GradReport
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let names = params.names();
    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(names.len());
    let analytic = analytic.tensors();
    for (ti, name) in names.into_iter().enumerate() {
        let n = analytic[ti].len();
        let mut rep = TensorReport {
            name,
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..n {
            let orig = probe.tensors()[ti].data[i];
            let mut at = |offset: f64| {
                probe.tensors_mut()[ti].data[i] = orig + offset;
                f(&probe)
            };
            let numeric = match stencil {
                Stencil::Central => (at(step) - at(-step)) / (2.0 * step),
                Stencil::FivePoint => {
                    (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step)
                }
            };
            probe.tensors_mut()[ti].data[i] = orig;
            let a = analytic[ti].data[i];
            let err = relative_error(a, numeric, floor);
            if err > rep.max_rel_err || i == 0 || err.is_nan() {
                rep.max_rel_err = if err.is_nan() { f64::INFINITY } else { err };
                rep.worst_index = i;
                rep.analytic = a;
                rep.numeric = numeric;
            }
        }
        tensors.push(rep);
    }
    let passed = tensors.iter().all(|t| t.max_rel_err <= tolerance);
    GradReport {
        tensors,
        tolerance,
        passed,
    }
}

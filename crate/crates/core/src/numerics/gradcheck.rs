//! Central finite-difference check of tape gradients.

use super::{ParamId, ParameterStore, Result, Tape, Var};

/// Largest discrepancy found by [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Partials left out because the loss is not smooth within `h`.
    pub skipped: usize,
}

/// Relative error with a floor on the denominator so that near-zero
/// gradients are compared absolutely at the scale of `floor`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares the tape gradient of `loss_fn` against central differences with
/// step `h` for every element of `params`.
pub fn check_gradients<F>(
    store: &mut ParameterStore,
    params: &[ParamId],
    h: f64,
    floor: f64,
    loss_fn: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    run_check(store, params, h, floor, None, loss_fn)
}

/// Like [`check_gradients`], for losses with relu, abs, min or max inside.
/// A partial is skipped when the central differences at `h` and `h / 10`
/// disagree by more than `kink_tol` (relative), which happens only when a
/// kink lies within `h` of the evaluation point. Both estimates are purely
/// numerical, so a wrong analytic gradient is never skipped.
pub fn check_gradients_piecewise<F>(
    store: &mut ParameterStore,
    params: &[ParamId],
    h: f64,
    floor: f64,
    kink_tol: f64,
    loss_fn: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    run_check(store, params, h, floor, Some(kink_tol), loss_fn)
}

fn run_check<F>(
    store: &mut ParameterStore,
    params: &[ParamId],
    h: f64,
    floor: f64,
    kink_tol: Option<f64>,
    loss_fn: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let grads = {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |store: &ParameterStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        Ok(tape.value(loss).item())
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    for &id in params {
        let n = store.value(id).len();
        for i in 0..n {
            let orig = store.value(id).data()[i];
            let mut central = |step: f64| -> Result<f64> {
                store.value_mut(id).data_mut()[i] = orig + step;
                let plus = eval(store)?;
                store.value_mut(id).data_mut()[i] = orig - step;
                let minus = eval(store)?;
                store.value_mut(id).data_mut()[i] = orig;
                Ok((plus - minus) / (2.0 * step))
            };
            let numeric = central(h)?;
            if let Some(tol) = kink_tol {
                if relative_error(numeric, central(h / 10.0)?, floor) > tol {
                    report.skipped += 1;
                    continue;
                }
            }
            let analytic = grads.get(id).map(|g| g.data()[i]).unwrap_or(0.0);
            let err = relative_error(analytic, numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

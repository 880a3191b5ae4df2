//! Central finite-difference verification of analytic gradients.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::AutogradError;

/// Smallest denominator used when forming relative errors.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst component.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub components: usize,
    /// Components skipped because `θ ± ε` crossed a ReLU kink.
    pub skipped: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn evaluate<F, E>(store: &ParamStore, f: &mut F) -> Result<(f64, u64), E>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var, E>,
{
    let mut tape = Tape::new();
    let loss = f(store, &mut tape)?;
    Ok((tape.value(loss).item(), tape.kink_signature()))
}

/// Compares the tape gradient of the scalar built by `f` with
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every component of every parameter.
///
/// Components whose perturbed evaluations change the sign pattern of any
/// ReLU-family input are not differentiable across the step; they are
/// counted in `skipped` rather than compared.
///
/// `f` must be deterministic; two baseline evaluations that differ in any
/// bit are reported as [`AutogradError::NonDeterministic`].
pub fn grad_check<F, E>(store: &mut ParamStore, eps: f64, mut f: F) -> Result<GradCheckReport, E>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var, E>,
    E: From<AutogradError>,
{
    let (first, signature) = evaluate(store, &mut f)?;
    let (second, _) = evaluate(store, &mut f)?;
    if first.to_bits() != second.to_bits() {
        return Err(AutogradError::NonDeterministic { first, second }.into());
    }

    let mut tape = Tape::new();
    let loss = f(store, &mut tape)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<(String, Vec<f64>)> = store
        .names()
        .map(|name| {
            let g = match tape.bound_params().get(name) {
                Some(&v) => grads.get(v).into_data(),
                None => vec![0.0; store.get(name).map_or(0, |t| t.len())],
            };
            (name.to_string(), g)
        })
        .collect();
    drop(tape);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        components: 0,
        skipped: 0,
    };
    for (name, grad) in analytic {
        for (i, &a) in grad.iter().enumerate() {
            let orig = store.get(&name).expect("known name").data()[i];
            store.get_mut(&name).expect("known name").data_mut()[i] = orig + eps;
            let plus = evaluate(store, &mut f);
            store.get_mut(&name).expect("known name").data_mut()[i] = orig - eps;
            let minus = evaluate(store, &mut f);
            store.get_mut(&name).expect("known name").data_mut()[i] = orig;
            let ((plus, sp), (minus, sm)) = (plus?, minus?);
            if sp != signature || sm != signature {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);

            let err = relative_error(a, numeric);
            report.components += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

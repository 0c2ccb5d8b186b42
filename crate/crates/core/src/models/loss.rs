use super::spec::{LossWeights, Task};
use crate::autodiff::{Real, Tape, Var};
use crate::{Error, Result};

/// `Σ w_task · L_task` over the supplied per-task losses, in the given order.
///
/// Tasks whose weight is zero are left out of the graph entirely, so their
/// heads receive no gradient. A non-finite component aborts with
/// [`Error::NonFinite`]; epoch and batch are zero here and filled in by the
/// training loop.
pub fn combined_loss<T: Real>(tape: &mut Tape<T>, losses: &[(Task, Var)], weights: &LossWeights) -> Result<Var> {
    for &(task, v) in losses {
        let value = tape.scalar(v);
        if !value.is_finite() {
            return Err(Error::NonFinite {
                epoch: 0,
                batch: 0,
                component: task.to_string(),
                value: value.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let terms: Vec<(Var, T)> = losses
        .iter()
        .filter(|(t, _)| weights.weight(*t) > 0.0)
        .map(|&(t, v)| (v, T::lit(weights.weight(t))))
        .collect();
    if terms.is_empty() {
        return Err(Error::Config("every supplied task has zero loss weight".into()));
    }
    tape.weighted_sum(&terms)
}

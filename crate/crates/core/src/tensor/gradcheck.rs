//! Central finite differences against reverse-mode gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Worst element-wise disagreement found by a check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// `(input index, element index, analytic, numeric)` of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps near-zero gradients
/// from turning rounding noise into large relative errors.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Scalar loss built on a tape from one variable per input.
pub type LossFn<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

fn eval_loss(f: &LossFn, inputs: &[Tensor<f64>]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = inputs.iter().map(|t| tape.constant(t.clone())).collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    Ok(tape.value(loss)[0])
}

/// Compares d(loss)/d(input) from [`Tape::backward`] with central
/// differences of step `h` for every element of every input. `f` must
/// return a scalar.
pub fn check_gradients(inputs: &[Tensor<f64>], f: &LossFn, h: f64) -> Result<GradReport> {
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().requiring_grad()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let mut report = GradReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    let mut probe = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = tape
            .grad(v)
            .ok_or_else(|| Error::Contract("input did not receive a gradient".into()))?
            .to_vec();
        for (k, &a) in analytic.iter().enumerate() {
            let x0 = probe[i].data()[k];
            probe[i].data_mut()[k] = x0 + h;
            let up = eval_loss(f, &probe)?;
            probe[i].data_mut()[k] = x0 - h;
            let down = eval_loss(f, &probe)?;
            probe[i].data_mut()[k] = x0;
            let n = (up - down) / (2.0 * h);
            let e = rel_err(a, n, REL_ERR_FLOOR);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                report.worst = Some((i, k, a, n));
            }
        }
    }
    Ok(report)
}

/// The same comparison over every parameter of a model, for the
/// cross-entropy loss of one labeled input.
pub fn check_model<M: crate::nn::Model<f64>>(model: &mut M, input: &M::Input, label: usize, h: f64) -> Result<GradReport> {
    let loss_of = |m: &M| -> Result<(f64, Tape<f64>, super::Bound, Var)> {
        let mut tape = Tape::new();
        let bound = m.params().bind(&mut tape)?;
        let logits = m.logits(&mut tape, &bound, input)?;
        let loss = tape.cross_entropy(logits, &[label])?;
        Ok((tape.value(loss)[0], tape, bound, loss))
    };
    let (_, mut tape, bound, loss) = loss_of(model)?;
    tape.backward(loss)?;
    let analytic = model.params().collect_grads(&tape, &bound);
    let mut report = GradReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<_> = model.params().ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        for (k, &a) in analytic[i].iter().enumerate() {
            let x0 = model.params().get(id).data()[k];
            model.params_mut().get_mut(id).data_mut()[k] = x0 + h;
            let up = loss_of(model)?.0;
            model.params_mut().get_mut(id).data_mut()[k] = x0 - h;
            let down = loss_of(model)?.0;
            model.params_mut().get_mut(id).data_mut()[k] = x0;
            let n = (up - down) / (2.0 * h);
            let e = rel_err(a, n, REL_ERR_FLOOR);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                report.worst = Some((i, k, a, n));
            }
        }
    }
    Ok(report)
}

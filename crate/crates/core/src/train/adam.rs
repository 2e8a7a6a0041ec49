use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Scalar, Tensor};

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
        OptimizerState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Moments as named tensors (`adam.m.<param>`, `adam.v.<param>`), for
    /// checkpointing.
    pub fn to_param_set(&self, params: &ParamSet<T>) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (prefix, bufs) in [("adam.m", &self.m), ("adam.v", &self.v)] {
            for ((name, t), buf) in params.iter().zip(bufs) {
                let tensor = Tensor::new(t.shape().to_vec(), buf.clone()).expect("moment shaped like its parameter");
                out.add(format!("{prefix}.{name}"), tensor);
            }
        }
        out
    }

    /// Inverse of [`OptimizerState::to_param_set`].
    pub fn from_param_set(saved: &ParamSet<T>, params: &ParamSet<T>, t: u64) -> Result<Self> {
        let mut state = OptimizerState::new(params);
        for (prefix, bufs) in [("adam.m", &mut state.m), ("adam.v", &mut state.v)] {
            for ((name, t), buf) in params.iter().zip(bufs.iter_mut()) {
                let key = format!("{prefix}.{name}");
                let id = saved
                    .find(&key)
                    .ok_or_else(|| Error::Contract(format!("optimizer state lacks `{key}`")))?;
                let src = saved.get(id);
                if src.shape() != t.shape() {
                    return Err(Error::Contract(format!(
                        "optimizer state `{key}` has shape {:?}, parameter has {:?}",
                        src.shape(),
                        t.shape()
                    )));
                }
                buf.copy_from_slice(src.data());
            }
        }
        if saved.len() != 2 * params.len() {
            return Err(Error::Contract("optimizer state has extra entries".into()));
        }
        state.t = t;
        Ok(state)
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts before any
/// parameter changes and names the offending parameter.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Vec<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
    (beta1, beta2, eps): (f64, f64, f64),
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract("gradient/parameter/optimizer counts differ".into()));
    }
    for ((name, t), g) in params.iter().zip(grads) {
        if g.len() != t.numel() {
            return Err(Error::Dimension(format!("gradient for `{name}` has the wrong size")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NanGradient { param: name.to_string() });
        }
    }
    state.t += 1;
    let c1 = 1.0 - beta1.powf(state.t as f64);
    let c2 = 1.0 - beta2.powf(state.t as f64);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one, lr, eps) = (T::one(), T::of(lr), T::of(eps));
    let (c1, c2) = (T::of(c1), T::of(c2));
    for (((_, p), g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

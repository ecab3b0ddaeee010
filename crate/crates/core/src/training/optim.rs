use crate::error::{Error, Result};
use crate::estimator::EstimatorParams;
use crate::scalar::Scalar;

pub const DEFAULT_CLIP_NORM: f64 = 7.0;
pub const DEFAULT_RMSPROP_DECAY: f64 = 0.9;
pub const DEFAULT_RMSPROP_EPSILON: f64 = 1e-8;

/// RMSprop accumulators plus the clipping threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    /// Running mean of squared gradients, laid out like the parameters.
    pub accum: EstimatorParams<T>,
    pub decay: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &EstimatorParams<T>) -> Self {
        OptimizerState {
            accum: params.zeros_like(),
            decay: DEFAULT_RMSPROP_DECAY,
            epsilon: DEFAULT_RMSPROP_EPSILON,
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::Config(format!("RMSprop decay must lie in [0, 1), got {}", self.decay)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("RMSprop epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        Ok(())
    }
}

/// L2 norm over every gradient entry.
pub fn global_norm<T: Scalar>(grads: &EstimatorParams<T>) -> T {
    grads.norm_sq().sqrt()
}

/// Rescales `grads` so their global norm is at most `clip_norm`. Returns the
/// norm before clipping.
pub fn clip_gradients<T: Scalar>(grads: &mut EstimatorParams<T>, clip_norm: f64) -> T {
    let norm = global_norm(grads);
    let limit = T::of(clip_norm);
    // a rescaled set can land a few ulps above the limit; leave it alone
    if norm > limit * (T::one() + T::of(4.0) * T::epsilon()) {
        grads.scale_inplace(limit / norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub norm_pre_clip: f64,
    pub clipped: bool,
}

/// Clips the gradients, then applies one RMSprop step:
/// `v = decay * v + (1 - decay) * g^2`, `theta -= eta * g / sqrt(v + eps)`.
///
/// Non-finite gradients are rejected before anything is modified.
pub fn rmsprop_update<T: Scalar>(
    params: &mut EstimatorParams<T>,
    grads: &EstimatorParams<T>,
    opt: &mut OptimizerState<T>,
    eta: f64,
) -> Result<UpdateStats> {
    opt.validate()?;
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient; update rejected".into()));
    }
    let mut g = grads.clone();
    let norm = clip_gradients(&mut g, opt.clip_norm);
    let decay = T::of(opt.decay);
    let keep = T::one() - decay;
    let eps = T::of(opt.epsilon);
    let eta = T::of(eta);
    let gt = g.tensors();
    let vt = opt.accum.tensors_mut();
    let pt = params.tensors_mut();
    if gt.len() != vt.len() || gt.len() != pt.len() {
        return Err(Error::Config("gradient and parameter layouts differ".into()));
    }
    for (((_, p), (_, v)), (_, g)) in pt.into_iter().zip(vt).zip(gt) {
        if p.shape() != g.shape() || v.shape() != g.shape() {
            return Err(Error::shape("rmsprop", p.shape(), g.shape()));
        }
        let ps = p.as_mut_slice();
        let vs = v.as_mut_slice();
        for ((pi, vi), &gi) in ps.iter_mut().zip(vs.iter_mut()).zip(g.as_slice()) {
            *vi = decay * *vi + keep * gi * gi;
            *pi = *pi - eta * gi / (*vi + eps).sqrt();
        }
    }
    Ok(UpdateStats {
        norm_pre_clip: norm.as_f64(),
        clipped: norm.as_f64() > opt.clip_norm * (1.0 + 4.0 * f64::EPSILON),
    })
}

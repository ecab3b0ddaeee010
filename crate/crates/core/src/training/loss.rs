use crate::error::{Error, Result};
use crate::estimator::EpisodeTrace;
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Default weight of the squared-error term.
pub const DEFAULT_LAMBDA: f64 = 0.235;

/// Hybrid episode loss `(1 - lambda) * MAE + lambda * MSE`.
///
/// The absolute-error term sums over lanes without dividing by the batch size
/// unless `normalize_mae_by_batch` is set; the squared-error term always
/// divides by it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    /// Steps per episode the loss expects.
    pub k: usize,
    pub normalize_mae_by_batch: bool,
}

impl LossConfig {
    pub fn new(lambda: f64, k: usize) -> Self {
        LossConfig {
            lambda,
            k,
            normalize_mae_by_batch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Param(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.k < 1 {
            return Err(Error::Param("K must be at least 1".into()));
        }
        Ok(())
    }

    fn mae_divisor(&self, batch: usize) -> f64 {
        let b = if self.normalize_mae_by_batch { batch as f64 } else { 1.0 };
        2.0 * self.k as f64 * b
    }

    fn mse_divisor(&self, batch: usize) -> f64 {
        2.0 * self.k as f64 * batch as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<T> {
    pub mae: T,
    pub mse: T,
    pub total: T,
}

fn check<T: Scalar>(targets: &Matrix<T>, trace: &EpisodeTrace<T>, cfg: &LossConfig) -> Result<()> {
    cfg.validate()?;
    if trace.k() != cfg.k {
        return Err(Error::Param(format!(
            "loss expects K = {} but the episode ran {} steps",
            cfg.k,
            trace.k()
        )));
    }
    let out = trace.final_output();
    if out.shape() != targets.shape() {
        return Err(Error::shape("episode loss", targets.shape(), out.shape()));
    }
    Ok(())
}

/// Loss of one episode against the true patches (`d^2 x B`).
pub fn episode_loss<T: Scalar>(targets: &Matrix<T>, trace: &EpisodeTrace<T>, cfg: &LossConfig) -> Result<LossValue<T>> {
    check(targets, trace, cfg)?;
    let mut abs = T::zero();
    let mut sq = T::zero();
    for step in &trace.steps {
        for (&p, &t) in step.output.as_slice().iter().zip(targets.as_slice()) {
            let r = p - t;
            abs = abs + r.abs();
            sq = sq + r * r;
        }
    }
    let b = targets.cols();
    let mae = abs / T::of(cfg.mae_divisor(b));
    let mse = sq / T::of(cfg.mse_divisor(b));
    let lambda = T::of(cfg.lambda);
    Ok(LossValue {
        mae,
        mse,
        total: (T::one() - lambda) * mae + lambda * mse,
    })
}

/// Gradient of the episode loss with respect to each step's reconstruction.
pub fn output_gradients<T: Scalar>(targets: &Matrix<T>, trace: &EpisodeTrace<T>, cfg: &LossConfig) -> Result<Vec<Matrix<T>>> {
    check(targets, trace, cfg)?;
    let b = targets.cols();
    let lambda = T::of(cfg.lambda);
    let abs_w = (T::one() - lambda) / T::of(cfg.mae_divisor(b));
    let sq_w = T::two() * lambda / T::of(cfg.mse_divisor(b));
    trace
        .steps
        .iter()
        .map(|step| {
            step.output.zip_map(targets, "loss gradient", |p, t| {
                let r = p - t;
                let sign = if r > T::zero() {
                    T::one()
                } else if r < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                abs_w * sign + sq_w * r
            })
        })
        .collect()
}

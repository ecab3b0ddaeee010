use super::cells::{reconstruct_patch, state_step, State, StepCache};
use super::params::{EstimatorKind, EstimatorParams};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::patching::NeighborContext;
use crate::scalar::Scalar;

/// Normalised context inputs for a batch of lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextBatch<T> {
    /// One `d^2 x B` matrix per slot; symbols divided by the input divisor.
    pub slots: Vec<Matrix<T>>,
    /// `slots x B` presence flags (1 present, 0 absent).
    pub presence: Matrix<T>,
}

impl<T: Scalar> ContextBatch<T> {
    /// Stacks one context per lane.
    pub fn from_contexts(contexts: &[&NeighborContext], divisor: f64) -> Result<Self> {
        let lanes = contexts.len();
        if lanes == 0 {
            return Err(Error::Param("context batch needs at least one lane".into()));
        }
        let n_slots = contexts[0].blocks.len();
        let dim = contexts[0].blocks[0].len();
        let scale = T::of(divisor);
        let mut slots = vec![Matrix::zeros(dim, lanes); n_slots];
        let mut presence = Matrix::zeros(n_slots, lanes);
        for (b, ctx) in contexts.iter().enumerate() {
            if ctx.blocks.len() != n_slots || ctx.blocks.iter().any(|blk| blk.len() != dim) {
                return Err(Error::Param("contexts in one batch must share their layout".into()));
            }
            for (n, block) in ctx.blocks.iter().enumerate() {
                for (i, &s) in block.iter().enumerate() {
                    slots[n][(i, b)] = T::of(s as f64) / scale;
                }
                presence[(n, b)] = if ctx.present[n] { T::one() } else { T::zero() };
            }
        }
        Ok(ContextBatch { slots, presence })
    }

    pub fn batch(&self) -> usize {
        self.presence.cols()
    }

    /// Sum of all slot inputs (what a tied projection sees).
    pub fn slot_sum(&self) -> Matrix<T> {
        let mut acc = self.slots[0].clone();
        for s in &self.slots[1..] {
            acc.add_assign(s).expect("slots share a shape");
        }
        acc
    }
}

/// Spatial context summary `e` (`H x B`).
///
/// Untied: `sum_n W_n q_n + W_p f`, accumulated in slot order. Tied:
/// `W (sum_n q_n) + W_p f`. Absent slots carry zero inputs.
pub fn transform<T: Scalar>(ctx: &ContextBatch<T>, params: &EstimatorParams<T>) -> Result<Matrix<T>> {
    let cfg = &params.config;
    if ctx.slots.len() != cfg.slots {
        return Err(Error::Param(format!("expected {} context slots, got {}", cfg.slots, ctx.slots.len())));
    }
    let mut e = if cfg.tied {
        params.transform.w[0].matmul(&ctx.slot_sum())?
    } else {
        let mut acc = params.transform.w[0].matmul(&ctx.slots[0])?;
        for (w, x) in params.transform.w.iter().zip(&ctx.slots).skip(1) {
            acc.add_assign(&w.matmul(x)?)?;
        }
        acc
    };
    e.add_assign(&params.transform.presence.matmul(&ctx.presence)?)?;
    Ok(e)
}

/// One refinement step: updated state and its reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub cache: StepCache<T>,
    pub state: State<T>,
    pub output: Matrix<T>,
}

/// Everything computed during one K-step reconstruction episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace<T> {
    pub inputs: ContextBatch<T>,
    pub e: Matrix<T>,
    pub s_init: State<T>,
    pub steps: Vec<StepRecord<T>>,
}

impl<T: Scalar> EpisodeTrace<T> {
    pub fn k(&self) -> usize {
        self.steps.len()
    }

    /// State to carry into the next episode.
    pub fn final_state(&self) -> &State<T> {
        &self.steps.last().expect("episodes have K >= 1 steps").state
    }

    /// The last reconstruction, `p_K`.
    pub fn final_output(&self) -> &Matrix<T> {
        &self.steps.last().expect("episodes have K >= 1 steps").output
    }
}

/// Whether `e` is computed once per episode or re-derived at every step.
///
/// Both produce identical traces; the second exists to check that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextPolicy {
    #[default]
    Precompute,
    RecomputeEachStep,
}

fn check_state_shape<T: Scalar>(s: &State<T>, params: &EstimatorParams<T>, batch: usize) -> Result<()> {
    let want = (params.config.hidden, batch);
    if s.h.shape() != want {
        return Err(Error::shape("episode state", want, s.h.shape()));
    }
    if params.kind() == EstimatorKind::Lstm && s.cell.is_none() {
        return Err(Error::State("LSTM episode needs a cell state".into()));
    }
    Ok(())
}

/// Runs a `k`-step reconstruction episode from `s_init`.
pub fn run_episode<T: Scalar>(ctx: ContextBatch<T>, s_init: State<T>, k: usize, params: &EstimatorParams<T>) -> Result<EpisodeTrace<T>> {
    run_episode_with(ctx, s_init, k, params, ContextPolicy::Precompute)
}

pub fn run_episode_with<T: Scalar>(
    ctx: ContextBatch<T>,
    s_init: State<T>,
    k: usize,
    params: &EstimatorParams<T>,
    policy: ContextPolicy,
) -> Result<EpisodeTrace<T>> {
    if k < 1 {
        return Err(Error::Param("an episode needs K >= 1 steps".into()));
    }
    check_state_shape(&s_init, params, ctx.batch())?;
    let e = transform(&ctx, params)?;
    let mut steps: Vec<StepRecord<T>> = Vec::with_capacity(k);
    if params.kind() == EstimatorKind::Mlp {
        // stateless: one evaluation, repeated for every step of the episode
        let (state, cache) = state_step(&e, &s_init, params)?;
        let output = reconstruct_patch(&state.h, &params.readout)?;
        let record = StepRecord { cache, state, output };
        steps.extend(std::iter::repeat_n(record, k));
    } else {
        for step in 0..k {
            let prev = steps.last().map_or(&s_init, |r| &r.state);
            let recomputed;
            let e_step = match policy {
                ContextPolicy::Precompute => &e,
                ContextPolicy::RecomputeEachStep => {
                    recomputed = transform(&ctx, params)?;
                    &recomputed
                }
            };
            let (state, cache) = state_step(e_step, prev, params)?;
            let output = reconstruct_patch(&state.h, &params.readout)?;
            steps.push(StepRecord { cache, state, output });
            debug_assert_eq!(steps.len(), step + 1);
        }
    }
    Ok(EpisodeTrace {
        inputs: ctx,
        e,
        s_init,
        steps,
    })
}

/// Episode that stops early once successive single-lane reconstructions differ
/// by less than `tol` in max-norm. Returns the trace (with as many steps as
/// were taken).
pub fn run_episode_until<T: Scalar>(
    ctx: ContextBatch<T>,
    s_init: State<T>,
    k: usize,
    params: &EstimatorParams<T>,
    tol: T,
) -> Result<EpisodeTrace<T>> {
    if k < 1 {
        return Err(Error::Param("an episode needs K >= 1 steps".into()));
    }
    check_state_shape(&s_init, params, ctx.batch())?;
    let e = transform(&ctx, params)?;
    let mut steps: Vec<StepRecord<T>> = Vec::with_capacity(k);
    for _ in 0..k {
        let prev = steps.last().map_or(&s_init, |r| &r.state);
        let (state, cache) = state_step(&e, prev, params)?;
        let output = reconstruct_patch(&state.h, &params.readout)?;
        let converged = steps
            .last()
            .is_some_and(|last| last.output.sub(&output).map(|d| d.max_abs() < tol).unwrap_or(false));
        steps.push(StepRecord { cache, state, output });
        if converged || params.kind() == EstimatorKind::Mlp {
            break;
        }
    }
    Ok(EpisodeTrace {
        inputs: ctx,
        e,
        s_init,
        steps,
    })
}

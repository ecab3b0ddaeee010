use super::backprop::bptt_gradients;
use super::loss::{episode_loss, LossConfig, DEFAULT_LAMBDA};
use crate::error::Result;
use crate::estimator::{run_episode, ContextBatch, EstimatorConfig, EstimatorKind, EstimatorParams, State};
use crate::numerics::{finite_diff_grad, uniform_init, Matrix, Rng, DEFAULT_FD_STEP};
use crate::patching::{NeighborContext, SLOTS};
use crate::scalar::Scalar;

/// Gradient magnitudes below this are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares back-propagated gradients of one episode against central
/// differences for every parameter entry.
pub fn check_episode_gradients(
    params: &EstimatorParams<f64>,
    ctx: &ContextBatch<f64>,
    s_init: &State<f64>,
    targets: &Matrix<f64>,
    loss: &LossConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let trace = run_episode(ctx.clone(), s_init.clone(), loss.k, params)?;
    let analytic = bptt_gradients(targets, &trace, params, loss)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        entries_checked: 0,
    };
    for (t, (name, grad)) in analytic.tensors().into_iter().enumerate() {
        let base = params.tensors()[t].1.clone();
        let objective = |m: &Matrix<f64>| {
            let mut p = params.clone();
            *p.tensors_mut().swap_remove(t).1 = m.clone();
            run_episode(ctx.clone(), s_init.clone(), loss.k, &p)
                .and_then(|tr| episode_loss(targets, &tr, loss))
                .map_or(f64::NAN, |l| l.total)
        };
        let numeric = finite_diff_grad(objective, &base, step)?;
        for (i, (&a, &n)) in grad.as_slice().iter().zip(numeric.as_slice()).enumerate() {
            let err = relative_error(a, n);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst_tensor.is_empty() {
                report.max_rel_error = err;
                report.worst_tensor = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

/// Parameters, context batch, initial state and targets of one episode.
pub type GradProblem<T> = (EstimatorParams<T>, ContextBatch<T>, State<T>, Matrix<T>);

/// Random parameters (every tensor perturbed away from its initial value),
/// contexts with some absent neighbours, a random carried-in state and
/// targets in `[0, 1]`.
pub fn random_problem<T: Scalar>(kind: EstimatorKind, hidden: usize, d: usize, batch: usize, seed: u64) -> Result<GradProblem<T>> {
    let mut rng = Rng::new(seed);
    let mut params = EstimatorParams::init(EstimatorConfig::new(kind, hidden, d), &mut rng)?;
    for (_, m) in params.tensors_mut() {
        m.add_assign(&uniform_init(m.rows(), m.cols(), -0.4, 0.4, &mut rng)?)?;
    }
    let dim = d * d;
    let contexts: Vec<NeighborContext> = (0..batch)
        .map(|b| {
            let mut present = [true; SLOTS];
            for p in present.iter_mut().take(SLOTS - 1) {
                *p = rng.uniform() < 0.75;
            }
            let blocks = (0..SLOTS)
                .map(|n| (0..dim).map(|_| if present[n] { rng.below(41) as i32 - 20 } else { 0 }).collect())
                .collect();
            NeighborContext { target: b, blocks, present }
        })
        .collect();
    let ctx = ContextBatch::from_contexts(&contexts.iter().collect::<Vec<_>>(), params.config.input_divisor)?;
    let mut s = State::zeros(kind, hidden, batch);
    s.h = uniform_init(hidden, batch, -0.6, 0.6, &mut rng)?;
    if let Some(c) = s.cell.as_mut() {
        *c = uniform_init(hidden, batch, -1.0, 1.0, &mut rng)?;
    }
    let targets = uniform_init(dim, batch, 0.0, 1.0, &mut rng)?;
    Ok((params, ctx, s, targets))
}

/// Full check on a random problem of the given size.
pub fn gradient_check(kind: EstimatorKind, hidden: usize, d: usize, k: usize, batch: usize, seed: u64) -> Result<GradCheckReport> {
    let (params, ctx, s, targets) = random_problem::<f64>(kind, hidden, d, batch, seed)?;
    let loss = LossConfig::new(DEFAULT_LAMBDA, k);
    check_episode_gradients(&params, &ctx, &s, &targets, &loss, DEFAULT_FD_STEP)
}

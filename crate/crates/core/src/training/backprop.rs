use super::loss::{output_gradients, LossConfig};
use crate::error::{Error, Result};
use crate::estimator::{EpisodeTrace, EstimatorParams, Gate, StateParams, StepCache};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

fn one_minus_sq<T: Scalar>(y: &Matrix<T>) -> Matrix<T> {
    y.map(|v| T::one() - v * v)
}

fn sig_slope<T: Scalar>(y: &Matrix<T>) -> Matrix<T> {
    y.map(|v| v * (T::one() - v))
}

/// Adds the weight, recurrent and bias gradients of one gate and returns its
/// contribution to the input and previous-state gradients.
fn gate_backward<T: Scalar>(
    grad: &mut Gate<T>,
    gate: &Gate<T>,
    d_pre: &Matrix<T>,
    e: &Matrix<T>,
    h_in: &Matrix<T>,
    d_e: &mut Matrix<T>,
    d_h: &mut Matrix<T>,
) -> Result<()> {
    grad.w.add_assign(&d_pre.matmul_t(e)?)?;
    grad.u.add_assign(&d_pre.matmul_t(h_in)?)?;
    grad.b.add_assign(&d_pre.row_sums())?;
    d_e.add_assign(&gate.w.t_matmul(d_pre)?)?;
    d_h.add_assign(&gate.u.t_matmul(d_pre)?)?;
    Ok(())
}

fn missing(kind: &str) -> Error {
    Error::State(format!("episode trace does not hold {kind} intermediates"))
}

/// Exact gradients of the episode loss with respect to every parameter.
///
/// The state carried into the episode is a constant: nothing flows back past
/// the first step.
pub fn bptt_gradients<T: Scalar>(
    targets: &Matrix<T>,
    trace: &EpisodeTrace<T>,
    params: &EstimatorParams<T>,
    cfg: &LossConfig,
) -> Result<EstimatorParams<T>> {
    let d_out = output_gradients(targets, trace, cfg)?;
    let mut grads = params.zeros_like();
    let (hidden, batch) = trace.e.shape();
    let e = &trace.e;
    let mut d_e = Matrix::zeros(hidden, batch);
    let mut d_h_next = Matrix::zeros(hidden, batch);
    let mut d_c_next = Matrix::zeros(hidden, batch);

    for k in (0..trace.k()).rev() {
        let step = &trace.steps[k];
        let prev = if k == 0 { &trace.s_init } else { &trace.steps[k - 1].state };
        let h = &step.state.h;

        grads.readout.u.add_assign(&d_out[k].matmul_t(h)?)?;
        grads.readout.c.add_assign(&d_out[k].row_sums())?;
        let mut d_h = params.readout.u.t_matmul(&d_out[k])?;
        d_h.add_assign(&d_h_next)?;

        let mut d_prev = Matrix::zeros(hidden, batch);
        match (&params.state, &mut grads.state, &step.cache) {
            (StateParams::Mlp(_), StateParams::Mlp(g), StepCache::Mlp) => {
                let d_pre = d_h.hadamard(&one_minus_sq(h))?;
                g.b.add_assign(&d_pre.row_sums())?;
                d_e.add_assign(&d_pre)?;
            }
            (StateParams::DeltaRnn(p), StateParams::DeltaRnn(g), StepCache::DeltaRnn { vs, proposal, gate, .. }) => {
                let s_prev = &prev.h;
                let d_mix = d_h.hadamard(&one_minus_sq(h))?;
                let d_prop = d_mix.zip_map(gate, "bptt", |dm, r| dm * (T::one() - r))?;
                let d_gate = d_mix.hadamard(&s_prev.sub(proposal)?)?;
                let d_pre = d_prop.hadamard(&one_minus_sq(proposal))?;
                g.b.add_assign(&d_pre.row_sums())?;
                g.alpha.add_assign(&d_pre.hadamard(vs)?.hadamard(e)?.row_sums())?;
                g.beta1.add_assign(&d_pre.hadamard(vs)?.row_sums())?;
                g.beta2.add_assign(&d_pre.hadamard(e)?.row_sums())?;
                let d_vs = d_pre.hadamard(&e.mul_col_broadcast(&p.alpha)?.add_col_broadcast(&p.beta1)?)?;
                let d_gate_pre = d_gate.hadamard(&sig_slope(gate))?;
                g.b_r.add_assign(&d_gate_pre.row_sums())?;
                d_e.add_assign(&d_pre.hadamard(&vs.mul_col_broadcast(&p.alpha)?.add_col_broadcast(&p.beta2)?)?)?;
                d_e.add_assign(&d_gate_pre)?;
                g.v.add_assign(&d_vs.matmul_t(s_prev)?)?;
                d_prev = d_mix.hadamard(gate)?;
                d_prev.add_assign(&p.v.t_matmul(&d_vs)?)?;
            }
            (StateParams::Gru(p), StateParams::Gru(g), StepCache::Gru { update, reset, candidate }) => {
                let s_prev = &prev.h;
                let d_cand_pre = d_h.hadamard(update)?.hadamard(&one_minus_sq(candidate))?;
                let d_update_pre = d_h.hadamard(&candidate.sub(s_prev)?)?.hadamard(&sig_slope(update))?;
                let gated = reset.hadamard(s_prev)?;
                let mut d_gated = Matrix::zeros(hidden, batch);
                gate_backward(&mut g.candidate, &p.candidate, &d_cand_pre, e, &gated, &mut d_e, &mut d_gated)?;
                let d_reset_pre = d_gated.hadamard(s_prev)?.hadamard(&sig_slope(reset))?;
                d_prev = d_h.zip_map(update, "bptt", |dh, z| dh * (T::one() - z))?;
                d_prev.add_assign(&d_gated.hadamard(reset)?)?;
                gate_backward(&mut g.update, &p.update, &d_update_pre, e, s_prev, &mut d_e, &mut d_prev)?;
                gate_backward(&mut g.reset, &p.reset, &d_reset_pre, e, s_prev, &mut d_e, &mut d_prev)?;
            }
            (
                StateParams::Lstm(p),
                StateParams::Lstm(g),
                StepCache::Lstm {
                    input,
                    forget,
                    output,
                    cell_in,
                    cell_tanh,
                },
            ) => {
                let c_prev = prev.cell.as_ref().ok_or_else(|| missing("LSTM cell"))?;
                let d_out_gate = d_h.hadamard(cell_tanh)?;
                let mut d_cell = d_h.hadamard(output)?.hadamard(&one_minus_sq(cell_tanh))?;
                d_cell.add_assign(&d_c_next)?;
                let d_input_pre = d_cell.hadamard(cell_in)?.hadamard(&sig_slope(input))?;
                let d_forget_pre = d_cell.hadamard(c_prev)?.hadamard(&sig_slope(forget))?;
                let d_cell_in_pre = d_cell.hadamard(input)?.hadamard(&one_minus_sq(cell_in))?;
                let d_output_pre = d_out_gate.hadamard(&sig_slope(output))?;
                let h_prev = &prev.h;
                gate_backward(&mut g.input, &p.input, &d_input_pre, e, h_prev, &mut d_e, &mut d_prev)?;
                gate_backward(&mut g.forget, &p.forget, &d_forget_pre, e, h_prev, &mut d_e, &mut d_prev)?;
                gate_backward(&mut g.output, &p.output, &d_output_pre, e, h_prev, &mut d_e, &mut d_prev)?;
                gate_backward(&mut g.cell, &p.cell, &d_cell_in_pre, e, h_prev, &mut d_e, &mut d_prev)?;
                d_c_next = d_cell.hadamard(forget)?;
            }
            _ => return Err(missing(params.kind().name())),
        }
        d_h_next = d_prev;
    }

    let inputs = &trace.inputs;
    if params.config.tied {
        grads.transform.w[0].add_assign(&d_e.matmul_t(&inputs.slot_sum())?)?;
    } else {
        for (g, x) in grads.transform.w.iter_mut().zip(&inputs.slots) {
            g.add_assign(&d_e.matmul_t(x)?)?;
        }
    }
    grads.transform.presence.add_assign(&d_e.matmul_t(&inputs.presence)?)?;
    Ok(grads)
}

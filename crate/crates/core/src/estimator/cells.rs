use super::params::{DeltaRnnParams, EstimatorKind, EstimatorParams, Gate, GruParams, LstmParams, MlpParams, ReadoutParams, StateParams};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, tanh, Matrix};
use crate::scalar::Scalar;

/// Decoder state for a batch of lanes (`H x B`).
///
/// `cell` is only used by the LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub h: Matrix<T>,
    pub cell: Option<Matrix<T>>,
}

impl<T: Scalar> State<T> {
    pub fn zeros(kind: EstimatorKind, hidden: usize, batch: usize) -> Self {
        State {
            h: Matrix::zeros(hidden, batch),
            cell: (kind == EstimatorKind::Lstm).then(|| Matrix::zeros(hidden, batch)),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.cols()
    }

    /// Lane `b` as a single-lane state.
    pub fn lane(&self, b: usize) -> State<T> {
        State {
            h: Matrix::column(&self.h.col(b)),
            cell: self.cell.as_ref().map(|c| Matrix::column(&c.col(b))),
        }
    }

    /// Concatenates single-lane states into one batch.
    pub fn stack(lanes: &[State<T>]) -> Result<State<T>> {
        let h = Matrix::from_columns(&lanes.iter().map(|s| s.h.col(0)).collect::<Vec<_>>())?;
        let cell = if lanes.first().is_some_and(|s| s.cell.is_some()) {
            let cols: Vec<Vec<T>> = lanes
                .iter()
                .map(|s| s.cell.as_ref().map(|c| c.col(0)).ok_or_else(|| Error::State("mixed state kinds".into())))
                .collect::<Result<_>>()?;
            Some(Matrix::from_columns(&cols)?)
        } else {
            None
        };
        Ok(State { h, cell })
    }
}

/// Intermediates of one state update, kept for back-propagation.
#[derive(Debug, Clone, PartialEq)]
pub enum StepCache<T> {
    Mlp,
    DeltaRnn {
        /// `V s_{k-1}`
        vs: Matrix<T>,
        d1: Matrix<T>,
        d2: Matrix<T>,
        proposal: Matrix<T>,
        gate: Matrix<T>,
    },
    Gru {
        update: Matrix<T>,
        reset: Matrix<T>,
        candidate: Matrix<T>,
    },
    Lstm {
        input: Matrix<T>,
        forget: Matrix<T>,
        output: Matrix<T>,
        cell_in: Matrix<T>,
        cell_tanh: Matrix<T>,
    },
}

fn zip3<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, c: &Matrix<T>, f: impl Fn(T, T, T) -> T) -> Matrix<T> {
    debug_assert!(a.shape() == b.shape() && b.shape() == c.shape());
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .zip(c.as_slice())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("shapes agree")
}

fn check_state<T: Scalar>(e: &Matrix<T>, h: &Matrix<T>) -> Result<()> {
    if e.shape() != h.shape() {
        return Err(Error::shape("state update", e.shape(), h.shape()));
    }
    Ok(())
}

/// Stateless hidden layer: `h = tanh(e + b)`.
pub fn mlp_step<T: Scalar>(e: &Matrix<T>, p: &MlpParams<T>) -> Result<Matrix<T>> {
    Ok(e.add_col_broadcast(&p.b)?.map(tanh))
}

/// Delta-RNN update.
///
/// `d1 = alpha * (V s) * e`, `d2 = beta1 * (V s) + beta2 * e`,
/// `proposal = tanh(d1 + d2 + b)`, `gate = sigmoid(e + b_r)` and
/// `s' = tanh((1 - gate) * proposal + gate * s)`, all products elementwise.
pub fn delta_rnn_step<T: Scalar>(e: &Matrix<T>, s_prev: &Matrix<T>, p: &DeltaRnnParams<T>) -> Result<(Matrix<T>, StepCache<T>)> {
    check_state(e, s_prev)?;
    let vs = p.v.matmul(s_prev)?;
    let d1 = vs.hadamard(e)?.mul_col_broadcast(&p.alpha)?;
    let d2 = vs.mul_col_broadcast(&p.beta1)?.add(&e.mul_col_broadcast(&p.beta2)?)?;
    let proposal = d1.add(&d2)?.add_col_broadcast(&p.b)?.map(tanh);
    let gate = e.add_col_broadcast(&p.b_r)?.map(sigmoid);
    let s_next = zip3(&proposal, &gate, s_prev, |pr, r, s| tanh((T::one() - r) * pr + r * s));
    Ok((s_next, StepCache::DeltaRnn { vs, d1, d2, proposal, gate }))
}

fn gate_pre<T: Scalar>(g: &Gate<T>, e: &Matrix<T>, h: &Matrix<T>) -> Result<Matrix<T>> {
    g.w.matmul(e)?.add(&g.u.matmul(h)?)?.add_col_broadcast(&g.b)
}

/// GRU update with the reset gate applied to the recurrent term:
/// `z = sig(W_z e + U_z s + b_z)`, `r = sig(W_r e + U_r s + b_r)`,
/// `c = tanh(W_c e + U_c (r * s) + b_c)`, `s' = (1 - z) * s + z * c`.
pub fn gru_step<T: Scalar>(e: &Matrix<T>, s_prev: &Matrix<T>, p: &GruParams<T>) -> Result<(Matrix<T>, StepCache<T>)> {
    check_state(e, s_prev)?;
    let update = gate_pre(&p.update, e, s_prev)?.map(sigmoid);
    let reset = gate_pre(&p.reset, e, s_prev)?.map(sigmoid);
    let gated = reset.hadamard(s_prev)?;
    let candidate = gate_pre(&p.candidate, e, &gated)?.map(tanh);
    let s_next = zip3(&update, s_prev, &candidate, |z, s, c| (T::one() - z) * s + z * c);
    Ok((s_next, StepCache::Gru { update, reset, candidate }))
}

/// LSTM update: `c' = f * c + i * g`, `h' = o * tanh(c')`.
pub fn lstm_step<T: Scalar>(e: &Matrix<T>, h_prev: &Matrix<T>, c_prev: &Matrix<T>, p: &LstmParams<T>) -> Result<(State<T>, StepCache<T>)> {
    check_state(e, h_prev)?;
    check_state(e, c_prev)?;
    let input = gate_pre(&p.input, e, h_prev)?.map(sigmoid);
    let forget = gate_pre(&p.forget, e, h_prev)?.map(sigmoid);
    let output = gate_pre(&p.output, e, h_prev)?.map(sigmoid);
    let cell_in = gate_pre(&p.cell, e, h_prev)?.map(tanh);
    let cell = zip3(&forget, c_prev, &input.hadamard(&cell_in)?, |f, c, ig| f * c + ig);
    let cell_tanh = cell.map(tanh);
    let h = output.hadamard(&cell_tanh)?;
    Ok((
        State { h, cell: Some(cell) },
        StepCache::Lstm {
            input,
            forget,
            output,
            cell_in,
            cell_tanh,
        },
    ))
}

/// One application of the state function for whichever kind `params` holds.
pub fn state_step<T: Scalar>(e: &Matrix<T>, prev: &State<T>, params: &EstimatorParams<T>) -> Result<(State<T>, StepCache<T>)> {
    match &params.state {
        StateParams::Mlp(p) => Ok((
            State {
                h: mlp_step(e, p)?,
                cell: None,
            },
            StepCache::Mlp,
        )),
        StateParams::DeltaRnn(p) => {
            let (h, cache) = delta_rnn_step(e, &prev.h, p)?;
            Ok((State { h, cell: None }, cache))
        }
        StateParams::Gru(p) => {
            let (h, cache) = gru_step(e, &prev.h, p)?;
            Ok((State { h, cell: None }, cache))
        }
        StateParams::Lstm(p) => {
            let c = prev.cell.as_ref().ok_or_else(|| Error::State("LSTM state is missing its cell".into()))?;
            lstm_step(e, &prev.h, c, p)
        }
    }
}

/// Affine read-out `U s + c` (no clamping).
pub fn reconstruct_patch<T: Scalar>(s: &Matrix<T>, p: &ReadoutParams<T>) -> Result<Matrix<T>> {
    p.u.matmul(s)?.add_col_broadcast(&p.c)
}

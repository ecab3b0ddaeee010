use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{uniform_init, Matrix, Rng};
use crate::patching::SLOTS;
use crate::scalar::Scalar;

/// Half-width of the uniform weight initialisation.
pub const INIT_RANGE: f64 = 0.054;
/// Symbols are divided by this before entering the transform.
pub const DEFAULT_INPUT_DIVISOR: f64 = 64.0;
pub const DEFAULT_HIDDEN: usize = 512;
pub const LSTM_FORGET_BIAS: f64 = 1.0;
pub const DELTA_RNN_GAIN_INIT: f64 = 1.0;

/// State-function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Mlp,
    DeltaRnn,
    Gru,
    Lstm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [EstimatorKind::Mlp, EstimatorKind::DeltaRnn, EstimatorKind::Gru, EstimatorKind::Lstm];

    /// Checkpoint code.
    pub fn code(self) -> u8 {
        match self {
            EstimatorKind::Mlp => 0,
            EstimatorKind::DeltaRnn => 1,
            EstimatorKind::Gru => 2,
            EstimatorKind::Lstm => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.code() == code)
            .ok_or_else(|| Error::data(format!("unknown estimator kind code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mlp => "mlp",
            EstimatorKind::DeltaRnn => "delta-rnn",
            EstimatorKind::Gru => "gru",
            EstimatorKind::Lstm => "lstm",
        }
    }

    /// Whether state survives from one episode to the next.
    pub fn is_recurrent(self) -> bool {
        self != EstimatorKind::Mlp
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mlp" => Ok(EstimatorKind::Mlp),
            "delta-rnn" | "deltarnn" | "drnn" => Ok(EstimatorKind::DeltaRnn),
            "gru" => Ok(EstimatorKind::Gru),
            "lstm" => Ok(EstimatorKind::Lstm),
            other => Err(Error::Param(format!("unknown estimator kind '{other}'"))),
        }
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub hidden: usize,
    /// Patch side `d`; inputs and outputs have `d * d` entries.
    pub d: usize,
    /// Context slots (neighbours plus the target).
    pub slots: usize,
    /// One projection shared by every slot.
    pub tied: bool,
    pub input_divisor: f64,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, hidden: usize, d: usize) -> Self {
        EstimatorConfig {
            kind,
            hidden,
            d,
            slots: SLOTS,
            tied: false,
            input_divisor: DEFAULT_INPUT_DIVISOR,
        }
    }

    pub fn tied(mut self, tied: bool) -> Self {
        self.tied = tied;
        self
    }

    #[inline]
    pub fn patch_dim(&self) -> usize {
        self.d * self.d
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.d == 0 {
            return Err(Error::Config("hidden size and patch side must be positive".into()));
        }
        if self.slots != SLOTS {
            return Err(Error::Config(format!("context must have {SLOTS} slots, got {}", self.slots)));
        }
        if !(self.input_divisor > 0.0) || !self.input_divisor.is_finite() {
            return Err(Error::Config(format!("input divisor must be positive, got {}", self.input_divisor)));
        }
        Ok(())
    }
}

/// `e = sum_n W_n q_n + W_p f` over the context slots and presence flags.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformParams<T> {
    /// One `H x d^2` matrix per slot, or a single shared one when tied.
    pub w: Vec<Matrix<T>>,
    /// `H x slots` projection of the presence flags.
    pub presence: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub b: Matrix<T>,
}

/// Delta-RNN state function parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRnnParams<T> {
    pub v: Matrix<T>,
    pub b: Matrix<T>,
    pub b_r: Matrix<T>,
    pub alpha: Matrix<T>,
    pub beta1: Matrix<T>,
    pub beta2: Matrix<T>,
}

/// One gate's input, recurrent and bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<T> {
    pub w: Matrix<T>,
    pub u: Matrix<T>,
    pub b: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub update: Gate<T>,
    pub reset: Gate<T>,
    pub candidate: Gate<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub input: Gate<T>,
    pub forget: Gate<T>,
    pub output: Gate<T>,
    pub cell: Gate<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateParams<T> {
    Mlp(MlpParams<T>),
    DeltaRnn(DeltaRnnParams<T>),
    Gru(GruParams<T>),
    Lstm(LstmParams<T>),
}

/// `p = U s + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutParams<T> {
    pub u: Matrix<T>,
    pub c: Matrix<T>,
}

/// All learnable parameters of one estimator.
///
/// Gradients use the same type, so every tensor-wise operation (optimiser,
/// clipping, checkpointing, gradient checks) goes through
/// [`EstimatorParams::tensors`] and [`EstimatorParams::tensors_mut`], which list
/// tensors in a fixed canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorParams<T> {
    pub config: EstimatorConfig,
    pub transform: TransformParams<T>,
    pub state: StateParams<T>,
    pub readout: ReadoutParams<T>,
}

fn gate_zeros<T: Scalar>(h: usize) -> Gate<T> {
    Gate {
        w: Matrix::zeros(h, h),
        u: Matrix::zeros(h, h),
        b: Matrix::zeros(h, 1),
    }
}

impl<T: Scalar> EstimatorParams<T> {
    /// All-zero parameters of the right shapes.
    pub fn zeros(config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let pd = config.patch_dim();
        let n_w = if config.tied { 1 } else { config.slots };
        let state = match config.kind {
            EstimatorKind::Mlp => StateParams::Mlp(MlpParams { b: Matrix::zeros(h, 1) }),
            EstimatorKind::DeltaRnn => StateParams::DeltaRnn(DeltaRnnParams {
                v: Matrix::zeros(h, h),
                b: Matrix::zeros(h, 1),
                b_r: Matrix::zeros(h, 1),
                alpha: Matrix::zeros(h, 1),
                beta1: Matrix::zeros(h, 1),
                beta2: Matrix::zeros(h, 1),
            }),
            EstimatorKind::Gru => StateParams::Gru(GruParams {
                update: gate_zeros(h),
                reset: gate_zeros(h),
                candidate: gate_zeros(h),
            }),
            EstimatorKind::Lstm => StateParams::Lstm(LstmParams {
                input: gate_zeros(h),
                forget: gate_zeros(h),
                output: gate_zeros(h),
                cell: gate_zeros(h),
            }),
        };
        Ok(EstimatorParams {
            config,
            transform: TransformParams {
                w: (0..n_w).map(|_| Matrix::zeros(h, pd)).collect(),
                presence: Matrix::zeros(h, config.slots),
            },
            state,
            readout: ReadoutParams {
                u: Matrix::zeros(pd, h),
                c: Matrix::zeros(pd, 1),
            },
        })
    }

    /// Random initialisation: weights uniform on `(-INIT_RANGE, INIT_RANGE)`,
    /// biases zero, LSTM forget bias one, Delta-RNN gains one.
    pub fn init(config: EstimatorConfig, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for (name, m) in p.tensors_mut() {
            let leaf = name.rsplit('.').next().unwrap_or(&name);
            match leaf {
                "alpha" | "beta1" | "beta2" => m.fill(T::of(DELTA_RNN_GAIN_INIT)),
                _ if name == "state.forget.b" => m.fill(T::of(LSTM_FORGET_BIAS)),
                _ if m.cols() == 1 => {}
                _ => *m = uniform_init(m.rows(), m.cols(), -INIT_RANGE, INIT_RANGE, rng)?,
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    pub fn kind(&self) -> EstimatorKind {
        self.config.kind
    }

    /// Projection used for context slot `n`.
    #[inline]
    pub fn slot_weight(&self, n: usize) -> &Matrix<T> {
        if self.config.tied {
            &self.transform.w[0]
        } else {
            &self.transform.w[n]
        }
    }

    /// Every tensor with its canonical name.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out: Vec<(String, &Matrix<T>)> = Vec::new();
        if self.config.tied {
            out.push(("transform.w".into(), &self.transform.w[0]));
        } else {
            for (n, w) in self.transform.w.iter().enumerate() {
                out.push((format!("transform.w{n}"), w));
            }
        }
        out.push(("transform.presence".into(), &self.transform.presence));
        match &self.state {
            StateParams::Mlp(p) => out.push(("state.b".into(), &p.b)),
            StateParams::DeltaRnn(p) => {
                out.push(("state.v".into(), &p.v));
                out.push(("state.b".into(), &p.b));
                out.push(("state.b_r".into(), &p.b_r));
                out.push(("state.alpha".into(), &p.alpha));
                out.push(("state.beta1".into(), &p.beta1));
                out.push(("state.beta2".into(), &p.beta2));
            }
            StateParams::Gru(p) => {
                for (g, gate) in [("update", &p.update), ("reset", &p.reset), ("candidate", &p.candidate)] {
                    push_gate(&mut out, g, gate);
                }
            }
            StateParams::Lstm(p) => {
                for (g, gate) in [("input", &p.input), ("forget", &p.forget), ("output", &p.output), ("cell", &p.cell)] {
                    push_gate(&mut out, g, gate);
                }
            }
        }
        out.push(("readout.u".into(), &self.readout.u));
        out.push(("readout.c".into(), &self.readout.c));
        out
    }

    /// Mutable view of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out: Vec<(String, &mut Matrix<T>)> = Vec::new();
        if self.config.tied {
            out.push(("transform.w".into(), &mut self.transform.w[0]));
        } else {
            for (n, w) in self.transform.w.iter_mut().enumerate() {
                out.push((format!("transform.w{n}"), w));
            }
        }
        out.push(("transform.presence".into(), &mut self.transform.presence));
        match &mut self.state {
            StateParams::Mlp(p) => out.push(("state.b".into(), &mut p.b)),
            StateParams::DeltaRnn(p) => {
                out.push(("state.v".into(), &mut p.v));
                out.push(("state.b".into(), &mut p.b));
                out.push(("state.b_r".into(), &mut p.b_r));
                out.push(("state.alpha".into(), &mut p.alpha));
                out.push(("state.beta1".into(), &mut p.beta1));
                out.push(("state.beta2".into(), &mut p.beta2));
            }
            StateParams::Gru(p) => {
                push_gate_mut(&mut out, "update", &mut p.update);
                push_gate_mut(&mut out, "reset", &mut p.reset);
                push_gate_mut(&mut out, "candidate", &mut p.candidate);
            }
            StateParams::Lstm(p) => {
                push_gate_mut(&mut out, "input", &mut p.input);
                push_gate_mut(&mut out, "forget", &mut p.forget);
                push_gate_mut(&mut out, "output", &mut p.output);
                push_gate_mut(&mut out, "cell", &mut p.cell);
            }
        }
        out.push(("readout.u".into(), &mut self.readout.u));
        out.push(("readout.c".into(), &mut self.readout.c));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Squared L2 norm over every tensor.
    pub fn norm_sq(&self) -> T {
        self.tensors().iter().fold(T::zero(), |acc, (_, m)| acc + m.norm_sq())
    }

    pub fn scale_inplace(&mut self, s: T) {
        for (_, m) in self.tensors_mut() {
            m.map_inplace(|v| v * s);
        }
    }

    /// `self += alpha * other`; shapes must match.
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        let src = other.tensors();
        let dst = self.tensors_mut();
        if src.len() != dst.len() {
            return Err(Error::Config("parameter sets have different layouts".into()));
        }
        for ((_, d), (_, s)) in dst.into_iter().zip(src) {
            d.axpy(alpha, s)?;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> EstimatorParams<U> {
        let mut out = EstimatorParams::<U>::zeros(self.config).expect("validated config");
        for ((_, d), (_, s)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *d = s.cast();
        }
        out
    }
}

fn push_gate<'a, T>(out: &mut Vec<(String, &'a Matrix<T>)>, name: &str, g: &'a Gate<T>) {
    out.push((format!("state.{name}.w"), &g.w));
    out.push((format!("state.{name}.u"), &g.u));
    out.push((format!("state.{name}.b"), &g.b));
}

fn push_gate_mut<'a, T>(out: &mut Vec<(String, &'a mut Matrix<T>)>, name: &str, g: &'a mut Gate<T>) {
    out.push((format!("state.{name}.w"), &mut g.w));
    out.push((format!("state.{name}.u"), &mut g.u));
    out.push((format!("state.{name}.b"), &mut g.b));
}

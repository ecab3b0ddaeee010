//! The nonlinear decoder: context transform, state functions and affine
//! read-out, evaluated over K-step reconstruction episodes.

mod cells;
mod episode;
mod params;

pub use cells::{delta_rnn_step, gru_step, lstm_step, mlp_step, reconstruct_patch, state_step, State, StepCache};
pub use episode::{run_episode, run_episode_until, run_episode_with, transform, ContextBatch, ContextPolicy, EpisodeTrace, StepRecord};
pub use params::{
    DeltaRnnParams, EstimatorConfig, EstimatorKind, EstimatorParams, Gate, GruParams, LstmParams, MlpParams, ReadoutParams, StateParams,
    TransformParams, DEFAULT_HIDDEN, DEFAULT_INPUT_DIVISOR, DELTA_RNN_GAIN_INIT, INIT_RANGE, LSTM_FORGET_BIAS,
};

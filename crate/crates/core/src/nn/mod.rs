//! Minimal neural core: dense, LSTM, bidirectional LSTM, highway layers,
//! losses and Adam, with hand-written backpropagation.

pub mod adam;
pub mod dense;
pub mod gradcheck;
pub mod highway;
pub mod loss;
pub mod lstm;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use dense::{dense_backward, dense_forward, Activation, DenseParams};
pub use highway::{highway_forward, HighwayParams, HighwayStack};
pub use loss::{bce_with_logits, mse_loss};
pub use lstm::{
    bilstm_backward, bilstm_forward, bilstm_forward_cached, cell_backward, lstm_cell_forward, lstm_cell_step, BiLayer, BiLstm,
    LstmLayerParams,
};
pub use tensor::{sigmoid, ParamSet, Real, Tensor2};

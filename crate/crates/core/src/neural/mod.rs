//! Recurrent regression network trained from scratch.
//!
//! Layout: input -> LSTM(80) -> LSTM(60) -> fully connected -> regression.
//! The regression layer is the identity over the FC output; its loss is the
//! half mean squared error over predicted complex symbols.

mod adam;
mod gradcheck;
mod lstm;
mod network;
mod tensor;

pub use adam::{adam_step, AdamState, DEFAULT_LR};
pub use gradcheck::{grad_check, grad_check_against};
pub use lstm::{lstm_backward, lstm_forward, Gate, LstmCache, LstmGrads, LstmLayer};
pub use network::{
    backward, backward_with_fault, forward, forward_cached, hmse, hmse_grad, ForwardCache,
    Gradients, Network, FIRST_HIDDEN, SECOND_HIDDEN,
};
pub use tensor::Tensor;

/// Dot product with four independent accumulators; the summation order is
/// fixed so results are reproducible bit for bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out += alpha * x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

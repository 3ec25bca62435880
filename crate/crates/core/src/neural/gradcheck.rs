//! Central finite-difference check of the analytic gradients.

use super::network::{backward, forward, forward_cached, hmse, hmse_grad, Gradients, Network};
use super::Tensor;
use crate::error::Result;
use crate::framing::FeatureSequence;

/// Denominator floor so that entries where both gradients vanish are compared
/// absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-6;

/// Worst relative error between backpropagated and central-difference
/// gradients of the HMSE loss over every parameter.
pub fn grad_check(
    net: &Network,
    features: &FeatureSequence,
    target: &Tensor,
    eps: f64,
) -> Result<f64> {
    let (pred, cache) = forward_cached(net, features)?;
    let analytic = backward(net, &cache, &hmse_grad(&pred, target)?)?;
    grad_check_against(net, features, target, eps, &analytic)
}

/// Compares externally supplied gradients against central differences.
pub fn grad_check_against(
    net: &Network,
    features: &FeatureSequence,
    target: &Tensor,
    eps: f64,
    analytic: &Gradients,
) -> Result<f64> {
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.tensors.iter().enumerate() {
        for k in 0..grad.len() {
            let orig = probe.params()[pi].data()[k];
            probe.params_mut()[pi].data_mut()[k] = orig + eps;
            let plus = hmse(&forward(&probe, features)?, target)?;
            probe.params_mut()[pi].data_mut()[k] = orig - eps;
            let minus = hmse(&forward(&probe, features)?, target)?;
            probe.params_mut()[pi].data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

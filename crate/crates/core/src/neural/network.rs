use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::lstm::{lstm_backward_impl, lstm_forward, Gate, LstmCache, LstmLayer};
use super::{axpy, dot, Tensor};
use crate::error::{Error, Result};
use crate::framing::FeatureSequence;

pub const FIRST_HIDDEN: usize = 80;
pub const SECOND_HIDDEN: usize = 60;

/// Each parameter state gets a unique stamp; caches remember the stamp of
/// the parameters that produced them.
static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct Network {
    lstm1: LstmLayer,
    lstm2: LstmLayer,
    /// `[output_dim, H2]`
    fc_weight: Tensor,
    /// `[output_dim]`
    fc_bias: Tensor,
    stamp: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.lstm1 == other.lstm1
            && self.lstm2 == other.lstm2
            && self.fc_weight == other.fc_weight
            && self.fc_bias == other.fc_bias
    }
}

fn glorot<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::from_vec(&[rows, cols], data).expect("shape")
}

/// Square orthogonal matrix from Gram-Schmidt on a Gaussian draw.
fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        let mut ok = true;
        for r in 0..n {
            for p in 0..r {
                let (done, rest) = m.split_at_mut(r * n);
                let prev = &done[p * n..(p + 1) * n];
                let row = &mut rest[..n];
                let proj = dot(prev, row);
                axpy(-proj, prev, row);
            }
            let row = &mut m[r * n..(r + 1) * n];
            let norm = dot(row, row).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            return m;
        }
    }
}

fn init_lstm<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> LstmLayer {
    let w_input = glorot(4 * hidden, input_dim, input_dim, 4 * hidden, rng);
    let mut rec = Vec::with_capacity(4 * hidden * hidden);
    for _ in 0..4 {
        rec.extend(orthogonal(hidden, rng));
    }
    let w_recurrent = Tensor::from_vec(&[4 * hidden, hidden], rec).expect("shape");
    let mut bias = Tensor::zeros(&[4 * hidden]);
    bias.data_mut()[hidden..2 * hidden].fill(1.0);
    LstmLayer::from_tensors(w_input, w_recurrent, bias).expect("shape")
}

impl Network {
    /// Detector network with the standard 80/60 hidden sizes.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        Self::with_sizes(input_dim, FIRST_HIDDEN, SECOND_HIDDEN, output_dim, rng)
    }

    /// Glorot-uniform input and FC weights, orthogonal recurrent blocks, zero
    /// biases except forget gates at 1.
    pub fn with_sizes<R: Rng + ?Sized>(
        input_dim: usize,
        hidden1: usize,
        hidden2: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let lstm1 = init_lstm(input_dim, hidden1, rng);
        let lstm2 = init_lstm(hidden1, hidden2, rng);
        let fc_weight = glorot(output_dim, hidden2, hidden2, output_dim, rng);
        Self {
            lstm1,
            lstm2,
            fc_weight,
            fc_bias: Tensor::zeros(&[output_dim]),
            stamp: fresh_stamp(),
        }
    }

    pub fn zeros(input_dim: usize, hidden1: usize, hidden2: usize, output_dim: usize) -> Self {
        Self {
            lstm1: LstmLayer::zeros(input_dim, hidden1),
            lstm2: LstmLayer::zeros(hidden1, hidden2),
            fc_weight: Tensor::zeros(&[output_dim, hidden2]),
            fc_bias: Tensor::zeros(&[output_dim]),
            stamp: fresh_stamp(),
        }
    }

    /// Rebuilds a network from tensors in [`Network::params`] order.
    pub fn from_params(mut params: Vec<Tensor>) -> Result<Self> {
        if params.len() != 8 {
            return Err(Error::ShapeMismatch(format!(
                "expected 8 parameter tensors, got {}",
                params.len()
            )));
        }
        let fc_bias = params.pop().unwrap();
        let fc_weight = params.pop().unwrap();
        let b2 = params.pop().unwrap();
        let r2 = params.pop().unwrap();
        let w2 = params.pop().unwrap();
        let b1 = params.pop().unwrap();
        let r1 = params.pop().unwrap();
        let w1 = params.pop().unwrap();
        let lstm1 = LstmLayer::from_tensors(w1, r1, b1)?;
        let lstm2 = LstmLayer::from_tensors(w2, r2, b2)?;
        if lstm2.input_dim() != lstm1.hidden() {
            return Err(Error::ShapeMismatch(
                "second LSTM input does not match first LSTM width".into(),
            ));
        }
        let out = fc_weight.rows();
        if fc_weight.shape() != [out, lstm2.hidden()] || fc_bias.shape() != [out] {
            return Err(Error::ShapeMismatch(format!(
                "FC weight {:?} / bias {:?} inconsistent with width {}",
                fc_weight.shape(),
                fc_bias.shape(),
                lstm2.hidden()
            )));
        }
        Ok(Self {
            lstm1,
            lstm2,
            fc_weight,
            fc_bias,
            stamp: fresh_stamp(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.lstm1.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.fc_bias.len()
    }

    pub fn lstm1(&self) -> &LstmLayer {
        &self.lstm1
    }

    pub fn lstm2(&self) -> &LstmLayer {
        &self.lstm2
    }

    pub fn fc_weight(&self) -> &Tensor {
        &self.fc_weight
    }

    pub fn fc_bias(&self) -> &Tensor {
        &self.fc_bias
    }

    /// Parameters in canonical order: LSTM1 (input, recurrent, bias), LSTM2
    /// (input, recurrent, bias), FC weight, FC bias.
    pub fn params(&self) -> [&Tensor; 8] {
        [
            &self.lstm1.w_input,
            &self.lstm1.w_recurrent,
            &self.lstm1.bias,
            &self.lstm2.w_input,
            &self.lstm2.w_recurrent,
            &self.lstm2.bias,
            &self.fc_weight,
            &self.fc_bias,
        ]
    }

    /// Mutable parameters; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> [&mut Tensor; 8] {
        self.stamp = fresh_stamp();
        [
            &mut self.lstm1.w_input,
            &mut self.lstm1.w_recurrent,
            &mut self.lstm1.bias,
            &mut self.lstm2.w_input,
            &mut self.lstm2.w_recurrent,
            &mut self.lstm2.bias,
            &mut self.fc_weight,
            &mut self.fc_bias,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

/// Gradients laid out like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            tensors: net
                .params()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data().iter().copied())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    lstm1: LstmCache,
    lstm2: LstmCache,
    h2: Tensor,
}

fn features_tensor(net: &Network, features: &FeatureSequence) -> Result<Tensor> {
    if features.feature_dim() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "network takes {} features per step, sequence has {}",
            net.input_dim(),
            features.feature_dim()
        )));
    }
    Tensor::from_vec(
        &[features.len(), features.feature_dim()],
        features.as_slice().to_vec(),
    )
}

/// Forward pass from zero state; returns `[T, output_dim]` predictions.
pub fn forward_cached(net: &Network, features: &FeatureSequence) -> Result<(Tensor, ForwardCache)> {
    let x = features_tensor(net, features)?;
    let (h1, c1) = (vec![0.0; net.lstm1.hidden()], vec![0.0; net.lstm1.hidden()]);
    let (seq1, cache1) = lstm_forward(&net.lstm1, &x, &h1, &c1)?;
    let (h2, c2) = (vec![0.0; net.lstm2.hidden()], vec![0.0; net.lstm2.hidden()]);
    let (seq2, cache2) = lstm_forward(&net.lstm2, &seq1, &h2, &c2)?;

    let steps = seq2.rows();
    let out_dim = net.output_dim();
    let mut out = Tensor::zeros(&[steps, out_dim]);
    for t in 0..steps {
        let h = seq2.row(t);
        for (j, o) in out.row_mut(t).iter_mut().enumerate() {
            *o = net.fc_bias.data()[j] + dot(net.fc_weight.row(j), h);
        }
    }
    Ok((
        out,
        ForwardCache {
            stamp: net.stamp,
            lstm1: cache1,
            lstm2: cache2,
            h2: seq2,
        },
    ))
}

pub fn forward(net: &Network, features: &FeatureSequence) -> Result<Tensor> {
    forward_cached(net, features).map(|(out, _)| out)
}

/// Half mean squared error over symbols: `0.5 * sum ||x - x_hat||^2 / N`
/// with `N` the number of rows.
pub fn hmse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_loss_shapes(pred, target)?;
    let n = pred.rows() as f64;
    let sq: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * sq / n)
}

/// Gradient of [`hmse`] with respect to `pred`.
pub fn hmse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_loss_shapes(pred, target)?;
    let n = pred.rows() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) / n)
        .collect();
    Tensor::from_vec(pred.shape(), data)
}

fn check_loss_shapes(pred: &Tensor, target: &Tensor) -> Result<()> {
    if !pred.same_shape(target) {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.rows() == 0 || pred.is_empty() {
        return Err(Error::ShapeMismatch(
            "loss needs at least one target symbol".into(),
        ));
    }
    Ok(())
}

/// Exact parameter gradients by backpropagation through time, given the
/// loss gradient with respect to the predictions.
pub fn backward(net: &Network, cache: &ForwardCache, loss_grad: &Tensor) -> Result<Gradients> {
    backward_impl(net, cache, loss_grad, None)
}

/// [`backward`] with the sign of one first-layer gate delta flipped. Only
/// useful for checking that the gradient checker catches faults.
#[doc(hidden)]
pub fn backward_with_fault(
    net: &Network,
    cache: &ForwardCache,
    loss_grad: &Tensor,
    gate: Gate,
) -> Result<Gradients> {
    backward_impl(net, cache, loss_grad, Some(gate))
}

fn backward_impl(
    net: &Network,
    cache: &ForwardCache,
    dout: &Tensor,
    fault: Option<Gate>,
) -> Result<Gradients> {
    if cache.stamp != net.stamp {
        return Err(Error::StaleCache);
    }
    let steps = cache.h2.rows();
    let out_dim = net.output_dim();
    if dout.shape() != [steps, out_dim] {
        return Err(Error::ShapeMismatch(format!(
            "loss gradient {:?}, expected [{steps}, {out_dim}]",
            dout.shape()
        )));
    }
    let h2w = net.lstm2.hidden();
    let mut d_fc_w = Tensor::zeros(&[out_dim, h2w]);
    let mut d_fc_b = Tensor::zeros(&[out_dim]);
    let mut dh2 = Tensor::zeros(&[steps, h2w]);
    for t in 0..steps {
        let g = dout.row(t);
        let h = cache.h2.row(t);
        for (j, &gj) in g.iter().enumerate() {
            d_fc_b.data_mut()[j] += gj;
            axpy(gj, h, d_fc_w.row_mut(j));
            axpy(gj, net.fc_weight.row(j), dh2.row_mut(t));
        }
    }
    let (g2, dh1) = lstm_backward_impl(&net.lstm2, &cache.lstm2, &dh2, true, None)?;
    let dh1 = dh1.expect("requested input gradient");
    let (g1, _) = lstm_backward_impl(&net.lstm1, &cache.lstm1, &dh1, false, fault)?;
    Ok(Gradients {
        tensors: vec![
            g1.w_input,
            g1.w_recurrent,
            g1.bias,
            g2.w_input,
            g2.w_recurrent,
            g2.bias,
            d_fc_w,
            d_fc_b,
        ],
    })
}

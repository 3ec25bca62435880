//! Single LSTM layer, forward recurrence and backpropagation through time.
//!
//! Gate rows are stacked in the order input, forget, candidate, output:
//! rows `[0, H)` are the input gate, `[H, 2H)` forget, `[2H, 3H)` candidate,
//! `[3H, 4H)` output.
//!
//! ```text
//! i = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```

use super::{axpy, dot, sigmoid, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub(crate) input_dim: usize,
    pub(crate) hidden: usize,
    /// `[4H, input_dim]`
    pub(crate) w_input: Tensor,
    /// `[4H, H]`
    pub(crate) w_recurrent: Tensor,
    /// `[4H]`
    pub(crate) bias: Tensor,
}

impl LstmLayer {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w_input: Tensor::zeros(&[4 * hidden, input_dim]),
            w_recurrent: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn from_tensors(w_input: Tensor, w_recurrent: Tensor, bias: Tensor) -> Result<Self> {
        let rows = w_input.rows();
        if !rows.is_multiple_of(4) || rows == 0 || w_input.shape().len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "input weights {:?} are not [4H, D]",
                w_input.shape()
            )));
        }
        let hidden = rows / 4;
        let input_dim = w_input.cols();
        if w_recurrent.shape() != [4 * hidden, hidden] || bias.shape() != [4 * hidden] {
            return Err(Error::ShapeMismatch(format!(
                "recurrent {:?} / bias {:?} inconsistent with hidden size {hidden}",
                w_recurrent.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            input_dim,
            hidden,
            w_input,
            w_recurrent,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_weights(&self) -> &Tensor {
        &self.w_input
    }

    pub fn recurrent_weights(&self) -> &Tensor {
        &self.w_recurrent
    }

    pub fn biases(&self) -> &Tensor {
        &self.bias
    }
}

/// Everything backward needs: inputs, gate activations, cell states.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    x: Vec<f64>,
    /// Post-nonlinearity gate values, `[T, 4H]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
    h0: Vec<f64>,
    c0: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_input: Tensor,
    pub w_recurrent: Tensor,
    pub bias: Tensor,
}

/// Runs the layer over `x_seq` (`[T, input_dim]`) from state `(h0, c0)`.
/// Returns `h_seq` as `[T, H]`.
pub fn lstm_forward(
    layer: &LstmLayer,
    x_seq: &Tensor,
    h0: &[f64],
    c0: &[f64],
) -> Result<(Tensor, LstmCache)> {
    let (d, hd) = (layer.input_dim, layer.hidden);
    if x_seq.shape().len() != 2 || x_seq.cols() != d {
        return Err(Error::ShapeMismatch(format!(
            "LSTM expects [T, {d}] input, got {:?}",
            x_seq.shape()
        )));
    }
    if h0.len() != hd || c0.len() != hd {
        return Err(Error::ShapeMismatch(format!(
            "initial state must have {hd} entries"
        )));
    }
    let steps = x_seq.rows();
    let mut gates = vec![0.0; steps * 4 * hd];
    let mut c = vec![0.0; steps * hd];
    let mut h = vec![0.0; steps * hd];
    let mut z = vec![0.0; 4 * hd];

    for t in 0..steps {
        let x_t = x_seq.row(t);
        let (h_prev, c_prev) = if t == 0 {
            (h0, c0)
        } else {
            (&h[(t - 1) * hd..t * hd], &c[(t - 1) * hd..t * hd])
        };
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = layer.bias.data()[r]
                + dot(layer.w_input.row(r), x_t)
                + dot(layer.w_recurrent.row(r), h_prev);
        }
        let g_t = &mut gates[t * 4 * hd..(t + 1) * 4 * hd];
        for k in 0..hd {
            g_t[k] = sigmoid(z[k]);
            g_t[hd + k] = sigmoid(z[hd + k]);
            g_t[2 * hd + k] = z[2 * hd + k].tanh();
            g_t[3 * hd + k] = sigmoid(z[3 * hd + k]);
        }
        let mut c_t = vec![0.0; hd];
        for k in 0..hd {
            c_t[k] = g_t[hd + k] * c_prev[k] + g_t[k] * g_t[2 * hd + k];
        }
        for k in 0..hd {
            h[t * hd + k] = g_t[3 * hd + k] * c_t[k].tanh();
        }
        c[t * hd..(t + 1) * hd].copy_from_slice(&c_t);
    }

    let h_seq = Tensor::from_vec(&[steps, hd], h.clone())?;
    Ok((
        h_seq,
        LstmCache {
            steps,
            x: x_seq.data().to_vec(),
            gates,
            c,
            h,
            h0: h0.to_vec(),
            c0: c0.to_vec(),
        },
    ))
}

/// BPTT over the whole cached sequence. `dh_seq` is the loss gradient with
/// respect to every output `h_t`. Returns parameter gradients and, when
/// `want_dx`, the gradient with respect to the inputs.
pub fn lstm_backward(
    layer: &LstmLayer,
    cache: &LstmCache,
    dh_seq: &Tensor,
    want_dx: bool,
) -> Result<(LstmGrads, Option<Tensor>)> {
    lstm_backward_impl(layer, cache, dh_seq, want_dx, None)
}

pub(crate) fn lstm_backward_impl(
    layer: &LstmLayer,
    cache: &LstmCache,
    dh_seq: &Tensor,
    want_dx: bool,
    flip: Option<Gate>,
) -> Result<(LstmGrads, Option<Tensor>)> {
    let (d, hd) = (layer.input_dim, layer.hidden);
    let steps = cache.steps;
    if dh_seq.shape() != [steps, hd] || cache.x.len() != steps * d {
        return Err(Error::ShapeMismatch(format!(
            "LSTM backward expects [{steps}, {hd}] gradient, got {:?}",
            dh_seq.shape()
        )));
    }
    let mut dw_in = Tensor::zeros(&[4 * hd, d]);
    let mut dw_rec = Tensor::zeros(&[4 * hd, hd]);
    let mut db = Tensor::zeros(&[4 * hd]);
    let mut dx = if want_dx {
        Some(Tensor::zeros(&[steps, d]))
    } else {
        None
    };

    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];

    for t in (0..steps).rev() {
        let g_t = &cache.gates[t * 4 * hd..(t + 1) * 4 * hd];
        let c_t = &cache.c[t * hd..(t + 1) * hd];
        let (h_prev, c_prev) = if t == 0 {
            (&cache.h0[..], &cache.c0[..])
        } else {
            (
                &cache.h[(t - 1) * hd..t * hd],
                &cache.c[(t - 1) * hd..t * hd],
            )
        };
        let dh_in = dh_seq.row(t);
        for k in 0..hd {
            let (i, f, g, o) = (g_t[k], g_t[hd + k], g_t[2 * hd + k], g_t[3 * hd + k]);
            let dh = dh_in[k] + dh_next[k];
            let tc = c_t[k].tanh();
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            dz[k] = dc * g * i * (1.0 - i);
            dz[hd + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * hd + k] = dc * i * (1.0 - g * g);
            dz[3 * hd + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        if let Some(gate) = flip {
            let s = gate as usize * hd;
            dz[s..s + hd].iter_mut().for_each(|v| *v = -*v);
        }

        let x_t = &cache.x[t * d..(t + 1) * d];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            db.data_mut()[r] += dzr;
            axpy(dzr, x_t, dw_in.row_mut(r));
            axpy(dzr, h_prev, dw_rec.row_mut(r));
            axpy(dzr, layer.w_recurrent.row(r), &mut dh_next);
            if let Some(dx) = dx.as_mut() {
                axpy(dzr, layer.w_input.row(r), dx.row_mut(t));
            }
        }
    }

    Ok((
        LstmGrads {
            w_input: dw_in,
            w_recurrent: dw_rec,
            bias: db,
        },
        dx,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_layer() -> LstmLayer {
        // input_dim 2, hidden 2, fixed weights.
        let w_in: Vec<f64> = (0..16).map(|k| 0.1 * (k as f64 - 7.5) / 4.0).collect();
        let w_rec: Vec<f64> = (0..16)
            .map(|k| 0.05 * ((k * 7 % 16) as f64 - 8.0) / 4.0)
            .collect();
        let b: Vec<f64> = (0..8).map(|k| 0.02 * k as f64 - 0.05).collect();
        LstmLayer::from_tensors(
            Tensor::from_vec(&[8, 2], w_in).unwrap(),
            Tensor::from_vec(&[8, 2], w_rec).unwrap(),
            Tensor::from_vec(&[8], b).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_layer_outputs_zero() {
        let layer = LstmLayer::zeros(3, 5);
        let x = Tensor::from_vec(&[4, 3], (0..12).map(|k| k as f64 - 6.0).collect()).unwrap();
        let (h, _) = lstm_forward(&layer, &x, &[0.0; 5], &[0.0; 5]).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_step_scalar_reference() {
        let layer = small_layer();
        let x = [0.7, -1.2];
        let h0 = [0.3, -0.1];
        let c0 = [0.5, 0.2];
        // Scalar evaluation of the gate equations.
        let w = |m: &Tensor, r: usize, c: usize| m.data()[r * 2 + c];
        let mut pre = [0.0; 8];
        for r in 0..8 {
            pre[r] = layer.bias.data()[r]
                + w(&layer.w_input, r, 0) * x[0]
                + w(&layer.w_input, r, 1) * x[1]
                + w(&layer.w_recurrent, r, 0) * h0[0]
                + w(&layer.w_recurrent, r, 1) * h0[1];
        }
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut want = [0.0; 2];
        for k in 0..2 {
            let i = s(pre[k]);
            let f = s(pre[2 + k]);
            let g = pre[4 + k].tanh();
            let o = s(pre[6 + k]);
            let c = f * c0[k] + i * g;
            want[k] = o * c.tanh();
        }
        let xs = Tensor::from_vec(&[1, 2], x.to_vec()).unwrap();
        let (h, _) = lstm_forward(&layer, &xs, &h0, &c0).unwrap();
        for k in 0..2 {
            assert!(
                (h.data()[k] - want[k]).abs() < 1e-15,
                "{} vs {}",
                h.data()[k],
                want[k]
            );
        }
    }

    #[test]
    fn outputs_bounded() {
        let mut layer = small_layer();
        layer.w_input.data_mut().iter_mut().for_each(|v| *v *= 50.0);
        let x = Tensor::from_vec(
            &[6, 2],
            vec![
                3.0, -4.0, 10.0, 2.0, -7.0, 1.0, 0.0, 0.0, 5.0, 5.0, -5.0, -5.0,
            ],
        )
        .unwrap();
        let (h, _) = lstm_forward(&layer, &x, &[0.0; 2], &[0.0; 2]).unwrap();
        assert!(h.data().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn shape_errors() {
        let layer = small_layer();
        let x = Tensor::zeros(&[3, 4]);
        assert!(lstm_forward(&layer, &x, &[0.0; 2], &[0.0; 2]).is_err());
        let x = Tensor::zeros(&[3, 2]);
        assert!(lstm_forward(&layer, &x, &[0.0; 3], &[0.0; 2]).is_err());
        let (_, cache) = lstm_forward(&layer, &x, &[0.0; 2], &[0.0; 2]).unwrap();
        assert!(lstm_backward(&layer, &cache, &Tensor::zeros(&[2, 2]), false).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let layer = small_layer();
        let x0: Vec<f64> = vec![0.4, -0.3, 1.1, 0.2, -0.8, 0.6];
        let weights: Vec<f64> = vec![0.3, -1.0, 0.7, 0.2, -0.4, 0.9];
        let loss = |x: &[f64]| {
            let xs = Tensor::from_vec(&[3, 2], x.to_vec()).unwrap();
            let (h, _) = lstm_forward(&layer, &xs, &[0.0; 2], &[0.0; 2]).unwrap();
            h.data()
                .iter()
                .zip(&weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let xs = Tensor::from_vec(&[3, 2], x0.clone()).unwrap();
        let (_, cache) = lstm_forward(&layer, &xs, &[0.0; 2], &[0.0; 2]).unwrap();
        let dh = Tensor::from_vec(&[3, 2], weights.clone()).unwrap();
        let (_, dx) = lstm_backward(&layer, &cache, &dh, true).unwrap();
        let dx = dx.unwrap();
        for k in 0..6 {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            let num = (loss(&xp) - loss(&xm)) / 2e-6;
            assert!(
                (num - dx.data()[k]).abs() < 1e-8,
                "{k}: {num} vs {}",
                dx.data()[k]
            );
        }
    }
}

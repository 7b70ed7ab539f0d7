use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Feedforward network with ReLU hidden layers and a scalar linear output.
///
/// Parameters are stored layer by layer; each layer holds its weight matrix
/// (row-major, `out x in`) followed by its bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub on_z_only: bool,
    pub params: Vec<f64>,
}

impl MlpModel {
    /// He-initialized network: weights `N(0, 2 / fan_in)` (output layer
    /// `N(0, 1 / fan_in)`), zero biases.
    pub fn new(input_dim: usize, hidden: &[usize], on_z_only: bool, seed: u64) -> Result<Self> {
        let eff = if on_z_only { input_dim.saturating_sub(1) } else { input_dim };
        if eff == 0 {
            return Err(Error::InvalidSize {
                what: "network input",
                got: 0,
                min: 1,
            });
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidSize {
                what: "hidden width",
                got: 0,
                min: 1,
            });
        }
        let mut m = MlpModel {
            input_dim,
            hidden: hidden.to_vec(),
            on_z_only,
            params: Vec::new(),
        };
        let mut rng = Stream::new(seed, "mlp/init");
        let widths = m.widths();
        for l in 0..widths.len() - 1 {
            let (fan_in, out) = (widths[l], widths[l + 1]);
            let gain = if l + 2 == widths.len() { 1.0 } else { 2.0 };
            let sd = libm::sqrt(gain / fan_in as f64);
            for _ in 0..fan_in * out {
                m.params.push(sd * rng.normal());
            }
            m.params.extend(core::iter::repeat_n(0.0, out));
        }
        Ok(m)
    }

    fn widths(&self) -> Vec<usize> {
        let eff = if self.on_z_only { self.input_dim - 1 } else { self.input_dim };
        let mut w = vec![eff];
        w.extend_from_slice(&self.hidden);
        w.push(1);
        w
    }

    pub fn n_params(&self) -> usize {
        let w = self.widths();
        w.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Offset of the output layer's weights within `params`.
    pub fn output_layer_range(&self) -> core::ops::Range<usize> {
        let w = self.widths();
        let last = *w.iter().rev().nth(1).unwrap_or(&0);
        let end = self.params.len();
        end - last - 1..end
    }

    fn input<'a>(&self, x: &'a [f64]) -> Result<&'a [f64]> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(if self.on_z_only { &x[1..] } else { x })
    }

    /// Pre-activations of every layer.
    fn forward(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let w = self.widths();
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(w.len() - 1);
        let mut off = 0;
        for l in 0..w.len() - 1 {
            let (nin, nout) = (w[l], w[l + 1]);
            let act: Vec<f64>;
            let input: &[f64] = if l == 0 {
                z
            } else {
                act = pre[l - 1].iter().map(|v| v.max(0.0)).collect();
                &act
            };
            let weights = &self.params[off..off + nin * nout];
            let bias = &self.params[off + nin * nout..off + nin * nout + nout];
            let out: Vec<f64> = (0..nout)
                .map(|o| bias[o] + weights[o * nin..(o + 1) * nin].iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            pre.push(out);
            off += nin * nout + nout;
        }
        pre
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let z = self.input(x)?;
        Ok(self.forward(z).last().map_or(0.0, |o| o[0]))
    }

    /// Value and gradient with respect to the parameters, and optionally the
    /// gradient with respect to the (effective) input.
    fn backprop(&self, x: &[f64], grad: Option<&mut [f64]>, input_grad: Option<&mut [f64]>) -> Result<f64> {
        let z = self.input(x)?;
        let w = self.widths();
        let pre = self.forward(z);
        let value = pre.last().map_or(0.0, |o| o[0]);
        let nl = w.len() - 1;
        let mut offsets = Vec::with_capacity(nl);
        let mut off = 0;
        for l in 0..nl {
            offsets.push(off);
            off += w[l] * w[l + 1] + w[l + 1];
        }
        let mut grad = grad;
        let mut delta = vec![1.0];
        for l in (0..nl).rev() {
            let (nin, nout) = (w[l], w[l + 1]);
            let o = offsets[l];
            if let Some(g) = grad.as_deref_mut() {
                for r in 0..nout {
                    for c in 0..nin {
                        let a = if l == 0 { z[c] } else { pre[l - 1][c].max(0.0) };
                        g[o + r * nin + c] = delta[r] * a;
                    }
                    g[o + nin * nout + r] = delta[r];
                }
            }
            let weights = &self.params[o..o + nin * nout];
            let mut back = vec![0.0; nin];
            for r in 0..nout {
                if delta[r] != 0.0 {
                    for c in 0..nin {
                        back[c] += weights[r * nin + c] * delta[r];
                    }
                }
            }
            if l > 0 {
                for (c, b) in back.iter_mut().enumerate() {
                    if pre[l - 1][c] <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            delta = back;
        }
        if let Some(ig) = input_grad {
            ig.copy_from_slice(&delta);
        }
        Ok(value)
    }

    pub fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.backprop(x, Some(grad), None)
    }

    pub fn input_partial(&self, x: &[f64], j: usize) -> Result<f64> {
        if j >= self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: j,
            });
        }
        if self.on_z_only && j == 0 {
            return Ok(0.0);
        }
        let eff = if self.on_z_only { self.input_dim - 1 } else { self.input_dim };
        let mut ig = vec![0.0; eff];
        self.backprop(x, None, Some(&mut ig))?;
        Ok(ig[if self.on_z_only { j - 1 } else { j }])
    }
}

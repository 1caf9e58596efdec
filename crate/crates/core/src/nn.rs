//! Layers built on the tape: affine maps, a gated recurrent cell, and a
//! one-hidden-layer perceptron.

use crate::params::{ParamId, ParamSet};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(params: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = params.add_uniform(format!("{name}.weight"), (in_dim, out_dim), bound, rng);
        let bias = params.add_uniform(format!("{name}.bias"), (1, out_dim), bound, rng);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let w = tape.param(params, self.weight);
        let b = tape.param(params, self.bias);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

/// Gated recurrent cell; gate blocks are ordered reset, update, candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruCell {
    pub input: Linear,
    pub hidden: Linear,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new(params: &mut ParamSet, name: &str, in_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut affine = |suffix: &str, from: usize| {
            let weight =
                params.add_uniform(format!("{name}.{suffix}.weight"), (from, 3 * hidden_dim), bound, rng);
            let bias = params.add_uniform(format!("{name}.{suffix}.bias"), (1, 3 * hidden_dim), bound, rng);
            Linear {
                weight,
                bias,
                in_dim: from,
                out_dim: 3 * hidden_dim,
            }
        };
        let input = affine("input", in_dim);
        let hidden = affine("hidden", hidden_dim);
        Self {
            input,
            hidden,
            hidden_dim,
        }
    }

    /// Runs the cell over `steps` consecutive row blocks of `x`.
    ///
    /// `x` holds `steps * rows` rows, time-major; `h0` is `rows × hidden_dim`.
    /// Returns the hidden state after every step.
    pub fn unroll(&self, tape: &mut Tape, params: &ParamSet, x: Var, h0: Var, steps: usize) -> Vec<Var> {
        let rows = tape.shape(h0).0;
        debug_assert_eq!(tape.shape(x).0, rows * steps);
        let gi_all = self.input.forward(tape, params, x);
        let mut h = h0;
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let gi = if steps == 1 {
                gi_all
            } else {
                tape.slice_rows(gi_all, t * rows, rows)
            };
            let gh = self.hidden.forward(tape, params, h);
            h = tape.gru(gi, gh, h);
            out.push(h);
        }
        out
    }
}

/// `Linear -> ReLU -> Linear`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new(params: &mut ParamSet, name: &str, in_dim: usize, hidden: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Self {
            hidden: Linear::new(params, &format!("{name}.hidden"), in_dim, hidden, rng),
            output: Linear::new(params, &format!("{name}.output"), hidden, out_dim, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let h = self.hidden.forward(tape, params, x);
        let h = tape.relu(h);
        self.output.forward(tape, params, h)
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim
    }
}

//! Named parameter storage, initialization and the RMSprop optimizer.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::tape::Gradients;

pub type Matrix = Array2<f64>;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An ordered collection of named matrices.
///
/// Every set carries a process-unique id so a tape can tell two sets with the
/// same layout apart (online vs. target parameters). Cloning assigns a new id.
#[derive(Debug)]
pub struct ParamSet {
    uid: u64,
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        Self {
            uid: fresh_uid(),
            names: self.names.clone(),
            values: self.values.clone(),
        }
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.values == other.values
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            uid: fresh_uid(),
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform initialization in `[-bound, bound]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: (usize, usize),
        bound: f64,
        rng: &mut Rng,
    ) -> ParamId {
        let value = Array2::from_shape_fn(shape, |_| rng.gen_range(-bound..=bound));
        self.add(name, value)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Overwrites values with those of a set that has the same layout.
    pub fn copy_from(&mut self, other: &ParamSet) {
        assert_eq!(self.names, other.names, "parameter layouts differ");
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            dst.assign(src);
        }
    }

    /// Builds a set from names and values, used by checkpoint loading.
    pub fn from_parts(names: Vec<String>, values: Vec<Matrix>) -> Self {
        assert_eq!(names.len(), values.len());
        Self {
            uid: fresh_uid(),
            names,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub alpha: f64,
    pub eps: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub grad_clip: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            alpha: 0.99,
            eps: 1e-5,
            grad_clip: 10.0,
        }
    }
}

/// RMSprop without momentum or weight decay.
#[derive(Clone, Debug)]
pub struct RmsProp {
    config: RmsPropConfig,
    square_avg: Vec<Matrix>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, params: &ParamSet) -> Self {
        let square_avg = params
            .values
            .iter()
            .map(|v| Matrix::zeros(v.raw_dim()))
            .collect();
        Self { config, square_avg }
    }

    /// Applies one update and returns the pre-clip global gradient norm.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> f64 {
        let norm = grads.global_norm(params);
        let clip = if self.config.grad_clip > 0.0 && norm > self.config.grad_clip {
            self.config.grad_clip / (norm + 1e-6)
        } else {
            1.0
        };
        let RmsPropConfig {
            learning_rate: lr,
            alpha,
            eps,
            ..
        } = self.config;
        for id in params.ids() {
            let Some(g) = grads.get(params, id) else {
                continue;
            };
            let avg = &mut self.square_avg[id.0];
            Zip::from(params.values[id.0].view_mut())
                .and(avg)
                .and(g)
                .for_each(|p, v, &g| {
                    let g = g * clip;
                    *v = alpha * *v + (1.0 - alpha) * g * g;
                    *p -= lr * g / (v.sqrt() + eps);
                });
        }
        norm
    }
}

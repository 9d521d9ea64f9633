//! Dense f64 linear algebra, a reverse-mode tape over a fixed operator set,
//! parameter storage, the Adam optimizer, and a finite-difference gradient
//! checker. Everything downstream of raw graph data runs on these types.

mod checkpoint;
mod gradcheck;
mod matrix;
mod optim;
mod rng;
mod tape;

pub use checkpoint::{dump_params, load_params, restore_params, save_params, ParamDump};
pub use gradcheck::grad_check;
pub use matrix::{cosine, dot, leaky_relu_scalar, sigmoid_scalar, Matrix, LEAKY_SLOPE};
pub use optim::Adam;
pub use rng::SplitRng;
pub use tape::{edge_score, softmax_cross_entropy, SparseMap, Tape, TapeId};

use crate::{CaclError, Result};

/// One trainable matrix. Gradients accumulate across backward passes until
/// [`ParamStore::zero_grads`] clears them.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

/// Opaque handle into a [`ParamStore`]. Two model parts holding the same id
/// share one parameter: both contribute gradients and see every update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Registry of all trainable parameters of a model. Registration order is
/// part of the model definition and must be deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Matrix) -> ParamId {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn ids(&self) -> Vec<ParamId> {
        (0..self.params.len()).map(ParamId).collect()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Copies parameter values from another store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(CaclError::Shape(format!(
                "param store size mismatch: {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(CaclError::Shape(format!(
                    "param mismatch: {} vs {}",
                    dst.name, src.name
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}

//! Adam optimizer over a subset of a parameter store.

use super::{Matrix, ParamId, ParamStore};
use crate::Result;

pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    ids: Vec<ParamId>,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    /// Manages exactly the given parameters; others in the store are never
    /// touched by `step`.
    pub fn new(store: &ParamStore, ids: Vec<ParamId>, lr: f64) -> Self {
        let m = ids
            .iter()
            .map(|&id| Matrix::zeros(store.value(id).rows(), store.value(id).cols()))
            .collect();
        let v = ids
            .iter()
            .map(|&id| Matrix::zeros(store.value(id).rows(), store.value(id).cols()))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            ids,
            m,
            v,
        }
    }

    /// One update from the gradients currently in the store. Does not zero
    /// them; callers own the zero-grad/accumulate cycle.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (slot, &id) in self.ids.iter().enumerate() {
            let g = store.grad(id).clone();
            let m = &mut self.m[slot];
            for (mv, gv) in m.data_mut().iter_mut().zip(g.data()) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
            }
            let v = &mut self.v[slot];
            for (vv, gv) in v.data_mut().iter_mut().zip(g.data()) {
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
            }
            let value = store.value_mut(id);
            for ((pv, mv), vv) in value.data_mut().iter_mut().zip(self.m[slot].data()).zip(self.v[slot].data()) {
                let mhat = mv / bc1;
                let vhat = vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges() {
        // Minimize (x - 3)^2 from x = 0.
        let mut store = ParamStore::new();
        let id = store.register("x", Matrix::zeros(1, 1));
        let mut opt = Adam::new(&store, vec![id], 0.1);
        for _ in 0..500 {
            store.zero_grads();
            let x = store.value(id).get(0, 0);
            store.grad_mut(id).set(0, 0, 2.0 * (x - 3.0));
            opt.step(&mut store).unwrap();
        }
        assert!((store.value(id).get(0, 0) - 3.0).abs() < 1e-3);
    }

    #[test]
    fn untracked_params_stay_fixed() {
        let mut store = ParamStore::new();
        let a = store.register("a", Matrix::zeros(1, 1));
        let b = store.register("b", Matrix::zeros(1, 1));
        let mut opt = Adam::new(&store, vec![a], 0.1);
        store.grad_mut(a).set(0, 0, 1.0);
        store.grad_mut(b).set(0, 0, 1.0);
        opt.step(&mut store).unwrap();
        assert_ne!(store.value(a).get(0, 0), 0.0);
        assert_eq!(store.value(b).get(0, 0), 0.0);
    }
}

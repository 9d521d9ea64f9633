//! Central-difference gradient checking.

use super::ParamStore;

/// Floor of the relative-error denominator; components whose analytic and
/// numeric gradients are both below it are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-3;

/// Compares analytic gradients against central finite differences.
///
/// `f` evaluates the scalar objective on a parameter store; it must be
/// deterministic (re-seed any randomness inside). `analytic` returns a store
/// whose `grad` fields hold the gradients to verify. The result is the
/// maximum guarded relative error over every parameter component:
/// `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn grad_check(
    store: &ParamStore,
    f: impl Fn(&ParamStore) -> f64,
    analytic: impl Fn(&ParamStore) -> ParamStore,
    eps: f64,
) -> f64 {
    let grads = analytic(store);
    let mut worst: f64 = 0.0;
    for id in store.ids() {
        let (rows, cols) = store.value(id).shape();
        for i in 0..rows {
            for j in 0..cols {
                let orig = store.value(id).get(i, j);
                let mut probe = store.clone();
                probe.value_mut(id).set(i, j, orig + eps);
                let fp = f(&probe);
                probe.value_mut(id).set(i, j, orig - eps);
                let fm = f(&probe);
                let numeric = (fp - fm) / (2.0 * eps);
                let a = grads.grad(id).get(i, j);
                let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Matrix, SplitRng};

    #[test]
    fn sum_of_squares_passes() {
        let mut rng = SplitRng::new(3);
        let mut store = ParamStore::new();
        store.register("p", Matrix::glorot(4, 5, &mut rng));
        let err = grad_check(
            &store,
            |s| s.value(s.find("p").unwrap()).data().iter().map(|x| x * x).sum(),
            |s| {
                let mut g = s.clone();
                g.zero_grads();
                let id = g.find("p").unwrap();
                let doubled = g.value(id).scale(2.0);
                *g.grad_mut(id) = doubled;
                g
            },
            1e-5,
        );
        assert!(err < 1e-8, "max rel err {err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut store = ParamStore::new();
        store.register("p", Matrix::from_rows(&[vec![1.5]]).unwrap());
        let err = grad_check(
            &store,
            |s| {
                let v = s.value(s.find("p").unwrap()).get(0, 0);
                v * v
            },
            |s| {
                let mut g = s.clone();
                g.zero_grads();
                let id = g.find("p").unwrap();
                g.grad_mut(id).set(0, 0, 1.0); // deliberately not 2x
                g
            },
            1e-5,
        );
        assert!(err > 0.1, "expected detection, got {err}");
    }
}

use alloc::sync::Arc;

use super::backend::Record;
use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{contract, Result};

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Central-difference check of `f` at `x`.
///
/// Returns `max_i |analytic_i - numeric_i| / max(1, |numeric_i|)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, Var<'g>) -> Result<Var<'g>>,
{
    if eps <= 0.0 {
        return Err(contract("finite_diff_check needs eps > 0"));
    }
    let g = Graph::new();
    let xv = g.leaf(x.clone().with_requires_grad(true));
    let y = f(&g, xv)?;
    g.backward(y)?;
    let analytic = g
        .grad(xv)
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |t: Tensor| -> Result<f64> {
        let g = Graph::new();
        let v = g.constant(t);
        f(&g, v)?.item()
    };
    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// The same check over every trainable scalar of a parameter store.
///
/// `f` builds the scalar objective with a [`Record`] backend bound to the
/// store it is given.
pub fn finite_diff_check_params<F>(f: F, store: &ParamStore, eps: f64) -> Result<f64>
where
    F: for<'g> Fn(&Record<'g>) -> Result<Var<'g>>,
{
    if eps <= 0.0 {
        return Err(contract("finite_diff_check_params needs eps > 0"));
    }
    let g = Graph::new();
    let rec = Record::new(&g, store);
    let y = f(&rec)?;
    g.backward(y)?;
    let grads = rec.param_grads();
    drop(rec);

    let value_at = |s: &ParamStore| -> Result<f64> {
        let g = Graph::new();
        let rec = Record::new(&g, s);
        f(&rec)?.item()
    };
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        if !store.get(id).requires_grad() {
            continue;
        }
        let analytic = grads.iter().find(|(gid, _)| *gid == id).map(|(_, g)| g);
        let base: Arc<Tensor> = store.shared(id);
        for i in 0..base.numel() {
            let orig = base.data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let fp = value_at(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let fm = value_at(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.map_or(0.0, |g| g[i]);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn linear_function_is_exact() {
        let w = random(&[3, 1], 1);
        let err = finite_diff_check(
            |g, x| {
                let w = g.constant(w.clone());
                Ok(x.matmul(&w)?.sum())
            },
            &random(&[2, 3], 2),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn constant_function_has_zero_grad() {
        let err = finite_diff_check(
            |g, _x| Ok(g.constant(Tensor::scalar(3.0)).sum()),
            &random(&[4], 3),
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn log_softmax_cross_entropy() {
        let targets = [1usize, 0, 3];
        let err = finite_diff_check(
            |g, x| {
                let lp = x.log_softmax()?;
                let onehot = Tensor::from_fn(&[3, 4], |i| {
                    if targets[i / 4] == i % 4 { -1.0 } else { 0.0 }
                });
                Ok(lp.mul(&g.constant(onehot))?.sum())
            },
            &random(&[3, 4], 4),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn every_differentiable_op() {
        // Chains every op through one scalar so a single check covers them.
        let err = finite_diff_check(
            |g, x| {
                let gain = g.constant(random(&[4], 10));
                let bias = g.constant(random(&[4], 11));
                let other = g.constant(random(&[3, 4], 12));
                let ln = x.layer_norm(&gain, &bias)?;
                let a = ln.matmul_nt(&other)?.softmax()?; // 3×3
                let b = a.matmul(&x)?.tanh(); // 3×4
                let c = b.silu().mul(&x.sigmoid())?.sub(&x.scale(0.3))?;
                let d = c.add_bias(&bias)?;
                let e = Var::concat_cols(&[d.cols(0, 2)?, x.cols(1, 3)?])?;
                let f = Var::concat_rows(&[e.clone(), e.gather_rows(&[2, 0, 2])?])?;
                let h = f.cols(0, 4)?.outer_add(&x.gather_rows(&[1, 2])?)?;
                let s = h.reshape(&[12, 4])?.log_softmax()?;
                let scalar = g.constant(Tensor::scalar(0.5));
                Ok(s.mul(&scalar)?.sum())
            },
            &random(&[3, 4], 5),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn rejects_nonpositive_eps() {
        assert!(finite_diff_check(|_, x| Ok(x.sum()), &Tensor::zeros(&[1]), 0.0).is_err());
    }
}

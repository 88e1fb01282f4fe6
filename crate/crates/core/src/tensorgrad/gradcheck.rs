use crate::error::{Error, Result};

use super::{ParamStore, Tape, Var};

/// Worst disagreement between tape gradients and central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Denominator floor of [`relative_error`]. Central differences of an
/// O(1) loss carry rounding noise near 1e-10, so smaller gradients are
/// compared on an absolute scale.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// |a − n| / max(GRADIENT_FLOOR, |a| + |n|)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(GRADIENT_FLOOR)
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences `(f(θ+eps) − f(θ−eps)) / 2eps` on every parameter coordinate.
///
/// `store` gradients are overwritten; values are restored after probing.
pub fn gradient_check<F>(store: &mut ParamStore, eps: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    {
        let mut tape = Tape::new();
        let out = f(&mut tape, store)?;
        tape.backward(out, store)?;
    }
    let analytic: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(&mut tape, store)?;
        let v = tape.value(out);
        if v.len() != 1 {
            return Err(Error::shape("gradient_check", "function must be scalar"));
        }
        Ok(v.data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for j in 0..store.value(id).len() {
            let orig = store.value(id).data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi][j];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), j));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorgrad::Tensor;

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![3.0]).unwrap()).unwrap();
        let report = gradient_check(&mut store, 1e-5, |tape, store| {
            let t = tape.param(store, id);
            let sq = tape.mul(t, t)?;
            Ok(tape.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert!((store.get(id).grad.data()[0] - 6.0).abs() < 1e-12);
        assert_eq!(store.value(id).data(), &[3.0]);
    }

    #[test]
    fn constant_function() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![0.3, -0.2]).unwrap()).unwrap();
        let report = gradient_check(&mut store, 1e-5, |tape, store| {
            let _ = tape.param(store, id);
            let c = tape.leaf(Tensor::vector(vec![2.0]).unwrap());
            Ok(tape.sum(c))
        })
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert!(store.get(id).grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn softmax_matmul_chain() {
        let mut store = ParamStore::new();
        let w = store
            .add(
                "w",
                Tensor::matrix(2, 3, vec![0.1, -0.4, 0.3, 0.8, 0.2, -0.5]).unwrap(),
            )
            .unwrap();
        let x = store.add("x", Tensor::vector(vec![0.7, -0.9]).unwrap()).unwrap();
        let report = gradient_check(&mut store, 1e-5, |tape, store| {
            let xv = tape.param(store, x);
            let wv = tape.param(store, w);
            let logits = tape.matmul(xv, wv)?;
            let p = tape.softmax(logits)?;
            tape.cross_entropy(p, 1)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

//! Central finite-difference gradient oracle.

use super::param::ParamStore;
use crate::error::{Error, Result};

/// Largest model the oracle will perturb, in scalar weights.
pub const MAX_CHECKED_SCALARS: usize = 10_000;

/// Gradients smaller than this are compared absolutely rather than
/// relatively, since central differences carry ~1e-10 of rounding noise.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst scalar.
    pub worst: Option<String>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares backprop gradients against central differences for every
/// scalar parameter in `store`.
///
/// `eval(store, with_grad)` must return the loss and, when `with_grad` is
/// true, accumulate its gradient into the store.
pub fn grad_check<F>(store: &mut ParamStore, mut eval: F, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    let count = store.scalar_count();
    if count > MAX_CHECKED_SCALARS {
        return Err(Error::TooManyParameters {
            count,
            limit: MAX_CHECKED_SCALARS,
        });
    }
    store.zero_grad();
    let loss = eval(store, true)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(loss));
    }
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.data().to_vec()).collect();
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
    let ids: Vec<_> = names.iter().map(|n| store.id(n).expect("registered")).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (pi, id) in ids.into_iter().enumerate() {
        for i in 0..store.get(id).value.len() {
            let original = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = original + eps;
            let plus = eval(store, false)?;
            store.get_mut(id).value.data_mut()[i] = original - eps;
            let minus = eval(store, false)?;
            store.get_mut(id).value.data_mut()[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteLoss(if plus.is_finite() { minus } else { plus }));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic[pi][i], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some(format!("{}[{i}]", names[pi]));
            }
        }
    }
    store.zero_grad();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::linear::Linear;
    use crate::rng::derive_rng;
    use crate::tensor::Tensor;

    #[test]
    fn quadratic_loss_on_linear() {
        let mut rng = derive_rng(1, "gc.quadratic");
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "w", 3, 2, true, &mut rng).unwrap();
        let x = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        let report = grad_check(
            &mut store,
            |s, with_grad| {
                let y = lin.forward(s, &x)?;
                let loss = 0.5 * y.dot(&y);
                if with_grad {
                    lin.backward(s, &x, &y)?;
                }
                Ok(loss)
            },
            1e-6,
        )
        .unwrap();
        assert_eq!(report.checked, 8);
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn zero_parameter_model() {
        let mut store = ParamStore::new();
        let report = grad_check(&mut store, |_, _| Ok(1.0), 1e-6).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert_eq!(report.checked, 0);
    }

    #[test]
    fn guards() {
        let mut store = ParamStore::new();
        store.register("big", Tensor::zeros(&[10_001])).unwrap();
        assert!(matches!(
            grad_check(&mut store, |_, _| Ok(0.0), 1e-6),
            Err(Error::TooManyParameters { .. })
        ));
        let mut store = ParamStore::new();
        store.register("w", Tensor::zeros(&[1])).unwrap();
        assert!(matches!(
            grad_check(&mut store, |_, _| Ok(f64::NAN), 1e-6),
            Err(Error::NonFiniteLoss(_))
        ));
    }
}

//! Central finite-difference oracle for verifying analytic gradients. Every
//! backward pass in this crate is tested against this routine.

use std::collections::BTreeMap;

use super::params::ParameterStore;

/// Numerically differentiates `f` with respect to every element of the named
/// parameters using central differences, leaving the store bitwise unchanged.
///
/// `f` must be a pure, deterministic function of the store contents.
pub fn finite_diff_gradient<F>(
    store: &mut ParameterStore,
    names: &[String],
    eps: f64,
    mut f: F,
) -> BTreeMap<String, Vec<f64>>
where
    F: FnMut(&ParameterStore) -> f64,
{
    let mut result = BTreeMap::new();
    for name in names {
        let len = store.get(name).len();
        let mut grads = vec![0.0; len];
        for i in 0..len {
            let original = store.get(name).values()[i];
            store.value_mut(name).values_mut()[i] = original + eps;
            let plus = f(store);
            store.value_mut(name).values_mut()[i] = original - eps;
            let minus = f(store);
            store.value_mut(name).values_mut()[i] = original;
            grads[i] = (plus - minus) / (2.0 * eps);
        }
        result.insert(name.clone(), grads);
    }
    result
}

/// Worst per-element relative gap between two gradient vectors, with a small
/// absolute floor so near-zero entries compare absolutely.
pub fn max_relative_gap(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

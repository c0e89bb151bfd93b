//! Central finite differences for checking tape gradients.

use super::{ParamId, ParamStore};

/// `|a - n| / max(|a|, |n|, 1e-6)`. The floor keeps entries whose true
/// gradient is zero from dividing rounding noise by rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// `(f(w + h e_i) - f(w - h e_i)) / 2h` for each flat index `i` of parameter `id`.
/// The parameter is restored exactly afterwards.
pub fn finite_difference<F>(
    store: &mut ParamStore,
    id: ParamId,
    indices: &[usize],
    h: f64,
    mut f: F,
) -> Vec<f64>
where
    F: FnMut(&ParamStore) -> f64,
{
    indices
        .iter()
        .map(|&i| {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + h;
            let plus = f(store);
            store.get_mut(id).value.data_mut()[i] = orig - h;
            let minus = f(store);
            store.get_mut(id).value.data_mut()[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Outcome of comparing one parameter's analytic gradient with finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Compares `store`'s current gradient for `id` (filled by a prior backward
/// pass) against finite differences of `f` at `indices`.
pub fn check_param<F>(
    store: &mut ParamStore,
    id: ParamId,
    indices: &[usize],
    h: f64,
    f: F,
) -> GradCheck
where
    F: FnMut(&ParamStore) -> f64,
{
    let analytic: Vec<f64> = indices
        .iter()
        .map(|&i| store.get(id).grad.data()[i])
        .collect();
    let numeric = finite_difference(store, id, indices, h, f);
    let mut worst = (0.0, 0);
    for ((&i, a), n) in indices.iter().zip(&analytic).zip(&numeric) {
        let e = relative_error(*a, *n);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    GradCheck {
        name: store.get(id).name.clone(),
        checked: indices.len(),
        max_rel_error: worst.0,
        worst_index: worst.1,
    }
}

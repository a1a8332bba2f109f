use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::Result;
use crate::math;

/// Outcome of [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Compares reverse-mode gradients against central differences.
///
/// `loss_fn` builds the loss on a fresh graph. Coordinates are drawn without
/// replacement across all parameters (all of them when there are fewer than
/// `min_coords`). Relative error is `|a - n| / max(1, |a|, |n|)`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    eps: f64,
    min_coords: usize,
    seed: u64,
    loss_fn: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = loss_fn(&mut g)?;
        g.backward(loss)?
    };
    let mut coords = Vec::new();
    for id in store.ids() {
        for j in 0..store.value(id).len() {
            coords.push((id, j));
        }
    }
    let picked: Vec<usize> = if coords.len() <= min_coords {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, coords.len(), min_coords).into_vec();
        v.sort_unstable();
        v
    };

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let loss = loss_fn(&mut g)?;
        Ok(g.value(loss).item())
    };

    let mut max_rel: f64 = 0.0;
    for &c in &picked {
        let (id, j) = coords[c];
        let orig = store.value(id).data()[j];
        store.value_mut(id).data_mut()[j] = orig + eps;
        let up = eval(store)?;
        store.value_mut(id).data_mut()[j] = orig - eps;
        let down = eval(store)?;
        store.value_mut(id).data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.get(id).map_or(0.0, |t| t.data()[j]);
        let rel = math::abs(a - numeric) / 1f64.max(math::abs(a)).max(math::abs(numeric));
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        coords_checked: picked.len(),
    })
}

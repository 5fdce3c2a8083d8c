//! Central finite-difference checks of recorded gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::param::{ParamId, ParamStore};

/// One probed parameter entry.
#[derive(Debug, Clone)]
pub struct GradProbe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub probes: Vec<GradProbe>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }
}

/// Relative error with a small absolute floor so that two near-zero
/// gradients compare equal.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares analytic gradients against `(L(p+h) - L(p-h)) / 2h` on `count`
/// parameter entries drawn uniformly from all scalars in `store`.
///
/// `loss_and_grad` must zero and then fill `store` grads when its flag is
/// `true`, and only evaluate the loss otherwise.
pub fn check_gradients<R, F>(
    store: &mut ParamStore,
    count: usize,
    step: f64,
    rng: &mut R,
    mut loss_and_grad: F,
) -> GradCheckReport
where
    R: Rng + ?Sized,
    F: FnMut(&mut ParamStore, bool) -> f64,
{
    store.zero_grad();
    loss_and_grad(store, true);
    let analytic: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let mut offsets = Vec::with_capacity(store.len());
    let mut total = 0;
    for (_, p) in store.iter() {
        offsets.push(total);
        total += p.value.len();
    }
    let picks = sample(rng, total, count.min(total));
    let mut probes = Vec::with_capacity(picks.len());
    for flat in picks.iter() {
        let pi = offsets.partition_point(|&o| o <= flat) - 1;
        let idx = flat - offsets[pi];
        let id = ParamId(pi);
        let orig = store.get(id).value.data()[idx];
        store.get_mut(id).value.data_mut()[idx] = orig + step;
        let up = loss_and_grad(store, false);
        store.get_mut(id).value.data_mut()[idx] = orig - step;
        let down = loss_and_grad(store, false);
        store.get_mut(id).value.data_mut()[idx] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[pi][idx];
        probes.push(GradProbe {
            param: store.get(id).name.clone(),
            index: idx,
            analytic: a,
            numeric,
            rel_error: rel_error(a, numeric),
        });
    }
    store.zero_grad();
    GradCheckReport { probes }
}

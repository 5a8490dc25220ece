use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::substrate::{Gradients, ParamStore};
use crate::Error;

/// Settings for a central-difference gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Coordinates sampled from each parameter tensor (all if smaller).
    pub coords_per_param: usize,
    /// Denominator floor for the relative error, scaled by `max(1, |f|)`.
    /// Central-difference round-off grows with `|f| / eps`, so gradients
    /// below the floor are compared absolutely.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            coords_per_param: 4,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// (parameter name, flat index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient returned by `f` against central finite
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε` on a random sample of coordinates
/// of every parameter. The store is restored before returning.
pub fn grad_check<F>(store: &mut ParamStore<f64>, mut f: F, cfg: GradCheckConfig) -> Result<GradCheckReport, Error>
where
    F: FnMut(&ParamStore<f64>) -> Result<(f64, Gradients<f64>), Error>,
{
    let (base, analytic) = f(store)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("grad_check objective".into()));
    }
    let floor = cfg.abs_floor * base.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.value.len())).collect();
    for (id, len) in ids {
        let coords: Vec<usize> = if len <= cfg.coords_per_param {
            (0..len).collect()
        } else {
            sample(&mut rng, len, cfg.coords_per_param).into_vec()
        };
        for i in coords {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + cfg.eps;
            let plus = f(store)?.0;
            store.value_mut(id).data_mut()[i] = orig - cfg.eps;
            let minus = f(store)?.0;
            store.value_mut(id).data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("grad_check objective".into()));
            }
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = analytic.coord(id, i);
            let rel = relative_error(a, numeric, floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((store.get(id).name().to_string(), i, a, numeric));
                }
            }
        }
    }
    Ok(report)
}

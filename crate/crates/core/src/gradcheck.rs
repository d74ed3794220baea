//! Central finite-difference checks of analytic parameter gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::networks::ParamSet;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub coords: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps coordinates whose true
/// gradient is zero from dividing noise by noise.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

impl GradCheck {
    pub fn relative_errors(&self, floor: f64) -> Vec<f64> {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(&a, &n)| relative_error(a, n, floor))
            .collect()
    }

    /// Fraction of coordinates with relative error at most `tol`.
    pub fn pass_fraction(&self, tol: f64, floor: f64) -> f64 {
        let errs = self.relative_errors(floor);
        errs.iter().filter(|&&e| e <= tol).count() as f64 / errs.len() as f64
    }
}

/// Compares `analytic` against `(L(p + h e_i) - L(p - h e_i)) / 2h` at
/// `n_coords` distinct coordinates drawn with `seed`.
pub fn check_gradient(
    params: &ParamSet<f64>,
    analytic: &ParamSet<f64>,
    loss: impl Fn(&ParamSet<f64>) -> Result<f64>,
    n_coords: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheck> {
    let total = params.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = sample(&mut rng, total, n_coords.min(total)).into_vec();
    let mut probe = params.clone();
    let mut numeric = Vec::with_capacity(coords.len());
    for &i in &coords {
        let v = params.get_flat(i);
        probe.set_flat(i, v + h);
        let up = loss(&probe)?;
        probe.set_flat(i, v - h);
        let down = loss(&probe)?;
        probe.set_flat(i, v);
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(GradCheck {
        analytic: coords.iter().map(|&i| analytic.get_flat(i)).collect(),
        numeric,
        coords,
    })
}

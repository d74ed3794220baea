//! Perturbation application, probabilistic injection, stealth regularizers
//! and the corner trigger patch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_pipeline::{laplacian_plane, laplacian_plane_adjoint, ImageTensor};
use crate::tensor::{Scalar, Tensor};

/// A `3 x H x W` field bounded by `eps` in the max norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation<T: Scalar = f32> {
    values: Tensor<T>,
    eps: T,
}

impl<T: Scalar> Perturbation<T> {
    pub fn new(values: Tensor<T>, eps: T) -> Result<Self> {
        if !(eps >= T::zero()) {
            return Err(Error::config("eps", "must be >= 0"));
        }
        if values.shape().len() != 3 {
            return Err(Error::InvalidTensor("perturbation must be CxHxW".into()));
        }
        if !values.is_finite() {
            return Err(Error::InvalidTensor("perturbation is not finite".into()));
        }
        if values.max_abs() > eps {
            return Err(Error::InvalidTensor(format!(
                "perturbation max {:?} exceeds eps {:?}",
                values.max_abs(),
                eps
            )));
        }
        Ok(Self { values, eps })
    }

    pub fn zeros(shape: &[usize], eps: T) -> Self {
        Self {
            values: Tensor::zeros(shape),
            eps,
        }
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn max_abs(&self) -> T {
        self.values.max_abs()
    }
}

/// `clip(x + delta, -1, 1)`.
pub fn apply_perturbation<T: Scalar>(x: &ImageTensor<T>, d: &Perturbation<T>) -> Result<ImageTensor<T>> {
    x.tensor().expect_shape(d.values.shape())?;
    let one = T::one();
    let data = x
        .tensor()
        .data()
        .iter()
        .zip(d.values.data())
        .map(|(&a, &b)| (a + b).max(-one).min(one))
        .collect();
    ImageTensor::new(Tensor::from_vec(x.tensor().shape(), data)?)
}

/// Backward of [`apply_perturbation`] w.r.t. `delta`: gradient passes where
/// the sum was not clipped.
pub fn apply_perturbation_backward<T: Scalar>(
    x: &ImageTensor<T>,
    d: &Perturbation<T>,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let one = T::one();
    let data = x
        .tensor()
        .data()
        .iter()
        .zip(d.values.data())
        .zip(grad_out.data())
        .map(|((&a, &b), &g)| {
            let s = a + b;
            if s >= -one && s <= one {
                g
            } else {
                T::zero()
            }
        })
        .collect();
    Tensor::from_vec(grad_out.shape(), data).expect("same shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoisonDecision<T: Scalar = f32> {
    pub poisoned: bool,
    pub sample: ImageTensor<T>,
}

/// Draws `u ~ U[0, 1)`; poisons iff `u < alpha`. Exactly one draw per call.
pub fn maybe_poison<T: Scalar>(
    x0: &ImageTensor<T>,
    d: &Perturbation<T>,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<PoisonDecision<T>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config("poison_rate", format!("{alpha} is outside [0, 1]")));
    }
    let u: f64 = rng.random();
    if u < alpha {
        Ok(PoisonDecision {
            poisoned: true,
            sample: apply_perturbation(x0, d)?,
        })
    } else {
        Ok(PoisonDecision {
            poisoned: false,
            sample: x0.clone(),
        })
    }
}

/// Mean squared difference.
pub fn stealth_mse<T: Scalar>(xp: &ImageTensor<T>, x: &ImageTensor<T>) -> Result<T> {
    xp.tensor().expect_shape(x.tensor().shape())?;
    let n = T::lit(xp.tensor().len() as f64);
    Ok(xp
        .tensor()
        .data()
        .iter()
        .zip(x.tensor().data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        / n)
}

/// `d stealth_mse / d xp`.
pub fn stealth_mse_grad<T: Scalar>(xp: &ImageTensor<T>, x: &ImageTensor<T>) -> Tensor<T> {
    let scale = T::lit(2.0) / T::lit(xp.tensor().len() as f64);
    let data = xp
        .tensor()
        .data()
        .iter()
        .zip(x.tensor().data())
        .map(|(&a, &b)| scale * (a - b))
        .collect();
    Tensor::from_vec(xp.tensor().shape(), data).expect("same shape")
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Anisotropic total variation: sum of absolute horizontal and vertical
/// neighbour differences over every channel, no wraparound.
pub fn total_variation<T: Scalar>(d: &Perturbation<T>) -> T {
    tv_and_grad(d.values(), false).0
}

/// Subgradient of [`total_variation`] (sign convention: 0 at ties).
pub fn total_variation_grad<T: Scalar>(d: &Perturbation<T>) -> Tensor<T> {
    tv_and_grad(d.values(), true).1.expect("gradient requested")
}

fn tv_and_grad<T: Scalar>(v: &Tensor<T>, want_grad: bool) -> (T, Option<Tensor<T>>) {
    let (c, h, w) = v.chw();
    let data = v.data();
    let mut total = T::zero();
    let mut grad = want_grad.then(|| vec![T::zero(); data.len()]);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let i = base + y * w + x;
                if x + 1 < w {
                    let diff = data[i + 1] - data[i];
                    total += diff.abs();
                    if let Some(g) = grad.as_mut() {
                        g[i + 1] += sign(diff);
                        g[i] -= sign(diff);
                    }
                }
                if y + 1 < h {
                    let diff = data[i + w] - data[i];
                    total += diff.abs();
                    if let Some(g) = grad.as_mut() {
                        g[i + w] += sign(diff);
                        g[i] -= sign(diff);
                    }
                }
            }
        }
    }
    let grad = grad.map(|g| Tensor::from_vec(v.shape(), g).expect("same shape"));
    (total, grad)
}

/// Mean absolute 4-neighbour Laplacian (replicate padding) over all elements.
pub fn laplacian_energy<T: Scalar>(d: &Perturbation<T>) -> T {
    let (c, h, w) = d.values.chw();
    let total: T = (0..c)
        .flat_map(|ch| laplacian_plane(d.values.channel(ch), h, w))
        .map(|v| v.abs())
        .sum();
    total / T::lit(d.values.len() as f64)
}

pub fn laplacian_energy_grad<T: Scalar>(d: &Perturbation<T>) -> Tensor<T> {
    let (c, h, w) = d.values.chw();
    let n = T::lit(d.values.len() as f64);
    let mut out = Vec::with_capacity(d.values.len());
    for ch in 0..c {
        let lap = laplacian_plane(d.values.channel(ch), h, w);
        let signs: Vec<T> = lap.iter().map(|&v| sign(v) / n).collect();
        out.extend(laplacian_plane_adjoint(&signs, h, w));
    }
    Tensor::from_vec(d.values.shape(), out).expect("same shape")
}

/// Square patch anchored at the bottom-right corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub patch_side: usize,
    pub value: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            patch_side: 8,
            value: 1.0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self, side: usize) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.value) {
            return Err(Error::config("trigger.value", "must lie in [-1, 1]"));
        }
        if self.patch_side > side {
            return Err(Error::config(
                "trigger.patch_side",
                format!("{} exceeds image side {side}", self.patch_side),
            ));
        }
        Ok(())
    }

    /// Half-open row/column range covered by the patch.
    pub fn range(&self, side: usize) -> std::ops::Range<usize> {
        side - self.patch_side..side
    }
}

pub fn inject_trigger<T: Scalar>(x: &ImageTensor<T>, t: &TriggerConfig) -> Result<ImageTensor<T>> {
    let (_, h, w) = x.tensor().chw();
    t.validate(h.min(w))?;
    let mut out = x.tensor().clone();
    let v = T::lit(t.value);
    for c in 0..3 {
        for y in h - t.patch_side..h {
            for xx in w - t.patch_side..w {
                out.data_mut()[(c * h + y) * w + xx] = v;
            }
        }
    }
    ImageTensor::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn img(side: usize, v: f64) -> ImageTensor<f64> {
        ImageTensor::filled(side, v).unwrap()
    }

    fn pert(values: Vec<f64>, shape: &[usize], eps: f64) -> Perturbation<f64> {
        Perturbation::new(Tensor::from_vec(shape, values).unwrap(), eps).unwrap()
    }

    #[test]
    fn apply_clips_both_ends() {
        let d = Perturbation::new(Tensor::filled(&[3, 2, 2], 0.08), 0.08).unwrap();
        let out = apply_perturbation(&img(2, 0.99), &d).unwrap();
        assert!(out.tensor().data().iter().all(|&v| v == 1.0));
        let d = Perturbation::new(Tensor::filled(&[3, 2, 2], -0.08), 0.08).unwrap();
        let out = apply_perturbation(&img(2, -1.0), &d).unwrap();
        assert!(out.tensor().data().iter().all(|&v| v == -1.0));
        let zero = Perturbation::zeros(&[3, 2, 2], 0.08);
        assert_eq!(apply_perturbation(&img(2, 0.3), &zero).unwrap(), img(2, 0.3));
    }

    #[test]
    fn apply_rejects_shape_mismatch() {
        let d = Perturbation::<f64>::zeros(&[3, 3, 3], 0.1);
        assert!(apply_perturbation(&img(2, 0.0), &d).is_err());
    }

    #[test]
    fn perturbation_bound_enforced() {
        assert!(Perturbation::new(Tensor::<f64>::filled(&[3, 1, 1], 0.2), 0.1).is_err());
    }

    #[test]
    fn injection_extremes_and_validation() {
        let x = img(2, 0.0);
        let d = Perturbation::new(Tensor::filled(&[3, 2, 2], 0.05), 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            assert!(!maybe_poison(&x, &d, 0.0, &mut rng).unwrap().poisoned);
            let yes = maybe_poison(&x, &d, 1.0, &mut rng).unwrap();
            assert!(yes.poisoned);
            assert_eq!(yes.sample, apply_perturbation(&x, &d).unwrap());
        }
        assert!(maybe_poison(&x, &d, 1.5, &mut rng).is_err());
        assert!(maybe_poison(&x, &d, -0.1, &mut rng).is_err());
    }

    #[test]
    fn injection_reproducible() {
        let x = img(2, 0.0);
        let d = Perturbation::zeros(&[3, 2, 2], 0.0);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..100)
                .map(|_| maybe_poison(&x, &d, 0.3, &mut rng).unwrap().poisoned)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mse_cases() {
        let x = img(3, 0.2);
        assert_eq!(stealth_mse(&x, &x).unwrap(), 0.0);
        let shifted = img(3, 0.25);
        assert!((stealth_mse(&shifted, &x).unwrap() - 0.0025).abs() < 1e-12);
    }

    #[test]
    fn tv_two_by_two_fixture() {
        let d = pert(vec![0.0, 1.0, 0.0, 1.0], &[1, 2, 2], 1.0);
        assert_eq!(total_variation(&d), 2.0);
        let c = pert(vec![0.3; 12], &[3, 2, 2], 1.0);
        assert_eq!(total_variation(&c), 0.0);
    }

    #[test]
    fn laplacian_impulse_fixture() {
        let mut v = vec![0.0; 25];
        v[12] = 1.0;
        let d = pert(v, &[1, 5, 5], 1.0);
        // |-4| at the centre plus four neighbours of 1, over 25 elements
        assert!((laplacian_energy(&d) - 8.0 / 25.0).abs() < 1e-12);
        assert_eq!(laplacian_energy(&pert(vec![0.5; 25], &[1, 5, 5], 1.0)), 0.0);
    }

    #[test]
    fn trigger_patch() {
        let x = img(16, -0.5);
        let t = TriggerConfig {
            patch_side: 4,
            value: 1.0,
        };
        let y = inject_trigger(&x, &t).unwrap();
        for c in 0..3 {
            for r in 0..16 {
                for col in 0..16 {
                    let v = y.tensor().data()[(c * 16 + r) * 16 + col];
                    let inside = r >= 12 && col >= 12;
                    assert_eq!(v, if inside { 1.0 } else { -0.5 });
                }
            }
        }
        assert_eq!(inject_trigger(&y, &t).unwrap(), y);
        let empty = TriggerConfig {
            patch_side: 0,
            value: 1.0,
        };
        assert_eq!(inject_trigger(&x, &empty).unwrap(), x);
        let big = TriggerConfig {
            patch_side: 17,
            value: 1.0,
        };
        assert!(inject_trigger(&x, &big).is_err());
        assert_eq!(TriggerConfig::default().range(128), 120..128);
    }
}

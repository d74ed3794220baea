//! Spectral-signature detection, the trigger-patch intensity lift and a
//! frequency-domain stealth report.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_pipeline::ImageTensor;
use crate::networks::{discriminator_forward, generator_forward, FeatureVector, LatentVector, ParamSet};
use crate::poisoning::{inject_trigger, TriggerConfig};
use crate::tensor::Scalar;

pub const DEFAULT_PERCENTILE: f64 = 90.0;
pub const DEFAULT_BANDS: usize = 8;
const PROXY_STREAM: u64 = 4;

/// Discriminator features, one row per sample, with ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: DMatrix<f64>,
    labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("feature matrix needs at least 2 rows".into()));
        }
        if labels.len() != rows.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![rows.len()],
                got: vec![labels.len()],
            });
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("feature rows must share a positive width".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature matrix is not finite".into()));
        }
        let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Ok(Self { rows: m, labels })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// Discriminator GAP features of each sample.
pub fn collect_features<T: Scalar>(
    d: &ParamSet<T>,
    samples: &[(ImageTensor<T>, bool)],
) -> Result<FeatureMatrix> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let mut rows = Vec::with_capacity(samples.len());
    for (x, _) in samples {
        let out = discriminator_forward(d, x)?;
        rows.push(out.features.iter().map(|v| v.as_f64()).collect());
    }
    FeatureMatrix::new(rows, samples.iter().map(|s| s.1).collect())
}

/// `|<F_c[i], v1>|` where `v1` is the top right-singular vector of the
/// column-centred matrix. A matrix without variance scores all zeros.
pub fn spectral_scores(fm: &FeatureMatrix) -> Vec<f64> {
    let f = &fm.rows;
    let n = f.nrows();
    let mean = f.row_sum() / n as f64;
    let mut fc = f.clone();
    for mut row in fc.row_iter_mut() {
        row -= &mean;
    }
    let scale = f.amax().max(1.0);
    if fc.amax() <= 1e-12 * scale {
        return vec![0.0; n];
    }
    let svd = fc.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let top = svd.singular_values.imax();
    if svd.singular_values[top] <= 1e-12 * scale * (n as f64).sqrt() {
        return vec![0.0; n];
    }
    let v1 = v_t.row(top).transpose();
    (&fc * v1).iter().map(|s| s.abs()).collect()
}

/// Linear-interpolation percentile between order statistics.
pub fn percentile(values: &[f64], pct: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("percentile of an empty set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Flags scores strictly above the `pct` percentile; `pct` lies in (0, 100).
pub fn flag_outliers(scores: &[f64], pct: f64) -> Result<(Vec<bool>, f64)> {
    if !(pct > 0.0 && pct < 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {pct} outside (0, 100)")));
    }
    let threshold = percentile(scores, pct)?;
    Ok((scores.iter().map(|&s| s > threshold).collect(), threshold))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn detection_metrics(flags: &[bool], truth: &[bool]) -> Result<DetectionMetrics> {
    if flags.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![truth.len()],
            got: vec![flags.len()],
        });
    }
    let count = |f: bool, t: bool| flags.iter().zip(truth).filter(|&(&a, &b)| a == f && b == t).count();
    let (tp, fp, fn_) = (count(true, true), count(true, false), count(false, true));
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let precision = ratio(tp, fp);
    let recall = ratio(tp, fn_);
    Ok(DetectionMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub flagged: Vec<bool>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn spectral_report(fm: &FeatureMatrix, pct: f64) -> Result<SpectralReport> {
    let scores = spectral_scores(fm);
    let (flagged, threshold) = flag_outliers(&scores, pct)?;
    let m = detection_metrics(&flagged, fm.labels())?;
    Ok(SpectralReport {
        scores,
        threshold,
        flagged,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackdoorProxyReport {
    pub delta_i: f64,
    pub per_sample: Vec<f64>,
    pub n_samples: usize,
    pub trigger: TriggerConfig,
}

/// The `(z, f)` pairs used by [`backdoor_proxy`] for a given seed.
pub fn proxy_draws(n_samples: usize, seed: u64) -> Vec<(LatentVector, FeatureVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PROXY_STREAM);
    (0..n_samples)
        .map(|_| {
            let z = LatentVector::sample(&mut rng);
            (z, FeatureVector::sample(&mut rng))
        })
        .collect()
}

/// Mean over the trigger patch (all channels) of `gen(x_trig) - gen(x)`,
/// for each of the given draws.
pub fn backdoor_proxy_with<T: Scalar>(
    generate: impl Fn(&ImageTensor<T>, &LatentVector, &FeatureVector) -> Result<ImageTensor<T>>,
    x: &ImageTensor<T>,
    trigger: &TriggerConfig,
    draws: &[(LatentVector, FeatureVector)],
) -> Result<BackdoorProxyReport> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    if x.height() != x.width() {
        return Err(Error::InvalidArgument("trigger images must be square".into()));
    }
    let side = x.height();
    let x_trig = inject_trigger(x, trigger)?;
    let range = trigger.range(side);
    let patch = 3 * range.len() * range.len();
    let mut per_sample = Vec::with_capacity(draws.len());
    for (z, f) in draws {
        let a = generate(&x_trig, z, f)?;
        let b = generate(x, z, f)?;
        let (ta, tb) = (a.tensor(), b.tensor());
        let mut sum = 0.0;
        for c in 0..3 {
            let (pa, pb) = (ta.channel(c), tb.channel(c));
            for y in range.clone() {
                for xx in range.clone() {
                    let i = y * side + xx;
                    sum += (pa[i] - pb[i]).as_f64();
                }
            }
        }
        per_sample.push(sum / patch as f64);
    }
    Ok(BackdoorProxyReport {
        delta_i: per_sample.iter().sum::<f64>() / per_sample.len() as f64,
        per_sample,
        n_samples: draws.len(),
        trigger: *trigger,
    })
}

/// Intensity lift of the generator inside the trigger patch, averaged over
/// `n_samples` seeded `(z, f)` draws shared by the clean and triggered calls.
pub fn backdoor_proxy<T: Scalar>(
    g: &ParamSet<T>,
    x: &ImageTensor<T>,
    trigger: &TriggerConfig,
    n_samples: usize,
    seed: u64,
) -> Result<BackdoorProxyReport> {
    backdoor_proxy_with(
        |x, z, f| generator_forward(g, x, z, f),
        x,
        trigger,
        &proxy_draws(n_samples, seed),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    /// Mean `| |X'| - |X| |` per radial band, innermost first, averaged over
    /// channels.
    pub radial_bands: Vec<f64>,
    /// `sum |X' - X|^2 / (H * W)` over channels: equals the spatial energy
    /// of `x' - x`.
    pub total_spectral_energy_diff: f64,
}

fn fft2(plane: &[f64], h: usize, w: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let row = planner.plan_fft_forward(w);
    row.process(&mut buf);
    let col = planner.plan_fft_forward(h);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
    buf
}

/// Radial band of DFT bin `(ky, kx)` after centring the spectrum.
pub fn radial_band(ky: usize, kx: usize, h: usize, w: usize, bands: usize) -> usize {
    let signed = |k: usize, n: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    let (fy, fx) = (signed(ky, h), signed(kx, w));
    let r = (fy * fy + fx * fx).sqrt();
    let r_max = ((h / 2) as f64).hypot((w / 2) as f64).max(1.0);
    ((r / r_max * bands as f64) as usize).min(bands - 1)
}

pub fn frequency_report<T: Scalar>(
    x: &ImageTensor<T>,
    xp: &ImageTensor<T>,
    bands: usize,
) -> Result<FrequencyReport> {
    x.tensor().expect_shape(xp.tensor().shape())?;
    if bands == 0 {
        return Err(Error::InvalidArgument("bands must be >= 1".into()));
    }
    let (c, h, w) = x.tensor().chw();
    let mut planner = FftPlanner::new();
    let mut sums = vec![0.0; bands];
    let mut counts = vec![0usize; bands];
    let mut energy = 0.0;
    for ch in 0..c {
        let to64 = |t: &ImageTensor<T>| t.tensor().channel(ch).iter().map(|v| v.as_f64()).collect::<Vec<_>>();
        let fa = fft2(&to64(x), h, w, &mut planner);
        let fb = fft2(&to64(xp), h, w, &mut planner);
        for ky in 0..h {
            for kx in 0..w {
                let i = ky * w + kx;
                let b = radial_band(ky, kx, h, w, bands);
                sums[b] += (fb[i].norm() - fa[i].norm()).abs();
                counts[b] += 1;
                energy += (fb[i] - fa[i]).norm_sqr();
            }
        }
    }
    Ok(FrequencyReport {
        radial_bands: sums
            .iter()
            .zip(&counts)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect(),
        total_spectral_energy_diff: energy / (h * w) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn fm(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let n = rows.len();
        FeatureMatrix::new(rows, vec![false; n]).unwrap()
    }

    #[test]
    fn feature_matrix_contracts() {
        assert!(FeatureMatrix::new(vec![vec![1.0]], vec![false]).is_err());
        assert!(FeatureMatrix::new(vec![vec![1.0], vec![2.0]], vec![false]).is_err());
        assert!(FeatureMatrix::new(vec![vec![1.0], vec![f64::NAN]], vec![false; 2]).is_err());
    }

    #[test]
    fn scores_of_hand_cases() {
        assert_eq!(spectral_scores(&fm(vec![vec![0.1, 0.3]; 5])), vec![0.0; 5]);
        let s = spectral_scores(&fm(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]));
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn percentile_conventions() {
        let scores: Vec<f64> = (0..100).map(f64::from).collect();
        let (flags, t) = flag_outliers(&scores, 90.0).unwrap();
        assert!((t - 89.1).abs() < 1e-12);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 10);
        let (flags, _) = flag_outliers(&[2.0; 7], 90.0).unwrap();
        assert!(flags.iter().all(|f| !f));
        assert!(flag_outliers(&scores, 0.0).is_err());
        assert!(flag_outliers(&scores, 100.0).is_err());
        assert!(flag_outliers(&[], 50.0).is_err());
    }

    #[test]
    fn metric_conventions() {
        let t = [true, false, true, false];
        let m = detection_metrics(&t, &t).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = detection_metrics(&[false; 4], &t).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(detection_metrics(&[true], &t).is_err());
        assert!((f1_score(0.3, 0.105) - 0.156).abs() < 1e-3);
    }

    fn image(f: impl Fn(usize, usize, usize) -> f32, side: usize) -> ImageTensor<f32> {
        let mut data = Vec::with_capacity(3 * side * side);
        for c in 0..3 {
            for y in 0..side {
                for x in 0..side {
                    data.push(f(c, y, x));
                }
            }
        }
        ImageTensor::new(Tensor::from_vec(&[3, side, side], data).unwrap()).unwrap()
    }

    #[test]
    fn frequency_identity_and_sinusoid() {
        let x = image(|c, y, x| ((c + y * 3 + x * 7) % 11) as f32 / 11.0 - 0.5, 32);
        let r = frequency_report(&x, &x, 8).unwrap();
        assert!(r.radial_bands.iter().all(|&b| b == 0.0));
        assert_eq!(r.total_spectral_energy_diff, 0.0);

        // 12 cycles along x: radius 12 of r_max = 16 * sqrt(2) -> band 4.
        let k = 12.0;
        let xp = image(
            |c, y, xx| {
                let base = ((c + y * 3 + xx * 7) % 11) as f32 / 11.0 - 0.5;
                base + 0.2 * (2.0 * std::f32::consts::PI * k * xx as f32 / 32.0).cos()
            },
            32,
        );
        let r = frequency_report(&x, &xp, 8).unwrap();
        let top = r
            .radial_bands
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(top, radial_band(0, 12, 32, 32, 8));
        assert_eq!(top, 4);
    }
}

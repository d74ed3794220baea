//! Command implementations behind the `gan-poison` binary.
//!
//! Every command is a plain function so that tests can drive it without a
//! subprocess. Run directories have this layout:
//!
//! ```text
//! <out>/config.toml        config snapshot
//! <out>/metrics.csv        one row per epoch (grid columns)
//! <out>/epochs.csv         one row per epoch (all EpochRecord fields)
//! <out>/samples.bin        every real sample shown to the discriminator
//! <out>/checkpoints/       epoch_NNNNNN.ckpt and final.ckpt
//! <out>/manifest.json      RunManifest
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gan_poison::checkpoint;
use gan_poison::evaluation::{
    backdoor_proxy, collect_features, frequency_report, spectral_report, BackdoorProxyReport,
    SpectralReport, DEFAULT_BANDS, DEFAULT_PERCENTILE,
};
use gan_poison::image_pipeline::{
    canny_edge_map, edge_to_rgb, export_diffusion_manifest, laplacian_edge_map, load_image, resize,
    save_npy, save_png, to_gan_input, EXPORT_SIDE,
};
use gan_poison::networks::{generator_forward, FeatureVector, LatentVector};
use gan_poison::training::{self, SampleLog};
use gan_poison::{ImageTensor, ImageU8, Mode, TrainingConfig};

pub const CANNY_LOW: f64 = 100.0;
pub const CANNY_HIGH: f64 = 200.0;
pub const PROXY_SAMPLES: usize = 16;
const EXPORT_STREAM: u64 = 5;

pub const CSV_HEADER: [&str; 14] = [
    "run_id",
    "mode",
    "alpha",
    "eps",
    "seed",
    "epoch",
    "loss_d",
    "loss_g",
    "loss_p",
    "delta_i",
    "precision",
    "recall",
    "f1",
    "stealth_mse",
];

/// One CSV row. Evaluation fields are empty on per-epoch training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub mode: Mode,
    pub alpha: f64,
    pub eps: f64,
    pub seed: u64,
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub loss_p: f64,
    pub delta_i: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub stealth_mse: f64,
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Stable identifier derived from the run's settings and config hash.
pub fn run_id(cfg: &TrainingConfig) -> String {
    let mode = match cfg.mode {
        Mode::Baseline => "baseline",
        Mode::Poisoned => "poisoned",
    };
    format!(
        "{mode}-a{}-e{}-s{}-{}",
        cfg.effective_poison_rate(),
        cfg.eps,
        cfg.seed,
        &cfg.content_hash()[..8]
    )
}

// -------------------------------------------------------------- preprocess

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOutputs {
    pub tensor: PathBuf,
    pub canny: PathBuf,
    pub laplacian: PathBuf,
    pub resized: PathBuf,
}

/// Writes the GAN-domain tensor (`.npy`, float32, 3 x side x side), both
/// edge maps as RGB PNGs and a 512 x 512 resize.
pub fn cmd_preprocess(input: &Path, out_dir: &Path, side: usize) -> Result<PreprocessOutputs> {
    let img = load_image(input)?;
    let tensor = to_gan_input(&img, side)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let out = PreprocessOutputs {
        tensor: out_dir.join("tensor.npy"),
        canny: out_dir.join("canny.png"),
        laplacian: out_dir.join("laplacian.png"),
        resized: out_dir.join(format!("resized_{EXPORT_SIDE}.png")),
    };
    save_npy(tensor.tensor(), &out.tensor)?;
    save_png(&edge_to_rgb(&canny_edge_map(&img, CANNY_LOW, CANNY_HIGH)?), &out.canny)?;
    save_png(&edge_to_rgb(&laplacian_edge_map(&img)), &out.laplacian)?;
    save_png(&resize(&img, EXPORT_SIDE, EXPORT_SIDE)?, &out.resized)?;
    Ok(out)
}

// ------------------------------------------------------------------- train

/// Deterministic stand-in image used when no training data is given:
/// horizontal and vertical colour ramps over an 8-pixel checkerboard.
pub fn synthetic_scene(side: usize) -> ImageU8 {
    ImageU8::from_fn(side, side, |y, x| {
        let r = (x * 255 / side.max(1)) as u8;
        let g = (y * 255 / side.max(1)) as u8;
        let b = if (x / 8 + y / 8) % 2 == 0 { 200 } else { 40 };
        [r, g, b]
    })
}

/// Loads one image, or every PNG/JPEG in a directory (sorted by name).
/// Without a path the synthetic scene is used.
pub fn load_dataset(data: Option<&Path>, side: usize) -> Result<Vec<ImageTensor<f32>>> {
    let Some(path) = data else {
        return Ok(vec![to_gan_input(&synthetic_scene(side), side)?]);
    };
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("cannot list {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
                matches!(ext.as_str(), "png" | "jpg" | "jpeg")
            })
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        bail!("no PNG or JPEG images in {}", path.display());
    }
    files
        .iter()
        .map(|f| Ok(to_gan_input(&load_image(f)?, side)?))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: TrainingConfig,
    pub config_hash: String,
    pub started_at: String,
    pub finished_at: String,
    pub metrics: PathBuf,
    pub epochs: PathBuf,
    pub samples: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
}

impl RunManifest {
    pub fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        [&self.metrics, &self.epochs, &self.samples]
            .into_iter()
            .chain(&self.checkpoints)
            .chain(&self.reports)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

pub fn final_checkpoint(run_dir: &Path) -> PathBuf {
    run_dir.join("checkpoints").join("final.ckpt")
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Trains per `cfg` into `out_dir`.
pub fn cmd_train(cfg: &TrainingConfig, data: Option<&Path>, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let dataset = load_dataset(data, cfg.image_side)?;
    let ckpt_dir = out_dir.join("checkpoints");
    let outcome = training::train(cfg, &dataset, Some(&ckpt_dir))?;

    let id = run_id(cfg);
    let rows: Vec<MetricsRow> = outcome
        .records
        .iter()
        .map(|r| MetricsRow {
            run_id: id.clone(),
            mode: cfg.mode,
            alpha: cfg.effective_poison_rate(),
            eps: cfg.eps,
            seed: cfg.seed,
            epoch: r.epoch,
            loss_d: r.loss_d,
            loss_g: r.loss_g,
            loss_p: r.loss_p,
            delta_i: None,
            precision: None,
            recall: None,
            f1: None,
            stealth_mse: mean(
                outcome
                    .samples
                    .records
                    .iter()
                    .filter(|s| s.epoch == r.epoch)
                    .map(|s| s.stealth_mse),
            ),
        })
        .collect();
    let metrics = out_dir.join("metrics.csv");
    write_csv(&metrics, &rows)?;
    let epochs = out_dir.join("epochs.csv");
    write_csv(&epochs, &outcome.records)?;
    let samples = out_dir.join("samples.bin");
    checkpoint::save_sample_log(&samples, &outcome.samples)?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml_string())?;

    let last = outcome.checkpoints.last().context("training wrote no checkpoint")?;
    let fin = final_checkpoint(out_dir);
    fs::copy(last, &fin).with_context(|| format!("cannot write {}", fin.display()))?;
    let mut checkpoints = outcome.checkpoints.clone();
    checkpoints.push(fin);

    let manifest = RunManifest {
        run_id: id,
        config: cfg.clone(),
        config_hash: cfg.content_hash(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        metrics,
        epochs,
        samples,
        checkpoints,
        reports: Vec::new(),
    };
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

// -------------------------------------------------------------------- eval

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Spectral,
    Backdoor,
    Frequency,
    All,
}

impl Which {
    fn includes(self, other: Which) -> bool {
        self == Which::All || self == other
    }
}

/// Frequency reports averaged over every logged poisoned sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySummary {
    pub n_pairs: usize,
    pub radial_bands: Vec<f64>,
    pub total_spectral_energy_diff: f64,
    /// Mean spatial energy `sum (x' - x)^2` over the same pairs.
    pub spatial_energy_diff: f64,
    /// Largest per-pair relative gap between spectral and spatial energy.
    pub max_parseval_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutputs {
    pub reports: Vec<PathBuf>,
    pub summary: PathBuf,
    pub row: MetricsRow,
    pub spectral: Option<SpectralReport>,
    pub backdoor: Option<BackdoorProxyReport>,
    pub frequency: Option<FrequencySummary>,
}

/// The sample log of the run that produced `ckpt`
/// (`<run>/checkpoints/x.ckpt` -> `<run>/samples.bin`).
pub fn sample_log_for(ckpt: &Path) -> Result<SampleLog> {
    let run_dir = ckpt
        .parent()
        .and_then(Path::parent)
        .context("checkpoint is not inside a run directory")?;
    let path = run_dir.join("samples.bin");
    checkpoint::load_sample_log(&path).with_context(|| format!("sample log {}", path.display()))
}

pub fn frequency_summary(log: &SampleLog) -> Result<FrequencySummary> {
    let mut bands = vec![0.0; DEFAULT_BANDS];
    let (mut spectral, mut spatial, mut worst, mut n) = (0.0, 0.0, 0.0f64, 0usize);
    for (i, r) in log.records.iter().enumerate() {
        if !r.poisoned {
            continue;
        }
        let x0 = &log.dataset[r.index];
        let (xp, _) = log.sample(i)?;
        let rep = frequency_report(&x0.cast::<f64>(), &xp.cast::<f64>(), DEFAULT_BANDS)?;
        let energy: f64 = xp
            .tensor()
            .data()
            .iter()
            .zip(x0.tensor().data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum();
        let gap = (rep.total_spectral_energy_diff - energy).abs();
        if energy > 0.0 {
            worst = worst.max(gap / energy);
        }
        bands.iter_mut().zip(&rep.radial_bands).for_each(|(a, b)| *a += b);
        spectral += rep.total_spectral_energy_diff;
        spatial += energy;
        n += 1;
    }
    let k = n.max(1) as f64;
    Ok(FrequencySummary {
        n_pairs: n,
        radial_bands: bands.iter().map(|b| b / k).collect(),
        total_spectral_energy_diff: spectral / k,
        spatial_energy_diff: spatial / k,
        max_parseval_rel_error: worst,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs the selected evaluators on a checkpoint; writes one JSON file per
/// report and `summary.csv` (one row) into `out_dir`.
pub fn cmd_eval(ckpt: &Path, which: Which, out_dir: &Path, proxy_seed: Option<u64>) -> Result<EvalOutputs> {
    let (cfg, state) = checkpoint::load(ckpt)?;
    let log = sample_log_for(ckpt)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut reports = Vec::new();

    let spectral = if which.includes(Which::Spectral) {
        let fm = collect_features(&state.discriminator, &log.samples()?)?;
        let rep = spectral_report(&fm, DEFAULT_PERCENTILE)?;
        let path = out_dir.join("spectral.json");
        write_json(&path, &rep)?;
        reports.push(path);
        Some(rep)
    } else {
        None
    };
    let backdoor = if which.includes(Which::Backdoor) {
        let x = log.dataset.first().context("sample log has no images")?;
        let seed = proxy_seed.unwrap_or(cfg.seed);
        let rep = backdoor_proxy(&state.generator, x, &cfg.trigger, PROXY_SAMPLES, seed)?;
        let path = out_dir.join("backdoor.json");
        write_json(&path, &rep)?;
        reports.push(path);
        Some(rep)
    } else {
        None
    };
    let frequency = if which.includes(Which::Frequency) {
        let rep = frequency_summary(&log)?;
        let path = out_dir.join("frequency.json");
        write_json(&path, &rep)?;
        reports.push(path);
        Some(rep)
    } else {
        None
    };

    let last = state.history.last();
    let row = MetricsRow {
        run_id: run_id(&cfg),
        mode: cfg.mode,
        alpha: cfg.effective_poison_rate(),
        eps: cfg.eps,
        seed: cfg.seed,
        epoch: state.epoch,
        loss_d: last.map_or(0.0, |r| r.loss_d),
        loss_g: last.map_or(0.0, |r| r.loss_g),
        loss_p: last.map_or(0.0, |r| r.loss_p),
        delta_i: backdoor.as_ref().map(|b| b.delta_i),
        precision: spectral.as_ref().map(|s| s.precision),
        recall: spectral.as_ref().map(|s| s.recall),
        f1: spectral.as_ref().map(|s| s.f1),
        stealth_mse: mean(log.records.iter().filter(|r| r.poisoned).map(|r| r.stealth_mse)),
    };
    let summary = out_dir.join("summary.csv");
    write_csv(&summary, std::slice::from_ref(&row))?;
    Ok(EvalOutputs {
        reports,
        summary,
        row,
        spectral,
        backdoor,
        frequency,
    })
}

// -------------------------------------------------------------------- grid

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub poison_rates: Vec<f64>,
    pub eps_values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            poison_rates: vec![0.05, 0.1, 0.2, 0.3],
            eps_values: vec![0.01, 0.04, 0.08],
            seeds: vec![0, 1, 2],
        }
    }
}

impl GridSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let g: GridSpec = toml::from_str(text).context("invalid grid spec")?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.poison_rates.is_empty() || self.eps_values.is_empty() || self.seeds.is_empty() {
            bail!("grid spec lists must be non-empty");
        }
        if let Some(r) = self.poison_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            bail!("poison_rates: {r} is outside [0, 1]");
        }
        if let Some(e) = self.eps_values.iter().find(|e| !(**e >= 0.0)) {
            bail!("eps_values: {e} is negative");
        }
        Ok(())
    }

    /// `(alpha, eps, seed)` in row-major order.
    pub fn cells(&self) -> Vec<(f64, f64, u64)> {
        let mut out = Vec::new();
        for &a in &self.poison_rates {
            for &e in &self.eps_values {
                for &s in &self.seeds {
                    out.push((a, e, s));
                }
            }
        }
        out
    }
}

/// Mean over seeds of one `(alpha, eps)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub alpha: f64,
    pub eps: f64,
    pub n_seeds: usize,
    pub delta_i: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub stealth_mse: f64,
}

pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.alpha, r.eps)) {
            keys.push((r.alpha, r.eps));
        }
    }
    keys.into_iter()
        .map(|(alpha, eps)| {
            let cell: Vec<&MetricsRow> = rows.iter().filter(|r| r.alpha == alpha && r.eps == eps).collect();
            let avg = |f: fn(&MetricsRow) -> f64| mean(cell.iter().map(|r| f(r)));
            AggregateRow {
                alpha,
                eps,
                n_seeds: cell.len(),
                delta_i: avg(|r| r.delta_i.unwrap_or(0.0)),
                precision: avg(|r| r.precision.unwrap_or(0.0)),
                recall: avg(|r| r.recall.unwrap_or(0.0)),
                f1: avg(|r| r.f1.unwrap_or(0.0)),
                stealth_mse: avg(|r| r.stealth_mse),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    pub rows: Vec<MetricsRow>,
    pub aggregate: Vec<AggregateRow>,
    /// `(run_id, reason)` of every failed cell.
    pub failures: Vec<(String, String)>,
    pub runs_csv: PathBuf,
    pub aggregate_csv: PathBuf,
}

/// Trains and evaluates every cell of `grid` as a poisoned run derived from
/// `base`. A failing cell is recorded and the sweep continues.
pub fn cmd_grid(grid: &GridSpec, base: &TrainingConfig, data: Option<&Path>, out_dir: &Path) -> Result<GridOutcome> {
    grid.validate()?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (alpha, eps, seed) in grid.cells() {
        let mut cfg = base.clone();
        cfg.mode = Mode::Poisoned;
        cfg.poison_rate = alpha;
        cfg.eps = eps;
        cfg.seed = seed;
        let id = run_id(&cfg);
        let run_dir = out_dir.join("runs").join(&id);
        let result = cmd_train(&cfg, data, &run_dir).and_then(|mut manifest| {
            let eval = cmd_eval(&final_checkpoint(&run_dir), Which::All, &run_dir.join("eval"), None)?;
            manifest.reports = eval.reports.clone();
            manifest.reports.push(eval.summary.clone());
            manifest.write(&run_dir.join("manifest.json"))?;
            Ok(eval.row)
        });
        match result {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((id, format!("{e:#}"))),
        }
    }
    let runs_csv = out_dir.join("runs.csv");
    write_csv(&runs_csv, &rows)?;
    let agg = aggregate(&rows);
    let aggregate_csv = out_dir.join("aggregate.csv");
    write_csv(&aggregate_csv, &agg)?;
    if !failures.is_empty() {
        let text: String = failures.iter().map(|(id, why)| format!("{id}: {why}\n")).collect();
        fs::write(out_dir.join("failures.txt"), text)?;
    }
    Ok(GridOutcome {
        rows,
        aggregate: agg,
        failures,
        runs_csv,
        aggregate_csv,
    })
}

// ------------------------------------------------------------------ export

/// Samples `G(x, z, f)` with `(z, f)` drawn from `seed` and writes the
/// diffusion hand-off bundle. `x` is the first image of the run.
pub fn cmd_export(ckpt: &Path, prompt: &str, negative_prompt: &str, out_dir: &Path, seed: u64) -> Result<PathBuf> {
    let (_, state) = checkpoint::load(ckpt)?;
    let log = sample_log_for(ckpt)?;
    let x = log.dataset.first().context("sample log has no images")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EXPORT_STREAM);
    let z = LatentVector::sample(&mut rng);
    let f = FeatureVector::sample(&mut rng);
    let generated = generator_forward(&state.generator, x, &z, &f)?;
    Ok(export_diffusion_manifest(&generated, prompt, negative_prompt, out_dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alpha: f64, seed: u64, delta_i: f64) -> MetricsRow {
        MetricsRow {
            run_id: format!("r{seed}"),
            mode: Mode::Poisoned,
            alpha,
            eps: 0.08,
            seed,
            epoch: 1,
            loss_d: 0.0,
            loss_g: 0.0,
            loss_p: 0.0,
            delta_i: Some(delta_i),
            precision: Some(seed as f64 / 10.0),
            recall: Some(0.5),
            f1: Some(0.25),
            stealth_mse: 1e-3 * seed as f64,
        }
    }

    #[test]
    fn aggregation_is_the_seed_mean() {
        let rows = vec![row(0.3, 0, 0.01), row(0.3, 1, 0.02), row(0.3, 2, 0.06), row(0.1, 0, 1.0)];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].n_seeds, 3);
        assert!((agg[0].delta_i - 0.03).abs() < 1e-15);
        assert!((agg[0].precision - 0.1).abs() < 1e-15);
        assert!((agg[0].stealth_mse - 1e-3).abs() < 1e-15);
        assert_eq!(agg[1].delta_i, 1.0);
    }

    #[test]
    fn default_grid_has_36_cells() {
        let g = GridSpec::default();
        assert_eq!(g.cells().len(), 36);
        assert!(GridSpec::from_toml_str("poison_rates = [1.5]").is_err());
        assert!(GridSpec::from_toml_str("seeds = []").is_err());
        let one = GridSpec::from_toml_str("poison_rates = [0.3]\neps_values = [0.08]\nseeds = [7]").unwrap();
        assert_eq!(one.cells(), vec![(0.3, 0.08, 7)]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![row(0.3, 1, 0.5)];
        write_csv(&p, &rows).unwrap();
        let header = fs::read_to_string(&p).unwrap();
        assert_eq!(header.lines().next().unwrap(), CSV_HEADER.join(","));
        let back: Vec<MetricsRow> = read_csv(&p).unwrap();
        assert_eq!(back, rows);
    }
}

//! Three-player optimisation: discriminator, generator, then perturbation
//! network, each updated by its own Adam state.
//!
//! Loss functions are generic over the scalar type so that the exact code
//! path used for training can be checked against finite differences in f64.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::{Mode, PoisonerSchedule, TrainingConfig};
use crate::error::{Error, Result};
use crate::image_pipeline::ImageTensor;
use crate::networks::{
    discriminator_backward, discriminator_trace, generator_backward, generator_trace, init_params,
    poisoner_backward, poisoner_trace, DiscriminatorOutput, FeatureVector, GeneratorTrace,
    LatentVector, NetworkId, ParamSet, PoisonLatent, PoisonerTrace,
};
use crate::optim::{AdamHyper, AdamState, ADAM_EPSILON};
use crate::poisoning::{
    apply_perturbation, apply_perturbation_backward, laplacian_energy, laplacian_energy_grad,
    maybe_poison, stealth_mse, stealth_mse_grad, total_variation, total_variation_grad,
    Perturbation,
};
use crate::tensor::{Scalar, Tensor};

pub const BCE_CLAMP: f64 = 1e-7;

/// Binary cross-entropy of a probability against a 0/1 target; `p` is
/// clamped to `[1e-7, 1 - 1e-7]` first.
pub fn bce<T: Scalar>(p: T, target: f64) -> T {
    let lo = T::lit(BCE_CLAMP);
    let hi = T::one() - lo;
    let p = p.max(lo).min(hi);
    let t = T::lit(target);
    -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
}

/// `d bce / d p`, zero inside the clamped region.
pub fn bce_grad<T: Scalar>(p: T, target: f64) -> T {
    let lo = T::lit(BCE_CLAMP);
    let hi = T::one() - lo;
    if p < lo || p > hi {
        return T::zero();
    }
    let t = T::lit(target);
    -t / p + (T::one() - t) / (T::one() - p)
}

/// `lr * 0.5^floor(epoch / lr_halving_period)`.
pub fn lr_at(epoch: usize, cfg: &TrainingConfig) -> f64 {
    cfg.lr * 0.5f64.powi((epoch / cfg.lr_halving_period) as i32)
}

fn add_scaled<T: Scalar>(acc: &mut ParamSet<T>, other: &ParamSet<T>, scale: T) {
    for (a, b) in acc.tensors_mut().iter_mut().zip(other.tensors()) {
        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
            *x += scale * *y;
        }
    }
}

// -------------------------------------------------------------- objectives

/// `L_D = 0.5 * [BCE(D(x_real), 1) + BCE(D(x_fake), 0)]` and its gradient
/// w.r.t. the discriminator parameters.
pub fn discriminator_loss_grad<T: Scalar>(
    d: &ParamSet<T>,
    x_real: &ImageTensor<T>,
    x_fake: &ImageTensor<T>,
) -> Result<(T, ParamSet<T>, DiscriminatorOutput<T>)> {
    let half = T::lit(0.5);
    let real = discriminator_trace(d, x_real)?;
    let fake = discriminator_trace(d, x_fake)?;
    let (pr, pf) = (real.output.prob, fake.output.prob);
    let loss = half * (bce(pr, 1.0) + bce(pf, 0.0));
    let (mut grads, _) = discriminator_backward(d, &real, half * bce_grad(pr, 1.0), false);
    let (gf, _) = discriminator_backward(d, &fake, half * bce_grad(pf, 0.0), false);
    add_scaled(&mut grads, &gf, T::one());
    Ok((loss, grads, real.output))
}

/// `L_D` with `x_fake = G(x_real, z, f)`.
pub fn discriminator_loss<T: Scalar>(
    d: &ParamSet<T>,
    g: &ParamSet<T>,
    x_real: &ImageTensor<T>,
    z: &LatentVector,
    f: &FeatureVector,
) -> Result<T> {
    let fake = generator_trace(g, x_real, z, f)?.output();
    let pr = discriminator_trace(d, x_real)?.output.prob;
    let pf = discriminator_trace(d, &fake)?.output.prob;
    Ok(T::lit(0.5) * (bce(pr, 1.0) + bce(pf, 0.0)))
}

/// `L_G = BCE(D(G(x, z, f)), 1)` and its generator gradient, from a recorded
/// generator pass.
pub fn generator_loss_grad_traced<T: Scalar>(
    g: &ParamSet<T>,
    d: &ParamSet<T>,
    trace: &GeneratorTrace<T>,
) -> Result<(T, ParamSet<T>)> {
    let fake = trace.output();
    let dt = discriminator_trace(d, &fake)?;
    let p = dt.output.prob;
    let loss = bce(p, 1.0);
    let (_, grad_x) = discriminator_backward(d, &dt, bce_grad(p, 1.0), true);
    let grads = generator_backward(g, trace, &grad_x.expect("input gradient requested"));
    Ok((loss, grads))
}

pub fn generator_loss_grad<T: Scalar>(
    g: &ParamSet<T>,
    d: &ParamSet<T>,
    x: &ImageTensor<T>,
    z: &LatentVector,
    f: &FeatureVector,
) -> Result<(T, ParamSet<T>)> {
    let trace = generator_trace(g, x, z, f)?;
    generator_loss_grad_traced(g, d, &trace)
}

pub fn generator_loss<T: Scalar>(
    g: &ParamSet<T>,
    d: &ParamSet<T>,
    x: &ImageTensor<T>,
    z: &LatentVector,
    f: &FeatureVector,
) -> Result<T> {
    let fake = generator_trace(g, x, z, f)?.output();
    Ok(bce(discriminator_trace(d, &fake)?.output.prob, 1.0))
}

/// Weights of the perturbation-network objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoisonObjective {
    pub eps: f64,
    pub adv_sign: f64,
    pub lambda_stealth: f64,
    pub lambda_tv: f64,
    pub lambda_hf: f64,
}

impl PoisonObjective {
    pub fn from_config(cfg: &TrainingConfig) -> Self {
        Self {
            eps: cfg.eps,
            adv_sign: cfg.poison_adv_sign as f64,
            lambda_stealth: cfg.lambda_stealth,
            lambda_tv: cfg.lambda_tv,
            lambda_hf: cfg.lambda_hf,
        }
    }
}

/// Components of `L_P`. `tv` is the raw total variation; the objective uses
/// it divided by the number of elements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoisonLoss {
    pub total: f64,
    pub adversarial_bce: f64,
    pub stealth: f64,
    pub tv: f64,
    pub laplacian: f64,
}

struct PoisonForward<T: Scalar> {
    x_poisoned: ImageTensor<T>,
    loss: PoisonLoss,
    total: T,
    d_trace: crate::networks::DiscriminatorTrace<T>,
}

fn poisoner_objective<T: Scalar>(
    d: &ParamSet<T>,
    x0: &ImageTensor<T>,
    delta: &Perturbation<T>,
    w: &PoisonObjective,
) -> Result<PoisonForward<T>> {
    let xp = apply_perturbation(x0, delta)?;
    let dt = discriminator_trace(d, &xp)?;
    let adv = bce(dt.output.prob, 1.0);
    let mse = stealth_mse(&xp, x0)?;
    let tv = total_variation(delta);
    let lap = laplacian_energy(delta);
    let n = T::lit(delta.values().len() as f64);
    let total = T::lit(w.adv_sign) * adv + T::lit(w.lambda_stealth) * mse + T::lit(w.lambda_tv) * tv / n
        - T::lit(w.lambda_hf) * lap;
    Ok(PoisonForward {
        x_poisoned: xp,
        loss: PoisonLoss {
            total: total.as_f64(),
            adversarial_bce: adv.as_f64(),
            stealth: mse.as_f64(),
            tv: tv.as_f64(),
            laplacian: lap.as_f64(),
        },
        total,
        d_trace: dt,
    })
}

/// `L_P = s * BCE(D(x'), 1) + l_s * MSE(x', x0) + l_tv * TV(delta) / n - l_hf * Lap(delta)`
/// with `x' = clip(x0 + delta)` and its gradient w.r.t. the perturbation network.
pub fn poisoner_loss_grad_traced<T: Scalar>(
    p: &ParamSet<T>,
    d: &ParamSet<T>,
    x0: &ImageTensor<T>,
    trace: &PoisonerTrace<T>,
    w: &PoisonObjective,
) -> Result<(PoisonLoss, ParamSet<T>)> {
    let delta = &trace.delta;
    let fwd = poisoner_objective(d, x0, delta, w)?;
    let p_real = fwd.d_trace.output.prob;
    let (_, gx) = discriminator_backward(d, &fwd.d_trace, T::lit(w.adv_sign) * bce_grad(p_real, 1.0), true);
    let mut grad_xp = gx.expect("input gradient requested");
    let mse_g = stealth_mse_grad(&fwd.x_poisoned, x0);
    let ls = T::lit(w.lambda_stealth);
    for (g, m) in grad_xp.data_mut().iter_mut().zip(mse_g.data()) {
        *g += ls * *m;
    }
    let mut grad_delta = apply_perturbation_backward(x0, delta, &grad_xp);
    let n = T::lit(delta.values().len() as f64);
    let ltv = T::lit(w.lambda_tv) / n;
    let lhf = T::lit(w.lambda_hf);
    let tv_g = total_variation_grad(delta);
    let lap_g = laplacian_energy_grad(delta);
    for ((g, t), l) in grad_delta.data_mut().iter_mut().zip(tv_g.data()).zip(lap_g.data()) {
        *g += ltv * *t - lhf * *l;
    }
    let grads = poisoner_backward(p, trace, &grad_delta);
    Ok((fwd.loss, grads))
}

pub fn poisoner_loss_grad<T: Scalar>(
    p: &ParamSet<T>,
    d: &ParamSet<T>,
    x0: &ImageTensor<T>,
    zp: &PoisonLatent,
    w: &PoisonObjective,
) -> Result<(PoisonLoss, ParamSet<T>)> {
    let trace = poisoner_trace(p, x0, zp, T::lit(w.eps))?;
    poisoner_loss_grad_traced(p, d, x0, &trace, w)
}

pub fn poisoner_loss<T: Scalar>(
    p: &ParamSet<T>,
    d: &ParamSet<T>,
    x0: &ImageTensor<T>,
    zp: &PoisonLatent,
    w: &PoisonObjective,
) -> Result<T> {
    let delta = poisoner_trace(p, x0, zp, T::lit(w.eps))?.delta;
    Ok(poisoner_objective(d, x0, &delta, w)?.total)
}

// ------------------------------------------------------------------- state

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    /// Objective of the perturbation network (0 for baseline runs). Evaluated
    /// every epoch even when no update is applied.
    pub loss_p: f64,
    pub poisoned_this_epoch: bool,
    pub poisoner_updated: bool,
    pub lr_current: f64,
}

/// One real sample shown to the discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub epoch: usize,
    pub index: usize,
    pub poisoned: bool,
    pub stealth_mse: f64,
    /// Applied perturbation (poisoned samples only).
    pub delta: Option<Tensor<f32>>,
}

/// Every real sample of a run, recoverable as `clip(dataset[index] + delta)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SampleLog {
    pub eps: f64,
    pub dataset: Vec<ImageTensor<f32>>,
    pub records: Vec<SampleRecord>,
}

impl SampleLog {
    pub fn sample(&self, i: usize) -> Result<(ImageTensor<f32>, bool)> {
        let r = &self.records[i];
        let x0 = &self.dataset[r.index];
        match &r.delta {
            Some(d) => {
                let delta = Perturbation::new(d.clone(), self.eps as f32)?;
                Ok((apply_perturbation(x0, &delta)?, true))
            }
            None => Ok((x0.clone(), false)),
        }
    }

    pub fn samples(&self) -> Result<Vec<(ImageTensor<f32>, bool)>> {
        (0..self.records.len()).map(|i| self.sample(i)).collect()
    }

    pub fn poisoned_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.poisoned).count() as f64 / self.records.len() as f64
    }
}

pub struct TrainState<T: Scalar = f32> {
    pub generator: ParamSet<T>,
    pub discriminator: ParamSet<T>,
    pub poisoner: ParamSet<T>,
    pub adam_generator: AdamState<T>,
    pub adam_discriminator: AdamState<T>,
    pub adam_poisoner: AdamState<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    pub rng: ChaCha8Rng,
}

fn check_finite<T: Scalar>(v: T, epoch: usize, stage: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            epoch,
            stage: stage.into(),
        })
    }
}

fn check_params<T: Scalar>(p: &ParamSet<T>, epoch: usize, stage: &str) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            epoch,
            stage: stage.into(),
        })
    }
}

/// Result of one discriminator update.
pub struct DiscriminatorStep<T: Scalar> {
    pub loss: T,
    pub real: DiscriminatorOutput<T>,
}

impl<T: Scalar> TrainState<T> {
    /// Fresh parameters and optimiser state derived from `cfg.seed`.
    pub fn new(cfg: &TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let side = cfg.image_side;
        let generator = init_params(NetworkId::Generator, side, cfg.seed)?;
        let discriminator = init_params(NetworkId::Discriminator, side, cfg.seed)?;
        let poisoner = init_params(NetworkId::Poisoner, side, cfg.seed)?;
        Ok(Self {
            adam_generator: AdamState::new(&generator),
            adam_discriminator: AdamState::new(&discriminator),
            adam_poisoner: AdamState::new(&poisoner),
            generator,
            discriminator,
            poisoner,
            epoch: 0,
            history: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    fn hyper(&self, cfg: &TrainingConfig) -> AdamHyper {
        AdamHyper {
            lr: lr_at(self.epoch, cfg),
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: ADAM_EPSILON,
        }
    }

    /// Updates the discriminator on `x_real` (label 1) against
    /// `G(x_real, z, f)` (label 0); the generator is not differentiated.
    pub fn discriminator_step(
        &mut self,
        cfg: &TrainingConfig,
        x_real: &ImageTensor<T>,
        z: &LatentVector,
        f: &FeatureVector,
    ) -> Result<DiscriminatorStep<T>> {
        let trace = generator_trace(&self.generator, x_real, z, f)?;
        self.discriminator_step_traced(cfg, x_real, &trace)
    }

    fn discriminator_step_traced(
        &mut self,
        cfg: &TrainingConfig,
        x_real: &ImageTensor<T>,
        g_trace: &GeneratorTrace<T>,
    ) -> Result<DiscriminatorStep<T>> {
        let (loss, grads, real) = discriminator_loss_grad(&self.discriminator, x_real, &g_trace.output())?;
        check_finite(loss, self.epoch, "discriminator loss")?;
        check_params(&grads, self.epoch, "discriminator gradient")?;
        let hp = self.hyper(cfg);
        self.adam_discriminator.apply(&mut self.discriminator, &grads, hp);
        check_params(&self.discriminator, self.epoch, "discriminator parameters")?;
        Ok(DiscriminatorStep { loss, real })
    }

    /// Updates the generator on `BCE(D(G(x, z, f)), 1)`.
    pub fn generator_step(
        &mut self,
        cfg: &TrainingConfig,
        x: &ImageTensor<T>,
        z: &LatentVector,
        f: &FeatureVector,
    ) -> Result<T> {
        let trace = generator_trace(&self.generator, x, z, f)?;
        self.generator_step_traced(cfg, &trace)
    }

    fn generator_step_traced(&mut self, cfg: &TrainingConfig, trace: &GeneratorTrace<T>) -> Result<T> {
        let (loss, grads) = generator_loss_grad_traced(&self.generator, &self.discriminator, trace)?;
        check_finite(loss, self.epoch, "generator loss")?;
        check_params(&grads, self.epoch, "generator gradient")?;
        let hp = self.hyper(cfg);
        self.adam_generator.apply(&mut self.generator, &grads, hp);
        check_params(&self.generator, self.epoch, "generator parameters")?;
        Ok(loss)
    }

    /// Updates the perturbation network on `L_P` for clean input `x0`.
    pub fn poisoner_step(
        &mut self,
        cfg: &TrainingConfig,
        x0: &ImageTensor<T>,
        zp: &PoisonLatent,
    ) -> Result<PoisonLoss> {
        let trace = poisoner_trace(&self.poisoner, x0, zp, T::lit(cfg.eps))?;
        self.poisoner_step_traced(cfg, x0, &trace)
    }

    fn poisoner_step_traced(
        &mut self,
        cfg: &TrainingConfig,
        x0: &ImageTensor<T>,
        trace: &PoisonerTrace<T>,
    ) -> Result<PoisonLoss> {
        let w = PoisonObjective::from_config(cfg);
        let (loss, grads) = poisoner_loss_grad_traced(&self.poisoner, &self.discriminator, x0, trace, &w)?;
        check_finite(loss.total, self.epoch, "poisoner loss")?;
        check_params(&grads, self.epoch, "poisoner gradient")?;
        let hp = self.hyper(cfg);
        self.adam_poisoner.apply(&mut self.poisoner, &grads, hp);
        check_params(&self.poisoner, self.epoch, "poisoner parameters")?;
        Ok(loss)
    }

    /// One epoch over `dataset` (batch size 1, samples in order).
    pub fn run_epoch(
        &mut self,
        cfg: &TrainingConfig,
        dataset: &[ImageTensor<T>],
        log: &mut Vec<(usize, bool, f64, Option<Tensor<T>>)>,
    ) -> Result<EpochRecord> {
        let alpha = cfg.effective_poison_rate();
        let poisoned_mode = cfg.mode == Mode::Poisoned;
        let w = PoisonObjective::from_config(cfg);
        let eps = T::lit(cfg.eps);
        let (mut ld, mut lg, mut lp) = (0.0, 0.0, 0.0);
        let (mut any_poisoned, mut any_update) = (false, false);

        for (index, x0) in dataset.iter().enumerate() {
            // Draw order is fixed so baseline and poisoned runs with the same
            // seed see identical z, f and z_p.
            let z = LatentVector::sample(&mut self.rng);
            let f = FeatureVector::sample(&mut self.rng);
            let zp = PoisonLatent::sample(&mut self.rng);

            let p_trace = if poisoned_mode {
                Some(poisoner_trace(&self.poisoner, x0, &zp, eps)?)
            } else {
                None
            };
            let delta = match &p_trace {
                Some(t) => t.delta.clone(),
                None => Perturbation::zeros(x0.tensor().shape(), eps),
            };
            let decision = maybe_poison(x0, &delta, alpha, &mut self.rng)?;
            let update_draw: f64 = self.rng.random();

            let g_trace = generator_trace(&self.generator, &decision.sample, &z, &f)?;
            let d_step = self.discriminator_step_traced(cfg, &decision.sample, &g_trace)?;
            let g_loss = self.generator_step_traced(cfg, &g_trace)?;
            ld += d_step.loss.as_f64();
            lg += g_loss.as_f64();

            if let Some(trace) = &p_trace {
                let update = match cfg.poisoner_schedule {
                    PoisonerSchedule::EveryEpoch => true,
                    PoisonerSchedule::Probabilistic => update_draw < alpha,
                };
                let loss = if update {
                    any_update = true;
                    self.poisoner_step_traced(cfg, x0, trace)?
                } else {
                    let v = poisoner_objective(&self.discriminator, x0, &trace.delta, &w)?.loss;
                    check_finite(v.total, self.epoch, "poisoner loss")?;
                    v
                };
                lp += loss.total;
            }

            any_poisoned |= decision.poisoned;
            let mse = stealth_mse(&decision.sample, x0)?.as_f64();
            let delta_rec = decision.poisoned.then(|| delta.values().clone());
            log.push((index, decision.poisoned, mse, delta_rec));
        }

        let n = dataset.len() as f64;
        let record = EpochRecord {
            epoch: self.epoch,
            loss_d: ld / n,
            loss_g: lg / n,
            loss_p: lp / n,
            poisoned_this_epoch: any_poisoned,
            poisoner_updated: any_update,
            lr_current: lr_at(self.epoch, cfg),
        };
        self.history.push(record.clone());
        self.epoch += 1;
        Ok(record)
    }
}

pub struct TrainOutcome {
    pub state: TrainState<f32>,
    pub records: Vec<EpochRecord>,
    pub samples: SampleLog,
    /// Checkpoints written, oldest first; the last one is the final epoch.
    pub checkpoints: Vec<PathBuf>,
}

pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:06}.ckpt")
}

/// Trains from scratch. Checkpoints go to `checkpoint_dir` every
/// `cfg.checkpoint_every` epochs and after the last epoch.
pub fn train(
    cfg: &TrainingConfig,
    dataset: &[ImageTensor<f32>],
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    train_with(cfg, dataset, checkpoint_dir, TrainState::new(cfg)?, |_| {})
}

/// Continues `state` until `cfg.epochs` epochs are complete, reporting each
/// epoch to `on_epoch`.
pub fn train_with(
    cfg: &TrainingConfig,
    dataset: &[ImageTensor<f32>],
    checkpoint_dir: Option<&Path>,
    mut state: TrainState<f32>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let side = cfg.image_side;
    for x in dataset {
        x.tensor().expect_shape(&[3, side, side])?;
    }
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut raw_log = Vec::new();
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut sample_epochs = Vec::new();
    while state.epoch < cfg.epochs {
        let before = raw_log.len();
        let record = state.run_epoch(cfg, dataset, &mut raw_log)?;
        sample_epochs.extend(std::iter::repeat_n(record.epoch, raw_log.len() - before));
        on_epoch(&record);
        records.push(record);
        let done = state.epoch;
        let periodic = cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0;
        if let Some(dir) = checkpoint_dir {
            if periodic || done == cfg.epochs {
                let path = dir.join(checkpoint_file_name(done));
                checkpoint::save(&path, cfg, &state)?;
                checkpoints.push(path);
            }
        }
    }

    let samples = SampleLog {
        eps: cfg.eps,
        dataset: dataset.to_vec(),
        records: raw_log
            .into_iter()
            .zip(sample_epochs)
            .map(|((index, poisoned, stealth_mse, delta), epoch)| SampleRecord {
                epoch,
                index,
                poisoned,
                stealth_mse,
                delta,
            })
            .collect(),
    };
    Ok(TrainOutcome {
        state,
        records,
        samples,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;

    #[test]
    fn bce_values() {
        assert!((bce(0.5f64, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce(1.0f64 - 1e-7, 1.0) < 1.1e-7);
        let mut last = f64::INFINITY;
        for i in 1..100 {
            let v = bce(i as f64 / 100.0, 1.0);
            assert!(v < last);
            last = v;
        }
        assert!(bce(0.0f64, 1.0).is_finite());
    }

    #[test]
    fn lr_schedule() {
        let cfg = TrainingConfig::preset(Mode::Baseline, Profile::Paper);
        assert_eq!(lr_at(0, &cfg), 2e-4);
        assert_eq!(lr_at(2999, &cfg), 2e-4);
        assert_eq!(lr_at(3000, &cfg), 1e-4);
        assert_eq!(lr_at(6000, &cfg), 5e-5);
    }

    fn tiny_cfg(mode: Mode) -> TrainingConfig {
        let mut cfg = TrainingConfig::preset(mode, Profile::Desk);
        cfg.image_side = 16;
        cfg.epochs = 2;
        cfg.trigger.patch_side = 4;
        cfg
    }

    fn tiny_image() -> ImageTensor<f32> {
        let data = (0..3 * 16 * 16).map(|i| ((i as f32) * 0.21).sin() * 0.8).collect();
        ImageTensor::new(Tensor::from_vec(&[3, 16, 16], data).unwrap()).unwrap()
    }

    #[test]
    fn steps_touch_only_their_network() {
        let cfg = tiny_cfg(Mode::Poisoned);
        let mut st = TrainState::<f32>::new(&cfg).unwrap();
        let x = tiny_image();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (z, f, zp) = (
            LatentVector::sample(&mut rng),
            FeatureVector::sample(&mut rng),
            PoisonLatent::sample(&mut rng),
        );

        let (g0, p0, d0) = (st.generator.clone(), st.poisoner.clone(), st.discriminator.clone());
        st.discriminator_step(&cfg, &x, &z, &f).unwrap();
        assert_eq!(st.generator, g0);
        assert_eq!(st.poisoner, p0);
        assert_ne!(st.discriminator, d0);

        let d1 = st.discriminator.clone();
        st.generator_step(&cfg, &x, &z, &f).unwrap();
        assert_eq!(st.discriminator, d1);
        assert_eq!(st.poisoner, p0);
        assert_ne!(st.generator, g0);

        let g1 = st.generator.clone();
        st.poisoner_step(&cfg, &x, &zp).unwrap();
        assert_eq!(st.discriminator, d1);
        assert_eq!(st.generator, g1);
        assert_ne!(st.poisoner, p0);
    }

    #[test]
    fn zero_poisoner_loss_is_adversarial_term_only() {
        let d = init_params::<f64>(NetworkId::Discriminator, 16, 1).unwrap();
        let p = ParamSet::<f64>::zeros(NetworkId::Poisoner, 16);
        let x = tiny_image().cast::<f64>();
        let zp = PoisonLatent::zeros();
        for sign in [1.0, -1.0] {
            let w = PoisonObjective {
                eps: 0.08,
                adv_sign: sign,
                lambda_stealth: 1.0,
                lambda_tv: 1e-3,
                lambda_hf: 1e-2,
            };
            let (loss, _) = poisoner_loss_grad(&p, &d, &x, &zp, &w).unwrap();
            assert_eq!((loss.stealth, loss.tv, loss.laplacian), (0.0, 0.0, 0.0));
            let prob = crate::networks::discriminator_forward(&d, &x).unwrap().prob;
            assert!((loss.total - sign * bce(prob, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn discriminator_loss_at_one_half_is_ln2() {
        let d = ParamSet::<f64>::zeros(NetworkId::Discriminator, 16);
        let g = init_params::<f64>(NetworkId::Generator, 16, 0).unwrap();
        let x = tiny_image().cast::<f64>();
        let (z, f) = (LatentVector::zeros(), FeatureVector::zeros());
        let l = discriminator_loss(&d, &g, &x, &z, &f).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let lg = generator_loss(&g, &d, &x, &z, &f).unwrap();
        assert!((lg - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = tiny_cfg(Mode::Baseline);
        assert!(matches!(train(&cfg, &[], None), Err(Error::EmptyDataset)));
    }

    #[test]
    fn baseline_never_poisons() {
        let mut cfg = tiny_cfg(Mode::Baseline);
        cfg.epochs = 3;
        let out = train(&cfg, &[tiny_image()], None).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.records.iter().all(|r| !r.poisoned_this_epoch && r.loss_p == 0.0));
        assert_eq!(out.samples.poisoned_fraction(), 0.0);
    }
}

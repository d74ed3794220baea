use gan_poison::networks::{poisoner_forward, PoisonLatent};
use gan_poison::tensor::Tensor;
use gan_poison::training::{train, TrainState};
use gan_poison::{ImageTensor, Mode, Profile, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg(mode: Mode) -> TrainingConfig {
    let mut cfg = TrainingConfig::preset(mode, Profile::Desk);
    cfg.image_side = 16;
    cfg.trigger.patch_side = 4;
    cfg
}

fn images(n: usize, seed: u64) -> Vec<ImageTensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let data = (0..3 * 16 * 16).map(|_| rng.random_range(-0.8f32..0.8)).collect();
            ImageTensor::new(Tensor::from_vec(&[3, 16, 16], data).unwrap()).unwrap()
        })
        .collect()
}

#[test]
fn single_epoch_smoke() {
    let mut cfg = small_cfg(Mode::Poisoned);
    cfg.epochs = 1;
    let out = train(&cfg, &images(1, 0), None).unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    assert!(r.loss_d.is_finite() && r.loss_g.is_finite() && r.loss_p.is_finite());
    assert_eq!(r.lr_current, 2e-4);
}

#[test]
fn poisoned_fraction_matches_rate() {
    let mut cfg = small_cfg(Mode::Poisoned);
    cfg.epochs = 50;
    let out = train(&cfg, &images(10, 1), None).unwrap();
    let n = out.samples.records.len() as f64;
    assert_eq!(n, 500.0);
    let sigma = (0.3f64 * 0.7 / n).sqrt();
    let frac = out.samples.poisoned_fraction();
    assert!((frac - 0.3).abs() <= 3.0 * sigma, "fraction {frac}");
    assert!(out.samples.records.iter().all(|s| s.poisoned == s.delta.is_some()));
}

#[test]
fn huge_stealth_weight_drives_delta_to_zero() {
    let mut cfg = small_cfg(Mode::Poisoned);
    cfg.lambda_stealth = 1e4;
    // Adam normalizes the gradient scale, so progress per step is set by lr.
    cfg.lr = 1e-3;
    let mut st = TrainState::<f32>::new(&cfg).unwrap();
    let x = images(1, 2).remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probe = PoisonLatent::sample(&mut rng);
    let before = poisoner_forward(&st.poisoner, &x, &probe, 0.08).unwrap().max_abs();
    for _ in 0..200 {
        let zp = PoisonLatent::sample(&mut rng);
        st.poisoner_step(&cfg, &x, &zp).unwrap();
    }
    let after = poisoner_forward(&st.poisoner, &x, &probe, 0.08).unwrap().max_abs();
    assert!(after < 0.1 * 0.08, "max |delta| {before} -> {after}");
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(Mode::Poisoned);
    cfg.epochs = 4;
    cfg.checkpoint_every = 2;
    let data = images(1, 3);
    let full = train(&cfg, &data, Some(dir.path())).unwrap();
    let (loaded_cfg, state) = gan_poison::checkpoint::load(&full.checkpoints[0]).unwrap();
    assert_eq!(state.epoch, 2);
    let resumed = gan_poison::training::train_with(&loaded_cfg, &data, None, state, |_| {}).unwrap();
    assert_eq!(resumed.state.generator, full.state.generator);
    assert_eq!(resumed.state.poisoner, full.state.poisoner);
    assert_eq!(resumed.state.history, full.state.history);
}

#[test]
fn wrong_image_side_is_rejected() {
    let cfg = small_cfg(Mode::Baseline);
    let big = ImageTensor::<f32>::filled(32, 0.0).unwrap();
    assert!(train(&cfg, &[big], None).is_err());
}

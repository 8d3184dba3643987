mod common;

use std::sync::Arc;

use common::rng;
use ganvo_core::data::{generate_synthetic_dataset, make_batches, Batch, SceneConfig};
use ganvo_core::networks::{load_checkpoint, GanVo};
use ganvo_core::tensor::{Adam, AdamConfig};
use ganvo_core::training::{
    estimate_beta, gan_losses, total_loss, train_step, Beta, LossReport, Optimizers, TrainConfig,
    Trainer, CHECKPOINT_DIR, FINAL_CHECKPOINT, LOSS_CSV,
};
use ganvo_core::{Error, Graph, Tensor};
use rand::Rng;

fn toy_batch(seed: u64) -> Batch {
    let ds = generate_synthetic_dataset(seed, &SceneConfig::toy(), 1).unwrap();
    make_batches(&ds, 3, 4, None)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
}

fn gan_values(real: &[f64], fake: &[f64]) -> (f64, f64) {
    let mut g = Graph::new();
    let r = g.constant(Tensor::new([real.len()], real.to_vec()).unwrap());
    let f = g.constant(Tensor::new([fake.len()], fake.to_vec()).unwrap());
    let (d, a) = gan_losses(&mut g, r, f).unwrap();
    (g.value(d).item().unwrap(), g.value(a).item().unwrap())
}

#[test]
fn gan_losses_limits() {
    let (d, _) = gan_values(&[0.5; 3], &[0.5; 3]);
    assert!((d - 1.3862943611198906).abs() < 1e-12);
    let (d, a) = gan_values(&[1.0 - 1e-7], &[1e-7]);
    assert!(d < 1e-6, "{d}");
    assert!(a > 16.0);
}

#[test]
fn gan_losses_match_bce_oracle() {
    let mut r = rng(41);
    for _ in 0..50 {
        let real: Vec<f64> = (0..6).map(|_| r.random_range(0.01..0.99)).collect();
        let fake: Vec<f64> = (0..6).map(|_| r.random_range(0.01..0.99)).collect();
        let mut d_oracle = 0.0;
        let mut a_oracle = 0.0;
        for i in 0..6 {
            d_oracle -= (real[i].ln() + (1.0 - fake[i]).ln()) / 6.0;
            a_oracle -= fake[i].ln() / 6.0;
        }
        let (d, a) = gan_values(&real, &fake);
        assert!((d - d_oracle).abs() < 1e-12 && (a - a_oracle).abs() < 1e-12);
    }
}

#[test]
fn estimate_beta_matches_window_oracle() {
    assert_eq!(estimate_beta(&[4.0; 100], &[2.0; 100], 100).unwrap(), 2.0);
    assert_eq!(estimate_beta(&[0.7; 10], &[0.7; 10], 10).unwrap(), 1.0);
    let mut r = rng(43);
    let lg: Vec<f64> = (0..150).map(|_| r.random_range(0.01..3.0)).collect();
    let ld: Vec<f64> = (0..150).map(|_| r.random_range(0.01..3.0)).collect();
    let window = 40;
    let oracle = lg[110..].iter().sum::<f64>() / ld[110..].iter().sum::<f64>();
    let beta = estimate_beta(&lg, &ld, window).unwrap();
    assert!((beta - oracle).abs() < 1e-12);
    let doubled = |v: &[f64]| v.iter().map(|x| 2.0 * x).collect::<Vec<_>>();
    let beta2 = estimate_beta(&doubled(&lg), &doubled(&ld), window).unwrap();
    assert!((beta - beta2).abs() < 1e-12);
    assert!(matches!(
        estimate_beta(&[1.0; 5], &[1e-12; 5], 5),
        Err(Error::DiscriminatorCollapsed(_))
    ));
}

#[test]
fn live_step_total_is_recomputable() {
    let cfg = TrainConfig::toy();
    let mut model = GanVo::new(cfg.arch.clone(), 3).unwrap();
    let mut opt = Optimizers::new(&cfg, &model);
    let beta = 0.37;
    let r = train_step(&mut model, &mut opt, &toy_batch(1), &cfg, beta, 1).unwrap();
    assert!((r.l_final - (r.l_g + beta * r.l_d)).abs() < 1e-12);
    assert!(r.is_finite() && r.l_g >= 0.0);
    assert!(r.mask_fill > 0.5 && r.mask_fill <= 1.0);

    let mut g = Graph::new();
    let a = g.constant(Tensor::scalar(r.l_g));
    let b = g.constant(Tensor::scalar(r.l_d));
    let t = total_loss(&mut g, a, b, beta).unwrap();
    assert!((g.value(t).item().unwrap() - r.l_final).abs() < 1e-12);
}

fn run_steps(cfg: &TrainConfig, seed: u64, steps: u64) -> (Vec<LossReport>, GanVo) {
    let mut model = GanVo::new(cfg.arch.clone(), seed).unwrap();
    let mut opt = Optimizers::new(cfg, &model);
    let batch = toy_batch(2);
    let reports = (1..=steps)
        .map(|s| train_step(&mut model, &mut opt, &batch, cfg, 0.1, s).unwrap())
        .collect();
    (reports, model)
}

#[test]
fn steps_are_deterministic() {
    let cfg = TrainConfig::toy();
    let (a, ma) = run_steps(&cfg, 5, 4);
    let (b, mb) = run_steps(&cfg, 5, 4);
    assert_eq!(a, b);
    for ((_, na), (_, nb)) in ma.nets().iter().zip(mb.nets().iter()) {
        for ((_, ta), (_, tb)) in na.params.iter().zip(nb.params.iter()) {
            assert_eq!(ta, tb);
        }
    }
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::toy()
    };
    let before = GanVo::new(cfg.arch.clone(), 6).unwrap();
    let (reports, after) = run_steps(&cfg, 6, 3);
    for r in &reports[1..] {
        assert_eq!(
            (r.l_g, r.l_d, r.d_loss),
            (reports[0].l_g, reports[0].l_d, reports[0].d_loss)
        );
    }
    for ((_, na), (_, nb)) in before.nets().iter().zip(after.nets().iter()) {
        for ((_, ta), (_, tb)) in na.params.iter().zip(nb.params.iter()) {
            assert_eq!(ta, tb);
        }
    }
}

fn param_snapshot(model: &GanVo) -> Vec<(&'static str, Vec<Tensor>)> {
    model
        .nets()
        .iter()
        .map(|(name, net)| (*name, net.params.iter().map(|(_, t)| t.clone()).collect()))
        .collect()
}

#[test]
fn updates_touch_only_their_own_models() {
    let cfg = TrainConfig::toy();
    let batch = toy_batch(3);
    let frozen = AdamConfig {
        learning_rate: 0.0,
        ..cfg.adam()
    };
    // discriminator frozen: only E, G, P move
    let mut model = GanVo::new(cfg.arch.clone(), 8).unwrap();
    let mut opt = Optimizers::new(&cfg, &model);
    opt.discriminator = Adam::new(frozen, &model.discriminator.net.params);
    let before = param_snapshot(&model);
    train_step(&mut model, &mut opt, &batch, &cfg, 0.1, 1).unwrap();
    for ((name, b), (_, a)) in before.iter().zip(param_snapshot(&model)) {
        assert_eq!(*name == "discriminator", *b == a, "{name}");
    }
    // reconstruction models frozen: only D moves
    let mut model = GanVo::new(cfg.arch.clone(), 8).unwrap();
    let mut opt = Optimizers::new(&cfg, &model);
    opt.encoder = Adam::new(frozen, &model.encoder.net.params);
    opt.generator = Adam::new(frozen, &model.generator.net.params);
    opt.pose = Adam::new(frozen, &model.pose.net.params);
    let before = param_snapshot(&model);
    train_step(&mut model, &mut opt, &batch, &cfg, 0.1, 1).unwrap();
    for ((name, b), (_, a)) in before.iter().zip(param_snapshot(&model)) {
        assert_eq!(*name != "discriminator", *b == a, "{name}");
    }
}

#[test]
fn non_finite_parameter_aborts_with_step() {
    let cfg = TrainConfig::toy();
    let mut model = GanVo::new(cfg.arch.clone(), 9).unwrap();
    let id = model.encoder.net.params.ids().next().unwrap();
    model.encoder.net.params.get_mut(id).data_mut()[0] = f64::NAN;
    let mut opt = Optimizers::new(&cfg, &model);
    let err = train_step(&mut model, &mut opt, &toy_batch(1), &cfg, 0.1, 17).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
    assert!(err.to_string().contains("step 17"), "{err}");
}

#[test]
fn mismatched_batch_is_a_config_error() {
    let cfg = TrainConfig::toy();
    let mut model = GanVo::new(cfg.arch.clone(), 1).unwrap();
    let mut opt = Optimizers::new(&cfg, &model);
    let ds = generate_synthetic_dataset(1, &SceneConfig::toy(), 1).unwrap();
    let five = make_batches(&ds, 5, 2, None)
        .unwrap()
        .next()
        .unwrap()
        .unwrap();
    assert!(matches!(
        train_step(&mut model, &mut opt, &five, &cfg, 0.1, 1),
        Err(Error::Config(_))
    ));
}

#[test]
fn trainer_writes_csv_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        steps: 6,
        checkpoint_every: 3,
        beta: Beta::Auto,
        beta_window: 2,
        ..TrainConfig::toy()
    };
    let ds = Arc::new(generate_synthetic_dataset(4, &SceneConfig::toy(), 2).unwrap());
    let mut trainer = Trainer::new(cfg).unwrap();
    let mut seen = 0;
    let reports = trainer.run(ds, Some(dir.path()), |_| seen += 1).unwrap();
    assert_eq!((reports.len(), seen), (6, 6));
    let csv = std::fs::read_to_string(dir.path().join(LOSS_CSV)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,L_g,L_d,d_loss,L_final,mask_fill");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("1,"));
    for step in [3, 6] {
        let p = dir
            .path()
            .join(CHECKPOINT_DIR)
            .join(format!("step_{step:06}.ckpt"));
        assert_eq!(load_checkpoint(&p).unwrap().1, step);
    }
    let (model, step) = load_checkpoint(dir.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(step, 6);
    assert_eq!(model.arch, trainer.model.arch);
    // auto balance re-estimated every two steps from the recorded losses
    let expect = (reports[4].l_g + reports[5].l_g) / (reports[4].l_d + reports[5].l_d);
    assert!((trainer.beta.current() - expect).abs() < 1e-12);
}

#[test]
fn trainer_rejects_wrong_frame_size() {
    let mut trainer = Trainer::new(TrainConfig::toy()).unwrap();
    let ds =
        Arc::new(generate_synthetic_dataset(1, &SceneConfig::preset("plane").unwrap(), 1).unwrap());
    assert!(matches!(
        trainer.run(ds, None, |_| {}),
        Err(Error::Config(_))
    ));
}

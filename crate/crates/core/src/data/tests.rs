use super::*;
use crate::imageio::PlanarImage;
use crate::metrics::psnr_values;
use crate::model::{BackboneConfig, MultiExitSr, Stage};
use crate::numerics::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn texture(h: usize, w: usize, phase: f32) -> PlanarImage {
    PlanarImage::from_fn(h, w, |c, y, x| {
        0.5 + 0.35 * ((x as f32 * 0.9 + phase).sin() * (y as f32 * 0.6 + c as f32).cos())
    })
}

fn small_corpus(n: usize) -> Corpus {
    let imgs = (0..n)
        .map(|i| (format!("{i}"), texture(32, 32, i as f32)))
        .collect();
    Corpus::from_hr_images(imgs, 2).unwrap()
}

fn small_cfg(stage: Stage, steps: usize) -> TrainConfig {
    TrainConfig {
        stage,
        epochs: 1,
        steps_per_epoch: steps,
        lr: 1e-3,
        lr_decay_epoch: 1,
        batch_size: 2,
        hr_patch: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn augmentation_laws() {
    let img = texture(6, 6, 0.3);
    assert_eq!(Augmentation::default().apply(&img), img);
    assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    let r4 = img.rotate90().rotate90().rotate90().rotate90();
    assert_eq!(r4, img);
    let draws = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..16).map(|_| Augmentation::draw(&mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draws(4), draws(4));
    let lr = texture(3, 3, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..8 {
        let (h, l) = augment(&img, &lr, &mut rng);
        assert_eq!(h.height(), 6);
        assert_eq!(l.height(), 3);
    }
}

#[test]
fn lr_schedule_halves_once() {
    let cfg = TrainConfig {
        lr: 1e-4,
        lr_decay_epoch: 200,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.lr_at(0), 1e-4);
    assert_eq!(cfg.lr_at(199), 1e-4);
    assert_eq!(cfg.lr_at(200), 5e-5);
    assert_eq!(cfg.lr_at(299), 5e-5);
}

#[test]
fn config_validation() {
    let mut cfg = TrainConfig {
        lambda: -1.0,
        ..TrainConfig::default()
    };
    assert!(cfg.validate().is_err());
    cfg.lambda = 1.0;
    cfg.hr_patch = 47;
    assert!(cfg.validate().is_err());
}

#[test]
fn ic_targets_match_recomputation() {
    let model = MultiExitSr::build(BackboneConfig::tiny(2), 3).unwrap();
    let corpus = small_corpus(2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (lr, hr) = sample_batch(&corpus, 3, 16, true, &mut rng).unwrap();
    let t = compute_ic_targets(&model, &lr, &hr).unwrap();
    assert_eq!(t.psnr.len(), 5);
    assert_eq!(t.targets.len(), 4);

    let state = model.head_state(&lr).unwrap();
    let mut outs = vec![model.tail(&state.feature).unwrap()];
    outs.extend(model.forward_all_exits(&lr).unwrap().outputs);
    let n = outs[0].numel() / 3;
    for b in 0..3 {
        let p: Vec<f64> = outs
            .iter()
            .map(|o| psnr_values(&o.data()[b * n..(b + 1) * n], &hr.data()[b * n..(b + 1) * n]))
            .collect();
        for j in 1..5 {
            let expect = (p[j] - p[j - 1]).tanh();
            assert!((t.targets[j - 1][b] - expect).abs() < 1e-9);
            assert!(expect > -1.0 && expect < 1.0);
        }
    }
}

#[test]
fn identical_exits_give_zero_targets() {
    let mut cfg = BackboneConfig::tiny(2);
    cfg.residual_scaling = 0.0;
    let model = MultiExitSr::build(cfg, 3).unwrap();
    let corpus = small_corpus(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (lr, hr) = sample_batch(&corpus, 2, 16, false, &mut rng).unwrap();
    let t = compute_ic_targets(&model, &lr, &hr).unwrap();
    assert!(t.targets.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn target_computation_leaves_no_gradients() {
    let model = MultiExitSr::build(BackboneConfig::tiny(2), 3).unwrap();
    let lr = Tensor::full(&[1, 3, 8, 8], 0.3);
    let hr = Tensor::full(&[1, 3, 16, 16], 0.3);
    let t = compute_ic_targets(&model, &lr, &hr).unwrap();
    let x = t.target_tensor(1).unwrap();
    assert!(!x.requires_grad());
}

#[test]
fn multiexit_loss_is_sum_of_exit_losses() {
    let model = MultiExitSr::build(BackboneConfig::tiny(2), 5).unwrap();
    let corpus = small_corpus(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (lr, hr) = sample_batch(&corpus, 2, 16, false, &mut rng).unwrap();
    let obj = objective(&model, &lr, &hr, &small_cfg(Stage::MultiExit, 1)).unwrap();
    let expect: f64 = model
        .forward_all_exits(&lr)
        .unwrap()
        .outputs
        .iter()
        .map(|y| {
            y.data()
                .iter()
                .zip(hr.data())
                .map(|(a, b)| f64::from((a - b).abs()))
                .sum::<f64>()
                / y.numel() as f64
        })
        .sum();
    assert!((obj.l_m - expect).abs() < 1e-5);
}

#[test]
fn single_exit_multiexit_equals_base_objective() {
    let mut cfg = BackboneConfig::tiny(2);
    cfg.exit_interval = cfg.num_blocks;
    let model = MultiExitSr::build(cfg, 5).unwrap();
    let corpus = small_corpus(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (lr, hr) = sample_batch(&corpus, 2, 16, false, &mut rng).unwrap();
    let a = objective(&model, &lr, &hr, &small_cfg(Stage::MultiExit, 1)).unwrap();
    let b = objective(&model, &lr, &hr, &small_cfg(Stage::Base, 1)).unwrap();
    assert_eq!(a.l_m, b.l_m);
}

fn sr_grads(model: &mut MultiExitSr, obj: &Objective) -> Vec<(String, Vec<f32>)> {
    for p in model.parameters_mut() {
        p.zero_grad();
    }
    accumulate_gradients(model, obj).unwrap();
    model
        .parameters()
        .iter()
        .filter(|p| !p.name().starts_with("regressor."))
        .map(|p| (p.name().to_string(), p.grad().to_vec()))
        .collect()
}

#[test]
fn zero_lambda_joint_matches_multiexit_gradients() {
    let mut model = MultiExitSr::build(BackboneConfig::tiny(2), 6).unwrap();
    model.stage = Stage::MultiExit;
    let corpus = small_corpus(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (lr, hr) = sample_batch(&corpus, 2, 16, false, &mut rng).unwrap();
    let me = objective(&model, &lr, &hr, &small_cfg(Stage::MultiExit, 1)).unwrap();
    let ga = sr_grads(&mut model, &me);
    let mut jcfg = small_cfg(Stage::Joint, 1);
    jcfg.lambda = 0.0;
    let joint = objective(&model, &lr, &hr, &jcfg).unwrap();
    let gb = sr_grads(&mut model, &joint);
    assert_eq!(ga, gb);
}

#[test]
fn frozen_joint_step_touches_only_regressor() {
    let mut model = MultiExitSr::build(BackboneConfig::tiny(2), 7).unwrap();
    model.stage = Stage::MultiExit;
    let before = model.clone();
    let mut cfg = small_cfg(Stage::Joint, 1);
    cfg.freeze_sr = true;
    train(&mut model, &small_corpus(2), &cfg, |_| {}).unwrap();
    for (a, b) in model.parameters().iter().zip(before.parameters()) {
        if a.name().starts_with("regressor.") {
            assert_ne!(a.data(), b.data(), "{} did not move", a.name());
        } else {
            assert_eq!(a.data(), b.data(), "{} moved", a.name());
        }
    }
}

#[test]
fn stage_order_and_empty_data_are_enforced() {
    let mut model = MultiExitSr::build(BackboneConfig::tiny(2), 7).unwrap();
    let err = train(&mut model, &small_corpus(1), &small_cfg(Stage::Joint, 1), |_| {});
    assert!(matches!(err, Err(crate::Error::Config(_))));
    let empty = Corpus {
        pairs: Vec::new(),
        scale: 2,
    };
    let err = train(&mut model, &empty, &small_cfg(Stage::MultiExit, 1), |_| {});
    assert!(matches!(err, Err(crate::Error::Data(_))));
}

#[test]
fn training_is_deterministic_and_logs_every_step() {
    let run = || {
        let mut m = MultiExitSr::build(BackboneConfig::tiny(2), 8).unwrap();
        let r = train(&mut m, &small_corpus(3), &small_cfg(Stage::MultiExit, 4), |_| {}).unwrap();
        (m.to_checkpoint_bytes(), r)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(ra.log.len(), 4);
    let mut csv = Vec::new();
    ra.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("step,epoch,L_m,L_ic,lr\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn one_sample_overfit_smoke() {
    let corpus = Corpus::from_hr_images(vec![("a".into(), texture(16, 16, 0.2))], 2).unwrap();
    let mut model = MultiExitSr::build(BackboneConfig::tiny(2), 9).unwrap();
    let cfg = TrainConfig {
        augment: false,
        batch_size: 1,
        ..small_cfg(Stage::MultiExit, 500)
    };
    let r = train(&mut model, &corpus, &cfg, |_| {}).unwrap();
    let first = r.log[0].l_m;
    let last = r.log.last().unwrap().l_m;
    assert!(last <= 0.1 * first, "{first} -> {last}");
}

#[test]
fn corpus_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("imgs");
    std::fs::create_dir(&corpus_dir).unwrap();
    texture(20, 22, 0.0).save_png(corpus_dir.join("b.png")).unwrap();
    texture(17, 16, 1.0).save_png(corpus_dir.join("a.png")).unwrap();
    let idx = DatasetIndex::scan(&corpus_dir, 2, Split::Train).unwrap();
    assert!(idx.entries[0].0.ends_with("a.png"));
    let first = idx.load().unwrap();
    assert!(lr_cache_dir(&corpus_dir, 2).join("a.png").exists());
    let second = idx.load().unwrap();
    for (p, q) in first.pairs.iter().zip(&second.pairs) {
        assert_eq!(p.lr, q.lr);
        assert_eq!(p.hr.height(), p.lr.height() * 2);
    }
    assert_eq!(first.pairs[0].hr.height(), 16);
    assert!(DatasetIndex::scan(&dir.path().join("missing"), 2, Split::Train).is_err());
}

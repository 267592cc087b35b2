use super::*;
use crate::datagen::{generate, GenConfig};
use rand::Rng;

fn tiny(ablate: Ablation) -> ModelConfig {
    ModelConfig::Fista(FistaConfig {
        t: 3,
        embed: 5,
        gru_hidden: 8,
        attn_dim: 4,
        film_hidden: 6,
        head_hidden: vec![9, 7],
        ablate,
    })
}

fn tiny_mlp() -> ModelConfig {
    ModelConfig::Mlp(MlpConfig {
        t: 3,
        hidden: vec![10, 6],
    })
}

fn random_inputs(rng: &mut impl Rng, t: usize) -> (Vec<f64>, [f64; POSE_DIM], [f64; POSE_DIM]) {
    let h = (0..t * FRAME_DIM).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let e = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
    let l = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
    (h, e, l)
}

fn loss(model: &Model, h: &[f64], e: &[f64], l: &[f64]) -> f64 {
    let mut g = vec![0.0; model.params.len()];
    model.loss_and_grad(h, e, l, 1.0, &mut g).unwrap()
}

/// Worst per-group relative error of the analytic gradient vs central
/// differences over several random inputs.
fn max_group_error(config: ModelConfig, seed: u64) -> (f64, String) {
    let mut model = Model::new(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    // Non-zero biases so every path carries signal.
    for p in model.params.iter_mut() {
        *p += rng.gen_range(-0.1..0.1);
    }
    let t = model.history_len();
    let mut worst = (0.0, String::new());
    for _ in 0..10 {
        let (h, e, l) = random_inputs(&mut rng, t);
        let mut analytic = vec![0.0; model.params.len()];
        model.loss_and_grad(&h, &e, &l, 1.0, &mut analytic).unwrap();
        let step = 1e-5;
        for group in model.layout().groups().to_vec() {
            let mut num = Vec::with_capacity(group.len());
            for i in group.range() {
                let orig = model.params[i];
                model.params[i] = orig + step;
                let up = loss(&model, &h, &e, &l);
                model.params[i] = orig - step;
                let down = loss(&model, &h, &e, &l);
                model.params[i] = orig;
                num.push((up - down) / (2.0 * step));
            }
            let ana = &analytic[group.range()];
            let diff: f64 = ana.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            // The key bias shifts both attention scores equally, so its true
            // gradient is zero; the floor keeps such groups from dividing noise
            // by noise.
            let scale: f64 = ana.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-6);
            let rel = diff / scale;
            if rel > worst.0 {
                worst = (rel, group.name.clone());
            }
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_for_every_ablation() {
    for (i, a) in Ablation::ALL.into_iter().enumerate() {
        let (err, group) = max_group_error(tiny(a), i as u64);
        assert!(err < 1e-4, "{a}: group {group} relative error {err}");
    }
}

#[test]
fn attention_key_bias_has_no_effect() {
    let mut model = Model::new(tiny(Ablation::None), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (h, e, _) = random_inputs(&mut rng, 3);
    let (a, _) = model.forward_normalized(&h, &e).unwrap();
    let key_bias = model.layout().groups().iter().find(|g| g.name == "attn.key.bias").unwrap().range();
    for p in &mut model.params[key_bias] {
        *p += 0.7;
    }
    let (b, _) = model.forward_normalized(&h, &e).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let (err, group) = max_group_error(tiny_mlp(), 7);
    assert!(err < 1e-4, "group {group} relative error {err}");
}

#[test]
fn ablations_drop_their_parameters() {
    let names = |a| {
        Model::zeros(tiny(a))
            .unwrap()
            .layout()
            .groups()
            .iter()
            .map(|g| g.name.clone())
            .collect::<Vec<_>>()
    };
    let full = names(Ablation::None);
    assert!(full.iter().any(|n| n.starts_with("gru.")));
    assert!(full.iter().any(|n| n.starts_with("attn.")));
    assert!(full.iter().any(|n| n.starts_with("film.")));
    assert!(!names(Ablation::NoTemporal).iter().any(|n| n.starts_with("gru.")));
    assert!(!names(Ablation::NoSpatial).iter().any(|n| n.starts_with("attn.")));
    assert!(!names(Ablation::NoFilm).iter().any(|n| n.starts_with("film.")));
}

#[test]
fn parameter_count_depends_only_on_config() {
    let a = Model::new(ModelConfig::Fista(FistaConfig::default()), 1).unwrap();
    let b = Model::new(ModelConfig::Fista(FistaConfig::default()), 2).unwrap();
    assert_eq!(a.param_count(), b.param_count());
    assert_eq!(a.param_count(), a.layout().len());
    assert_ne!(a.params, b.params);
}

#[test]
fn zero_model_outputs_head_bias() {
    for config in [tiny(Ablation::None), tiny(Ablation::NoFilm), tiny_mlp()] {
        let mut model = Model::zeros(config).unwrap();
        let last = model.layout().groups().last().unwrap().clone();
        assert!(last.name.ends_with(".bias") && last.len() == POSE_DIM);
        let bias = [0.1, -0.2, 0.3, 0.9, -0.1, 0.05, 0.0];
        model.params[last.range()].copy_from_slice(&bias);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (h, e, _) = random_inputs(&mut rng, 3);
        let (y, _) = model.forward_normalized(&h, &e).unwrap();
        assert_eq!(y, bias);
    }
}

#[test]
fn zero_residual_gives_zero_gradient_and_doubling_doubles() {
    let model = Model::new(tiny(Ablation::None), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (h, e, l) = random_inputs(&mut rng, 3);
    let (y, _) = model.forward_normalized(&h, &e).unwrap();

    let mut g = vec![0.0; model.params.len()];
    model.loss_and_grad(&h, &e, &y, 1.0, &mut g).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));

    let doubled: [f64; POSE_DIM] = std::array::from_fn(|i| y[i] - 2.0 * (y[i] - l[i]));
    let mut g1 = vec![0.0; model.params.len()];
    let mut g2 = vec![0.0; model.params.len()];
    model.loss_and_grad(&h, &e, &l, 1.0, &mut g1).unwrap();
    model.loss_and_grad(&h, &e, &doubled, 1.0, &mut g2).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let model = Model::new(tiny(Ablation::None), 0).unwrap();
    let err = model.forward_normalized(&[0.0; 10], &[0.0; 7]).unwrap_err();
    assert!(matches!(err, FistaError::DimensionMismatch { expected: 42, got: 10 }));
    let err = model.forward_normalized(&[0.0; 42], &[0.0; 6]).unwrap_err();
    assert!(matches!(err, FistaError::DimensionMismatch { expected: 7, got: 6 }));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = FistaConfig::default();
    c.t = 0;
    assert!(Model::zeros(ModelConfig::Fista(c)).is_err());
    let mut c = FistaConfig::default();
    c.head_hidden = vec![4, 0];
    assert!(Model::zeros(ModelConfig::Fista(c)).is_err());
    assert!(Model::zeros(ModelConfig::Mlp(MlpConfig { t: 2, hidden: vec![0] })).is_err());
}

#[test]
fn history_order_matters() {
    let model = Model::new(tiny(Ablation::None), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (h, e, _) = random_inputs(&mut rng, 3);
    let rev: Vec<f64> = h.chunks(FRAME_DIM).rev().flatten().copied().collect();
    let (a, _) = model.forward_normalized(&h, &e).unwrap();
    let (b, _) = model.forward_normalized(&rev, &e).unwrap();
    assert_ne!(a, b);
}

fn small_dataset(n: usize) -> Vec<crate::datagen::Trajectory> {
    generate(&GenConfig {
        seed: 3,
        n_traj: n,
        duration: 1.0,
        ..GenConfig::default()
    })
    .unwrap()
}

#[test]
fn normalizer_roundtrip() {
    let data = small_dataset(4);
    let windows = crate::datagen::window(&data, 2);
    let norm = Normalizer::fit(&windows).unwrap();
    for w in windows.iter().take(20) {
        let back = norm.denorm_label(&norm.label(&w.label_elbow));
        for (a, b) in back.iter().zip(&w.label_elbow) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    assert!(matches!(Normalizer::fit(&[]), Err(FistaError::EmptyDataset)));
}

#[test]
fn normalizer_floors_constant_dimensions() {
    let w = SampleWindow {
        traj: 0,
        index: 1,
        history: vec![0.5; FRAME_DIM],
        target_ee: [1.0; 7],
        label_elbow: [2.0; 7],
    };
    let norm = Normalizer::fit([&w, &w]).unwrap();
    assert_eq!(norm.frame_std, [1.0; FRAME_DIM]);
    assert_eq!(norm.label(&w.label_elbow), [0.0; 7]);
}

#[test]
fn history_buffer_pads_and_rolls() {
    let pose = |x: f64| Pose::from_translation(nalgebra::Vector3::new(x, 0.0, 0.0));
    let mut buf = HistoryBuffer::new(3);
    assert!(matches!(buf.window(3), Err(FistaError::ColdStart { have: 0, need: 3 })));
    buf.push(&pose(1.0), &pose(-1.0));
    let w = buf.window(3).unwrap();
    assert_eq!(w.len(), 3 * FRAME_DIM);
    assert!(w.chunks(FRAME_DIM).all(|f| f[0] == 1.0 && f[7] == -1.0));

    let mut strict = HistoryBuffer::new(3).with_padding(false);
    strict.push(&pose(1.0), &pose(-1.0));
    assert!(matches!(strict.window(3), Err(FistaError::ColdStart { have: 1, need: 3 })));

    for x in 2..=4 {
        buf.push(&pose(x as f64), &pose(0.0));
    }
    assert_eq!(buf.len(), 3);
    let firsts: Vec<f64> = buf.window(3).unwrap().chunks(FRAME_DIM).map(|f| f[0]).collect();
    assert_eq!(firsts, [2.0, 3.0, 4.0]);
}

#[test]
fn predicted_quaternion_is_unit() {
    let model = Model::new(tiny(Ablation::None), 2).unwrap();
    let data = small_dataset(1);
    let mut buf = HistoryBuffer::new(3);
    for f in &data[0].frames[..3] {
        buf.push(&f.ee, &f.elbow);
    }
    let p = model.predict_elbow(&buf, &data[0].frames[3].ee).unwrap();
    assert!((p.rotation.norm() - 1.0).abs() < 1e-9);
}

#[test]
fn model_file_roundtrip_is_bit_exact() {
    for config in [tiny(Ablation::NoFilm), tiny_mlp(), ModelConfig::Fista(FistaConfig::default())] {
        let mut model = Model::new(config, 11).unwrap();
        model.normalizer.frame_mean[3] = 0.25;
        model.normalizer.label_std[6] = 3.5;
        let mut bytes = Vec::new();
        write_model(&mut bytes, &model).unwrap();
        let back = read_model(bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let (h, e, _) = random_inputs(&mut rng, model.history_len());
            let a = model.predict_raw(&h, &e).unwrap();
            let b = back.predict_raw(&h, &e).unwrap();
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }
}

#[test]
fn damaged_model_files_are_rejected() {
    let model = Model::new(tiny(Ablation::None), 1).unwrap();
    let mut bytes = Vec::new();
    write_model(&mut bytes, &model).unwrap();
    assert_eq!(&bytes[..4], MAGIC);

    for cut in [0, 3, 5, 20, bytes.len() - 1] {
        let err = read_model(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, FistaError::Format(_)), "cut {cut}: {err}");
    }

    let mut bumped = bytes.clone();
    bumped[4] += 1;
    assert!(matches!(
        read_model(bumped.as_slice()),
        Err(FistaError::VersionMismatch { found: 2, expected: 1 })
    ));

    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(read_model(flipped.as_slice()), Err(FistaError::Format(_))));

    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(read_model(magic.as_slice()), Err(FistaError::Format(_))));
}

fn quick(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        lr,
        epochs,
        batch: 16,
        seed: 5,
        val_fraction: 0.25,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_losses_constant() {
    let data = small_dataset(4);
    let model = Model::new(tiny(Ablation::None), 0).unwrap();
    let (_, report) = train(model, &data, &quick(3, 0.0)).unwrap();
    let first = report.epochs[0];
    for e in &report.epochs {
        assert!((e.train_mse - first.train_mse).abs() < 1e-12 * first.train_mse);
        assert_eq!(e.val_mse, first.val_mse);
    }
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let data = small_dataset(4);
    let run = || {
        let model = Model::new(tiny(Ablation::None), 0).unwrap();
        train(model, &data, &quick(6, 0.01)).unwrap()
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(r1, r2);
    assert_eq!(m1, m2);
    assert!(r1.best_val_mse < r1.epochs[0].val_mse);
    assert!(r1.epochs.last().unwrap().train_mse < r1.epochs[0].train_mse);
    let best = r1.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
    assert_eq!(best, r1.best_val_mse);
    assert_eq!(r1.epochs[r1.best_epoch - 1].val_mse, best);
}

#[test]
fn split_is_by_trajectory() {
    let data = small_dataset(5);
    let model = Model::new(tiny(Ablation::None), 0).unwrap();
    let (_, r) = train(model, &data, &quick(1, 0.0)).unwrap();
    assert_eq!(r.val_trajectories.len(), 1);
    assert_eq!(r.train_trajectories.len(), 4);
    let mut all: Vec<usize> = r.train_trajectories.iter().chain(&r.val_trajectories).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..5).collect::<Vec<_>>());
    let per_traj = data[0].frames.len() - 3;
    assert_eq!(r.train_windows, 4 * per_traj);
    assert_eq!(r.val_windows, per_traj);
}

#[test]
fn training_rejects_bad_input() {
    let data = small_dataset(2);
    let model = || Model::new(tiny(Ablation::None), 0).unwrap();
    assert!(matches!(train(model(), &data, &quick(0, 0.1)), Err(FistaError::InvalidTraining(_))));
    assert!(matches!(train(model(), &data[..1], &quick(1, 0.1)), Err(FistaError::EmptyDataset)));
    assert!(matches!(train(model(), &[], &quick(1, 0.1)), Err(FistaError::EmptyDataset)));
}

#[test]
fn learning_curve_csv() {
    let report = TrainingReport {
        epochs: vec![
            EpochStats { epoch: 1, train_mse: 0.5, val_mse: 0.25 },
            EpochStats { epoch: 2, train_mse: 0.125, val_mse: 0.375 },
        ],
        best_epoch: 1,
        best_val_mse: 0.25,
        train_trajectories: vec![],
        val_trajectories: vec![],
        train_windows: 0,
        val_windows: 0,
    };
    let mut out = Vec::new();
    report.write_curve(&mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "epoch,train_mse,val_mse\n1,0.5,0.25\n2,0.125,0.375\n"
    );
}

use hlik_core::datagen::{self, GenConfig};
use hlik_core::fista::{self, FistaConfig, HistoryBuffer, Model, ModelConfig, TrainConfig};

fn small_config() -> ModelConfig {
    ModelConfig::Fista(FistaConfig {
        t: 4,
        embed: 8,
        gru_hidden: 12,
        attn_dim: 4,
        film_hidden: 8,
        head_hidden: vec![16],
        ..FistaConfig::default()
    })
}

fn trained() -> (Vec<datagen::Trajectory>, Model) {
    let data = datagen::generate(&GenConfig {
        seed: 17,
        n_traj: 6,
        duration: 2.0,
        ..GenConfig::default()
    })
    .unwrap();
    let hyper = TrainConfig {
        lr: 0.05,
        epochs: 2,
        samples_per_epoch: Some(300),
        ..TrainConfig::default()
    };
    let (model, _) = fista::train(Model::new(small_config(), 3).unwrap(), &data, &hyper).unwrap();
    (data, model)
}

#[test]
fn saved_model_predicts_identically() {
    let (data, model) = trained();
    let mut bytes = Vec::new();
    fista::write_model(&mut bytes, &model).unwrap();
    let loaded = fista::read_model(bytes.as_slice()).unwrap();
    for w in datagen::window(&data, 4).iter().step_by(37) {
        let a = model.predict_raw(&w.history, &w.target_ee).unwrap();
        let b = loaded.predict_raw(&w.history, &w.target_ee).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn streaming_buffer_matches_dataset_windows() {
    let (data, model) = trained();
    let traj = data[0].as_right_arm();
    let windows: Vec<_> = datagen::window(&data[..1], 4);
    let mut buffer = HistoryBuffer::new(4);
    for (i, f) in traj.frames.iter().enumerate() {
        if i >= 4 {
            let w = &windows[i - 4];
            assert_eq!(w.index, i);
            let streamed = model.predict_elbow(&buffer, &f.ee).unwrap();
            let batch = model.predict_raw(&w.history, &w.target_ee).unwrap();
            // Equal up to the quaternion renormalization in the pose roundtrip.
            for (a, b) in datagen::pose_to_vec7(&streamed).iter().zip(batch) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        buffer.push(&f.ee, &f.elbow);
    }
}

#[test]
fn csv_roundtrip_keeps_training_windows() {
    let (data, _) = trained();
    let mut text = Vec::new();
    datagen::write_csv(&mut text, &data).unwrap();
    let back = datagen::read_csv(text.as_slice()).unwrap();
    assert_eq!(datagen::window(&data, 5), datagen::window(&back, 5));
}

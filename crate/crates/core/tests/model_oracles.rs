use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use versor::algebra::scalar_norm;
use versor::conformal::lift;
use versor::model::{
    gpa_forward, load_checkpoint, rollout, rra_forward, save_checkpoint, Composition, GpaParams,
    Matrix, ModelConfig, NBodyModel, RraCell, RraParams,
};
use versor::tasks::{
    gen_snake_dataset, generate_nbody, mcc, read_jsonl, snake_connectivity_algebraic, write_jsonl,
    NBodyConfig, SnakeLabel, SnakeSample, Trajectory,
};

fn identity32() -> Matrix {
    let mut m = Matrix::zeros(32, 32);
    for i in 0..32 {
        m.set(i, i, 1.0);
    }
    m
}

#[test]
fn attention_scores_are_negative_half_squared_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<[f64; 3]> = (0..6)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
        .collect();
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| lift(p).unwrap().multivector().coeffs().to_vec())
        .collect();
    let features = Matrix::from_rows(&rows).unwrap();
    let params = GpaParams {
        w_q: identity32(),
        w_k: identity32(),
        w_v: identity32(),
        gamma: 0.0,
    };
    let out = gpa_forward(&features, &params).unwrap();
    for i in 0..6 {
        let mut row_sum = 0.0;
        for j in 0..6 {
            let d2: f64 = pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!((out.scalar_map.get(i, j) + 0.5 * d2).abs() < 1e-10);
            row_sum += out.attention.get(i, j);
        }
        assert!((row_sum - 1.0).abs() < 1e-12);
        // With gamma = 0 the nearest key is the point itself.
        let best = (0..6)
            .max_by(|&a, &b| out.attention.get(i, a).total_cmp(&out.attention.get(i, b)))
            .unwrap();
        assert_eq!(best, i);
    }
}

#[test]
fn ten_thousand_steps_stay_on_the_manifold() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = RraParams::init(6, 4, &mut rng).unwrap();
    let mut cell = RraCell::new(&params).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y = cell.step(&x).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
        worst = worst.max((scalar_norm(&cell.state().psi) - 1.0).abs());
    }
    assert_eq!(cell.state().step, 10_000);
    assert!(worst < 1e-9, "worst manifold deviation {worst:e}");
    assert!((cell.state().psi.coeff_norm() - 1.0).abs() < 1e-9);
}

#[test]
fn streaming_matches_batch_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = RraParams::init(3, 2, &mut rng).unwrap();
    let features =
        Matrix::from_vec(50, 3, (0..150).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let batch = rra_forward(&features, &params).unwrap();
    let mut cell = RraCell::new(&params).unwrap();
    for t in 0..50 {
        assert_eq!(cell.step(features.row(t)).unwrap(), batch.outputs.row(t));
    }
}

fn small_data(seed: u64) -> Vec<Trajectory> {
    let cfg = NBodyConfig {
        n_bodies: 3,
        steps: 20,
        n_trajectories: 2,
        seed,
        ..Default::default()
    };
    generate_nbody(&cfg).unwrap().trajectories
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let data = small_data(6);
    let dir = tempfile::tempdir().unwrap();
    for composition in [Composition::Rra, Composition::GpaRra] {
        let model = NBodyModel::new(
            ModelConfig {
                composition,
                n_bodies: 3,
                seed: 7,
                ..Default::default()
            },
            &data,
        )
        .unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(
            back.trajectory_mse(&data[0]).unwrap(),
            model.trajectory_mse(&data[0]).unwrap()
        );
        let mut a = model.predictor().unwrap();
        let mut b = back.predictor().unwrap();
        let ra = rollout(&mut a, &data[1].frames[..10], 10).unwrap();
        let rb = rollout(&mut b, &data[1].frames[..10], 10).unwrap();
        assert_eq!(ra.frames, rb.frames);
        assert!(ra.is_complete(10));
    }
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let data = small_data(6);
    let dir = tempfile::tempdir().unwrap();
    let model = NBodyModel::new(
        ModelConfig {
            n_bodies: 3,
            ..Default::default()
        },
        &data,
    )
    .unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 8);
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
    assert!(load_checkpoint(&dir.path().join("missing.ckpt")).is_err());
}

#[test]
fn datasets_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(9);
    let path = dir.path().join("n.jsonl");
    write_jsonl(&path, &data).unwrap();
    let back: Vec<Trajectory> = read_jsonl(&path).unwrap();
    assert_eq!(back, data);
    let snakes = gen_snake_dataset(16, 20, 1).unwrap();
    let spath = dir.path().join("s.jsonl");
    write_jsonl(&spath, &snakes).unwrap();
    let sback: Vec<SnakeSample> = read_jsonl(&spath).unwrap();
    assert_eq!(sback, snakes);
}

#[test]
fn generation_is_seed_deterministic() {
    assert_eq!(small_data(11), small_data(11));
    assert_ne!(small_data(11), small_data(12));
}

#[test]
fn algebraic_detector_separates_snakes() {
    for grid in [16, 32] {
        let samples = gen_snake_dataset(grid, 200, 5).unwrap();
        let pred: Vec<bool> = samples
            .iter()
            .map(|s| snake_connectivity_algebraic(s).unwrap() == SnakeLabel::Broken)
            .collect();
        let labels: Vec<bool> = samples
            .iter()
            .map(|s| s.label == SnakeLabel::Broken)
            .collect();
        assert_eq!(mcc(&pred, &labels).unwrap(), 1.0, "grid {grid}");
    }
}

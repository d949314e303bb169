mod common;

use common::{rng, toy_dataset};
use lingua_dp::influence::{
    infu, infu_from_scores, influence_vector, loo_influence, self_influence, tracin_cp, CheckpointSet, Example,
    LooOracle,
};
use lingua_dp::synth::{gen_classification_data, plant_outlier, SynthSpec};
use lingua_dp::trainer::{train, Checkpoint, LabeledDataset, ModelSpec, Optimizer, TrainConfig};
use lingua_dp::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn convex_full_batch(n: usize) -> TrainConfig {
    TrainConfig {
        optimizer: Optimizer::Sgd,
        base_lr: 0.5,
        warmup_steps: 0,
        total_steps: 400,
        batch_size: n,
        clip_threshold: 1e6,
        weight_decay: 0.0,
        ..TrainConfig::default()
    }
}

fn random_checkpoints(spec: &ModelSpec, k: usize, seed: u64) -> CheckpointSet {
    let mut r = rng(seed);
    let cks = (1..=k)
        .map(|i| Checkpoint {
            step: 100 * i as u32,
            eta: r.random_range(0.01..0.1),
            theta: (0..spec.num_params()).map(|_| r.sample::<f64, _>(StandardNormal)).collect(),
        })
        .collect();
    CheckpointSet::new(cks).unwrap()
}

#[test]
fn tracin_symmetric_and_self_influence_nonnegative() {
    let spec = ModelSpec { input_dim: 3, hidden_dim: 4, num_classes: 3 };
    let cks = random_checkpoints(&spec, 3, 1);
    let data = toy_dataset(1, 4, 3, 3);
    for i in 0..data.len() {
        let zi = Example::from_dataset(&data, i);
        assert!(self_influence(zi, &cks, &spec).unwrap() >= 0.0);
        for j in 0..data.len() {
            let zj = Example::from_dataset(&data, j);
            let (a, b) = (tracin_cp(zi, zj, &cks, &spec).unwrap(), tracin_cp(zj, zi, &cks, &spec).unwrap());
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }
}

#[test]
fn learning_rate_scaling_is_linear() {
    let spec = ModelSpec::linear(3, 2);
    let cks = random_checkpoints(&spec, 2, 2);
    let scaled = cks.scale_learning_rates(2.5);
    let data = toy_dataset(2, 3, 3, 2);
    let (z, w) = (Example::from_dataset(&data, 0), Example::from_dataset(&data, 1));
    let a = tracin_cp(z, w, &cks, &spec).unwrap();
    assert!((tracin_cp(z, w, &scaled, &spec).unwrap() - 2.5 * a).abs() < 1e-13 * a.abs().max(1.0));
    let same = [z, z, z];
    assert!((infu(&same, &scaled, &spec).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn influence_vector_is_permutation_equivariant() {
    let spec = ModelSpec::linear(3, 2);
    let cks = random_checkpoints(&spec, 3, 3);
    let data = toy_dataset(3, 3, 3, 2);
    let tuple: Vec<_> = (0..3).map(|i| Example::from_dataset(&data, i)).collect();
    let v = influence_vector(0, &tuple, &cks, &spec).unwrap();
    let perm = [tuple[2], tuple[0], tuple[1]];
    let w = influence_vector(1, &perm, &cks, &spec).unwrap();
    assert_eq!(vec![w[1], w[2], w[0]], v);
}

#[test]
fn infu_examples() {
    let c = 3.7;
    let scores = vec![vec![2f64.ln() + c, c], vec![2f64.ln() - 1.0, -1.0]];
    let h = -(2.0 / 3.0 * (2.0f64 / 3.0).log2() + 1.0 / 3.0 * (1.0f64 / 3.0).log2());
    assert!((infu_from_scores(&scores).unwrap() - h).abs() < 1e-12);
    assert!((h - 0.91830).abs() < 1e-5);
    assert!(infu_from_scores(&[vec![50.0, 0.0], vec![0.0, 50.0]]).unwrap() < 1e-12);
    assert!(infu_from_scores(&[vec![1.0]]).is_err());
}

#[test]
fn removing_a_twin_barely_matters() {
    let mut data = toy_dataset(7, 8, 3, 2);
    // make example 1 an exact copy of example 0
    let row0 = data.x(0).to_vec();
    data.features.row_mut(1).copy_from_slice(&row0);
    data.labels[1] = data.labels[0];
    let spec = ModelSpec::linear(3, 2);
    let cfg = convex_full_batch(data.len());
    let probe = data.x(5).to_vec();
    let delta = loo_influence(&data, 1, &spec, &cfg, &probe, data.labels[5]).unwrap();
    assert!(delta.abs() < 1e-3, "{delta}");
}

#[test]
fn removing_sole_class_member_is_large_and_positive() {
    let rows = [[1.0, 0.0], [1.2, 0.1], [0.9, -0.1], [1.1, 0.2], [-1.0, 1.0]];
    let data = LabeledDataset::new(
        Matrix::from_rows(&rows).unwrap(),
        vec![0, 0, 0, 0, 1],
        vec!["a".into(), "a".into(), "b".into(), "b".into(), "a".into()],
    )
    .unwrap();
    let spec = ModelSpec::linear(2, 2);
    let cfg = convex_full_batch(data.len());
    let delta = loo_influence(&data, 4, &spec, &cfg, data.x(4), 1).unwrap();
    assert!(delta > 0.3, "{delta}");
}

#[test]
fn noisy_oracle_is_stochastic() {
    let data = toy_dataset(8, 6, 2, 2);
    let spec = ModelSpec::linear(2, 2);
    let cfg = TrainConfig { noise_multiplier: 1.0, total_steps: 60, warmup_steps: 5, batch_size: 4, ..TrainConfig::default() };
    let oracle = LooOracle::new(&data, spec, cfg, data.x(0), 0).unwrap();
    assert!(oracle.is_stochastic());
    let clean = LooOracle::new(&data, spec, convex_full_batch(data.len()), data.x(0), 0).unwrap();
    assert!(!clean.is_stochastic());
    assert!(LooOracle::new(&data, spec, convex_full_batch(data.len()), data.x(0), 5).is_err());
}

fn planted_setup(seed: u64) -> (LabeledDataset, usize, ModelSpec, TrainConfig) {
    let spec_data = SynthSpec { num_languages: 2, tuples: 32, dim: 8, classes: 3, lambda: 0.5, seed, ..SynthSpec::default() };
    let data = gen_classification_data(&spec_data).unwrap();
    let (data, planted) = plant_outlier(&data, 4.0, seed).unwrap();
    let cfg = TrainConfig { seed, ..convex_full_batch(data.len()) };
    (data, planted, ModelSpec::linear(8, 3), cfg)
}

#[test]
fn planted_outlier_has_top_self_influence() {
    let mut hits = 0;
    for seed in 0..20 {
        let (data, planted, spec, cfg) = planted_setup(seed);
        let cks = CheckpointSet::new(train(&data, &spec, &cfg).unwrap().checkpoints).unwrap().last(3);
        let scores: Vec<f64> =
            (0..data.len()).map(|i| self_influence(Example::from_dataset(&data, i), &cks, &spec).unwrap()).collect();
        let top = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        hits += usize::from(top == planted);
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn planted_outlier_dominates_leave_one_out() {
    let mut wins = Vec::new();
    for seed in 0..20 {
        let (data, planted, spec, cfg) = planted_setup(seed);
        let oracle = LooOracle::new(&data, spec, cfg, data.x(planted), data.labels[planted]).unwrap();
        let effects = oracle.all_influences().unwrap();
        let others = effects.iter().enumerate().filter(|(i, _)| *i != planted).map(|(_, v)| v.abs()).fold(0.0, f64::max);
        wins.push(effects[planted].abs() - others);
    }
    wins.sort_by(f64::total_cmp);
    let median = 0.5 * (wins[9] + wins[10]);
    assert!(median > 0.0, "{wins:?}");
}

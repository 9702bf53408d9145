use gala_core::data::{assign_groups, synthesize, Dataset, Group, GroupAssignment, LongTailProfile, Role};
use gala_core::{
    cross_similarity_report, predict, similarity_report, train, Error, LossKind, Matrix, PredictionMatrix, TrainConfig,
    TrainOutput,
};

fn benchmark() -> (Dataset, Dataset, GroupAssignment) {
    let p = LongTailProfile::new(10, 500, 100.0).unwrap();
    let (train, test) = synthesize(&p, 16, 3.0, 100, 0).unwrap();
    let groups = assign_groups(train.class_counts(), 100, 20).unwrap();
    (train, test, groups)
}

fn run(kind: LossKind, data: &Dataset, epochs: usize) -> TrainOutput {
    train(&TrainConfig { loss: kind, epochs, ..Default::default() }, data).unwrap()
}

fn group_mean(groups: &GroupAssignment, g: Group, v: &[f64]) -> f64 {
    let xs: Vec<f64> = groups.classes(g).map(|c| v[c]).collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn training_is_deterministic() {
    let p = LongTailProfile::new(4, 60, 10.0).unwrap();
    let (data, _) = synthesize(&p, 5, 2.0, 10, 3).unwrap();
    let cfg = TrainConfig { epochs: 5, batch_size: 16, seed: 8, ..Default::default() };
    assert_eq!(train(&cfg, &data).unwrap(), train(&cfg, &data).unwrap());
}

#[test]
fn first_gala_epoch_follows_cross_entropy() {
    let p = LongTailProfile::new(5, 80, 20.0).unwrap();
    let (data, _) = synthesize(&p, 6, 2.0, 10, 4).unwrap();
    let ce = run(LossKind::CrossEntropy, &data, 1);
    let gala = run(LossKind::Gala, &data, 1);
    assert_eq!(ce.params, gala.params);
    assert_eq!(ce.accumulators, gala.accumulators);
    assert_eq!(ce.history.records[0].mean_loss, gala.history.records[0].mean_loss);

    // from the second epoch on the margins are live
    let ce = run(LossKind::CrossEntropy, &data, 2);
    let gala = run(LossKind::Gala, &data, 2);
    assert_ne!(ce.params, gala.params);
}

#[test]
fn history_shape_and_schedule_bounds() {
    let p = LongTailProfile::new(3, 40, 4.0).unwrap();
    let (data, _) = synthesize(&p, 3, 2.0, 10, 5).unwrap();
    let cfg = TrainConfig { epochs: 7, base_lr: 0.05, ..Default::default() };
    let out = train(&cfg, &data).unwrap();
    assert_eq!(out.history.records.len(), 7);
    for (i, r) in out.history.records.iter().enumerate() {
        assert_eq!(r.epoch, i + 1);
        assert!(r.lr > 0.0 && r.lr <= 0.05);
        assert!(r.mean_loss.is_finite() && r.mean_loss >= 0.0);
        assert_eq!(r.similarity.len(), 3);
        assert_eq!(r.weight_norms.len(), 3);
    }
    assert_eq!(out.history.records.last().unwrap().accumulators, out.accumulators);
}

#[test]
fn separable_two_class_problem_is_solved() {
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let t = i as f64 / 40.0;
            if i % 2 == 0 {
                vec![1.0 + t, 0.5 - t]
            } else {
                vec![-1.0 - t, t - 0.5]
            }
        })
        .collect();
    let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
    let data = Dataset::new(Matrix::from_rows(&rows).unwrap(), labels.clone(), 2, Role::Train).unwrap();
    let cfg = TrainConfig { loss: LossKind::CrossEntropy, epochs: 50, batch_size: 8, ..Default::default() };
    let out = train(&cfg, &data).unwrap();
    let probs = PredictionMatrix::from_model(&out.params, data.features()).unwrap();
    assert_eq!(predict(probs.matrix()), labels);
}

#[test]
fn divergence_is_reported() {
    let data = Dataset::new(
        Matrix::from_rows(&[vec![1e200, 1e200], vec![-1e200, 1e200]]).unwrap(),
        vec![0, 1],
        2,
        Role::Train,
    )
    .unwrap();
    let cfg = TrainConfig { loss: LossKind::CrossEntropy, epochs: 3, base_lr: 1e100, ..Default::default() };
    assert!(matches!(train(&cfg, &data), Err(Error::Diverged { .. })));
}

#[test]
fn rejects_bad_config_and_empty_data() {
    let p = LongTailProfile::new(3, 10, 2.0).unwrap();
    let (data, _) = synthesize(&p, 2, 1.0, 1, 0).unwrap();
    assert!(matches!(train(&TrainConfig { epochs: 0, ..Default::default() }, &data), Err(Error::Config(_))));
    let empty = Dataset::new(Matrix::zeros(0, 2), vec![], 3, Role::Train).unwrap();
    assert!(train(&TrainConfig::default(), &empty).is_err());
}

// Qualitative diagnostics of cross-entropy on the long-tailed benchmark.
#[test]
fn cross_entropy_gradient_imbalance_on_benchmark() {
    let (data, _, groups) = benchmark();
    let out = run(LossKind::CrossEntropy, &data, 100);
    let ratio = out.accumulators.gradient_ratio().unwrap();
    let head = group_mean(&groups, Group::Head, &ratio);
    let medium = group_mean(&groups, Group::Medium, &ratio);
    let tail = group_mean(&groups, Group::Tail, &ratio);
    assert!(head > medium && medium > tail, "ratio by group: {head} {medium} {tail}");
    assert!(ratio[0] > ratio[9]);

    let phi = out.accumulators.produced_negative_distribution(true);
    assert!(group_mean(&groups, Group::Head, &phi) > group_mean(&groups, Group::Tail, &phi));
    let head_min = groups.classes(Group::Head).map(|c| phi[c]).fold(f64::INFINITY, f64::min);
    let tail_max = groups.classes(Group::Tail).map(|c| phi[c]).fold(f64::NEG_INFINITY, f64::max);
    assert!(head_min > tail_max);
}

#[test]
fn gala_balances_gradients_and_tail_similarity() {
    let (data, _, groups) = benchmark();
    let ce = run(LossKind::CrossEntropy, &data, 100);
    let gala = run(LossKind::Gala, &data, 100);

    let spread = |o: &TrainOutput| {
        let r = o.accumulators.gradient_ratio().unwrap();
        r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / r.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    assert!(spread(&gala) < spread(&ce));

    let sim_ce = similarity_report(&ce.params, &data).unwrap();
    let sim_gala = similarity_report(&gala.params, &data).unwrap();
    assert!(group_mean(&groups, Group::Tail, &sim_gala) > group_mean(&groups, Group::Tail, &sim_ce));
    // the per-epoch record uses the same train class means
    assert_eq!(ce.history.records.last().unwrap().similarity, sim_ce);

    let cross = cross_similarity_report(&ce.params, &data, &groups).unwrap();
    assert_eq!(cross.len(), 10);
}

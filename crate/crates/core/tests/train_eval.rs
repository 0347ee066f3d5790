mod common;

use arrn::arrn::{ArrnModel, DropoutConfig, ModelConfig};
use arrn::nn::{softmax_cross_entropy, HasParameters, Mode, Parameter};
use arrn::signal::{GridSpec, SmoothingKernelSpec};
use arrn::train::*;
use arrn::Error;
use common::rng;

fn grids(list: &[&str]) -> Vec<GridSpec> {
    list.iter().map(|s| s.parse().unwrap()).collect()
}

fn small_data(seed: u64) -> SynthDatasetSpec {
    SynthDatasetSpec { train_per_class: 24, test_per_class: 12, ..SynthDatasetSpec::desk_1d(seed) }
}

fn small_model(classes: usize, seed: u64) -> ArrnModel<f64> {
    let mut cfg = ModelConfig::desk_1d(1, classes);
    cfg.features = vec![4, 6, 8];
    cfg.tail_features = 8;
    ArrnModel::new(cfg, &mut rng(seed)).unwrap()
}

fn values(model: &ArrnModel<f64>) -> Vec<(String, Parameter<f64>)> {
    let mut out = Vec::new();
    model.collect_parameters("", &mut out);
    out.into_iter().map(|(n, p)| (n, p.clone())).collect()
}

#[test]
fn generation_is_a_pure_function_of_the_seed() {
    let a = generate_dataset::<f64>(&small_data(3)).unwrap();
    let b = generate_dataset::<f64>(&small_data(3)).unwrap();
    let c = generate_dataset::<f64>(&small_data(4)).unwrap();
    assert!(a.train.inputs.values().iter().zip(b.train.inputs.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a, b);
    assert_ne!(a.train.inputs, c.train.inputs);
    assert_eq!(a.train.len(), 4 * 24);
    assert_eq!(a.test.len(), 4 * 12);
}

#[test]
fn samples_are_bandlimited_to_their_bands() {
    // no noise: all energy sits in the bands, nothing at DC or the ladder
    // boundaries, and per-band energy tracks the signature
    let spec = SynthDatasetSpec { noise: 0.0, jitter: 0.0, ..small_data(5) };
    let data = generate_dataset::<f64>(&spec).unwrap();
    let table = spec.signature_table();
    let energies = band_energies(&data.train, &spec.ladder);
    for (e, &label) in energies.iter().zip(&data.train.labels) {
        for (b, &target) in table[label].iter().enumerate() {
            assert!((e[b] - target * target).abs() < 1e-9, "band {b}: {} vs {}", e[b], target * target);
        }
    }
    let mean: f64 = data.train.inputs.values().iter().sum::<f64>() / data.train.inputs.values().len() as f64;
    assert!(mean.abs() < 1e-12);
}

#[test]
fn disjoint_noiseless_signatures_are_perfectly_separable() {
    let spec = SynthDatasetSpec {
        classes: 2,
        noise: 0.0,
        jitter: 0.0,
        signatures: Some(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]),
        ..small_data(11)
    };
    let data = generate_dataset::<f64>(&spec).unwrap();
    let oracle = BandEnergyOracle::fit(&data.train, &spec.ladder, 2);
    assert_eq!(oracle.accuracy(&data.test), 1.0);
}

#[test]
fn coarse_band_keeps_the_oracle_above_chance() {
    let spec = SynthDatasetSpec { train_per_class: 96, test_per_class: 64, ..SynthDatasetSpec::desk_1d(2) };
    let data = generate_dataset::<f64>(&spec).unwrap();
    let coarse: GridSpec = "16".parse().unwrap();
    let oracle = BandEnergyOracle::fit(&data.train.resampled(&coarse), &spec.ladder, spec.classes);
    let acc = oracle.accuracy(&data.test.resampled(&coarse));
    assert!(acc > 1.0 / spec.classes as f64 + 0.2, "coarse oracle accuracy {acc}");
    let full = BandEnergyOracle::fit(&data.train, &spec.ladder, spec.classes).accuracy(&data.test);
    assert!(full >= acc);
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let data = generate_dataset::<f64>(&small_data(1)).unwrap();
    let mut model = small_model(4, 1);
    let before = values(&model);
    let mut cfg = TrainConfig { epochs: 1, batch_size: 96, laplacian_dropout: false, ..Default::default() };
    cfg.optimizer.lr = 0.0;
    cfg.min_lr = 0.0;
    train(&mut model, &data.train, &cfg).unwrap();
    for ((name, a), (_, b)) in before.iter().zip(values(&model)) {
        if a.trainable() {
            assert_eq!(a.value, b.value, "{name} moved");
        }
    }
}

#[test]
fn uniform_logits_give_log_c() {
    for classes in [2usize, 4, 10] {
        let logits = vec![0.37f64; 3 * classes];
        let (loss, _) = softmax_cross_entropy(&logits, classes, &[0, classes - 1, 1]);
        assert!((loss - (classes as f64).ln()).abs() < 1e-12);
    }
    // a fresh model is close to uniform
    let data = generate_dataset::<f64>(&small_data(2)).unwrap();
    let model = small_model(4, 2);
    let (x, labels) = data.train.gather(&(0..32).collect::<Vec<_>>());
    let logits = model.forward_full(&x, None, Mode::Eval).unwrap();
    let (loss, _) = softmax_cross_entropy(logits.values(), 4, &labels);
    assert!((loss - 4f64.ln()).abs() < 0.5, "initial loss {loss}");
}

#[test]
fn two_class_noiseless_task_is_learned() {
    let spec = SynthDatasetSpec {
        classes: 2,
        noise: 0.0,
        jitter: 0.0,
        train_per_class: 64,
        test_per_class: 16,
        ..SynthDatasetSpec::desk_1d(8)
    };
    let data = generate_dataset::<f32>(&spec).unwrap();
    let mut cfg = ModelConfig::desk_1d(1, 2);
    cfg.dropout = DropoutConfig::none(2);
    let mut model = ArrnModel::<f32>::new(cfg, &mut rng(8)).unwrap();
    let tc = TrainConfig { epochs: 30, batch_size: 32, laplacian_dropout: false, ..Default::default() };
    let report = train(&mut model, &data.train, &tc).unwrap();
    let first = report.epochs[0].loss;
    let last = report.epochs.last().unwrap();
    assert!(last.loss < first / 2.0, "loss {first} -> {}", last.loss);
    let acc = evaluate_full(&model, &data.train, 64).unwrap();
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn training_is_deterministic() {
    let data = generate_dataset::<f64>(&small_data(6)).unwrap();
    let tc = TrainConfig { epochs: 2, batch_size: 16, seed: 9, ..Default::default() };
    let mut a = small_model(4, 6);
    let mut b = small_model(4, 6);
    let ra = train(&mut a, &data.train, &tc).unwrap();
    let rb = train(&mut b, &data.train, &tc).unwrap();
    assert_eq!(ra.to_csv(), rb.to_csv());
    assert_eq!(a, b);
}

#[test]
fn non_finite_loss_is_reported() {
    let mut data = generate_dataset::<f64>(&small_data(7)).unwrap();
    data.train.inputs.values_mut()[5] = f64::NAN;
    let mut model = small_model(4, 7);
    let tc = TrainConfig { epochs: 1, batch_size: 1000, laplacian_dropout: false, ..Default::default() };
    match train(&mut model, &data.train, &tc) {
        Err(Error::Divergence { epoch: 0, step: 0, loss }) => assert!(!loss.is_finite()),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn training_grid_must_match_the_model() {
    let data = generate_dataset::<f64>(&small_data(7)).unwrap();
    let coarse = data.train.resampled(&"32".parse().unwrap());
    let mut model = small_model(4, 7);
    assert!(matches!(train(&mut model, &coarse, &TrainConfig::default()), Err(Error::Shape(_))));
}

#[test]
fn sweep_rows_are_consistent() {
    let data = generate_dataset::<f64>(&small_data(12)).unwrap();
    let model = small_model(4, 12);
    let res = grids(&["64", "48", "32", "24", "16"]);
    let rows =
        evaluate_sweep(&model, &data.test, &res, &[EvalMode::Full, EvalMode::Adapted], false, &SweepOptions::default())
            .unwrap();
    assert_eq!(rows.len(), 10);
    for pair in rows.chunks(2) {
        let (full, adapted) = (&pair[0], &pair[1]);
        assert_eq!((full.mode, adapted.mode), (EvalMode::Full, EvalMode::Adapted));
        assert!((0.0..=1.0).contains(&full.accuracy) && (0.0..=1.0).contains(&adapted.accuracy));
        // Perfect kernels: adapted evaluation changes nothing but the cost
        assert_eq!(full.accuracy, adapted.accuracy);
        assert_eq!(full.macs, model.count_macs(0));
        assert!(adapted.macs <= full.macs);
        assert_eq!(full.wall_ms, 0.0);
    }
    let adapted: Vec<u64> = rows.iter().filter(|r| r.mode == EvalMode::Adapted).map(|r| r.macs).collect();
    assert!(adapted.windows(2).all(|w| w[0] >= w[1]));
    assert!(adapted[4] < adapted[0]);
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with(&format!("{CSV_HEADER}\n")));
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.lines().nth(1).unwrap().starts_with("64,full,perfect,off,"));
    assert!(sweep_svg(&rows).contains("<polyline"));
}

#[test]
fn sweep_rejects_resolutions_above_the_base() {
    let data = generate_dataset::<f64>(&small_data(12)).unwrap();
    let model = small_model(4, 12);
    let r = evaluate_sweep(&model, &data.test, &grids(&["128"]), &[EvalMode::Full], false, &SweepOptions::default());
    assert!(matches!(r, Err(Error::Shape(_))));
}

#[test]
fn gaussian_kernels_split_full_and_adapted() {
    let data = generate_dataset::<f64>(&small_data(13)).unwrap();
    let mut cfg = small_model(4, 13).config().clone();
    cfg.kernel = SmoothingKernelSpec::truncated_gaussian();
    let model = ArrnModel::<f64>::new(cfg, &mut rng(13)).unwrap();
    let (x, _) = data.test.resampled(&"16".parse().unwrap()).gather(&[0, 1, 2]);
    let full = model.forward_full_at(&x, Mode::Eval).unwrap();
    let (level, adapted) = model.forward_at(&x, Default::default(), Mode::Eval).unwrap();
    assert_eq!(level, 2);
    assert!(full.max_abs_diff(&adapted) > 1e-6);
}

#[test]
fn csv_output_is_reproducible() {
    let spec = SynthDatasetSpec { train_per_class: 8, test_per_class: 8, ..SynthDatasetSpec::desk_1d(1) };
    let mut model = ModelConfig::desk_1d(1, 4);
    model.features = vec![4, 6, 8];
    let tc = TrainConfig { epochs: 1, batch_size: 16, ..Default::default() };
    let mut cfg = AblationConfig::new(model, spec, tc, grids(&["64", "32", "16"]));
    cfg.kernels.truncate(2);
    let a = ablation_grid::<f64>(&cfg).unwrap();
    let b = ablation_grid::<f64>(&cfg).unwrap();
    assert_eq!(sweep_csv(&a.rows), sweep_csv(&b.rows));
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert_eq!(a.rows.len(), 2 * 2 * 3 * 2);
    assert_eq!(a.cells.len(), 2 * 2 * 2);
    // factors multiply back to the leaf accuracy over the overall mean
    let overall = a.rows.iter().map(|r| r.accuracy).sum::<f64>() / a.rows.len() as f64;
    for c in &a.cells {
        let product = c.kernel_ratio * c.dropout_ratio * c.mode_ratio * overall;
        assert!((product - c.accuracy).abs() < 1e-12 || c.accuracy == 0.0);
    }
}

#[test]
fn dataset_cache_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset::<f64>(&small_data(14)).unwrap();
    write_dataset(dir.path(), &data).unwrap();
    let back = read_dataset::<f64>(dir.path()).unwrap();
    assert_eq!(back, data);
    let narrow = read_dataset::<f32>(dir.path()).unwrap();
    assert_eq!(narrow.train.labels, data.train.labels);
}

#[test]
fn cosine_schedule_endpoints() {
    assert!((cosine_lr(1e-3, 1e-5, 0, 100) - 1e-3).abs() < 1e-15);
    assert!((cosine_lr(1e-3, 1e-5, 100, 100) - 1e-5).abs() < 1e-15);
    assert!((cosine_lr(1e-3, 1e-5, 50, 100) - (1e-3 + 1e-5) / 2.0).abs() < 1e-12);
}

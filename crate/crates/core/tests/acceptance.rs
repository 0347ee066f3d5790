//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines are printed in order and uncaptured.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use arrn::arrn::{
    compare_paths, decode_checkpoint, encode_checkpoint, equivalence_report, random_input, ArrnModel,
    DropoutConfig, DropoutMask, ModelConfig,
};
use arrn::macs;
use arrn::nn::{
    softmax_cross_entropy, zero_constancy_check, BatchNorm, Depthwise, FeatureMap, HasParameters, Head, InnerBlock,
    InnerBlockSpec, Layer, Mode, Padding, Pointwise,
};
use arrn::pyramid::{decompose, reconstruct};
use arrn::signal::{self, DiscreteSignal, GridSpec, ResolutionLadder, SmoothingKernelSpec};
use arrn::train::*;
use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn desk() -> ModelConfig {
    ModelConfig::desk_1d(2, 4)
}

fn perfect() -> SmoothingKernelSpec {
    SmoothingKernelSpec::Perfect
}

fn kernels() -> [SmoothingKernelSpec; 3] {
    [perfect(), SmoothingKernelSpec::windowed_sinc(), SmoothingKernelSpec::truncated_gaussian()]
}

fn pyramid_reconstruction() -> Outcome {
    let ladder: ResolutionLadder = "64,32,16".parse().unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let grid = ladder.level(0).clone();
        let s = DiscreteSignal::new(grid.clone(), 1, random_vec(grid.len(), &mut rng(seed))).unwrap();
        let d = decompose(&s, &ladder, &perfect()).unwrap();
        let r = signal::upsample(&reconstruct(&d, 1).unwrap(), &grid).unwrap();
        worst = worst.max(r.max_abs_diff(&signal::lowpass(&s, ladder.level(1), &perfect()).unwrap()));
    }
    outcome(worst <= 1e-10, format!("max abs error {worst:.2e}"))
}

fn skip_theorem() -> Outcome {
    let (mut wide, mut narrow): (f64, f64) = (0.0, 0.0);
    for seed in 0..20 {
        let model = random_model(desk(), 1000 + seed);
        let bytes = encode_checkpoint(&model, &toml::Table::new()).unwrap();
        let single: ArrnModel<f32> = decode_checkpoint(&bytes).unwrap().0;
        for level in 0..3 {
            wide = wide.max(equivalence_report(&model, level, 1, 4, &mut rng(seed)).unwrap().max_abs);
            narrow = narrow.max(equivalence_report(&single, level, 1, 4, &mut rng(seed)).unwrap().max_rel);
        }
    }
    outcome(wide <= 1e-9 && narrow <= 1e-4, format!("f64 max abs {wide:.2e}, f32 max rel {narrow:.2e}"))
}

fn dropout_is_downsampling() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let model = random_model(desk(), 2000 + seed);
        let x = random_input::<f64, _>(model.ladder().level(0), 2, 3, &mut rng(seed));
        for k in 1..=2 {
            let dropped = model.forward_full(&x, Some(&DropoutMask::skip_first(2, k)), Mode::Eval).unwrap();
            let signals: Vec<_> = (0..x.batch())
                .map(|b| signal::downsample(&x.signal(b), model.ladder().level(k), &perfect()).unwrap())
                .collect();
            let low = FeatureMap::from_signals(&signals).unwrap();
            worst = worst.max(dropped.max_abs_diff(&model.forward_adapted(&low, Mode::Eval).unwrap()));
        }
    }
    outcome(worst <= 1e-9, format!("max abs {worst:.2e}"))
}

fn constancy() -> Outcome {
    let mut configs = vec![desk(), ModelConfig::desk_2d(3, 4)];
    let mut deep = desk();
    deep.depth = 2;
    deep.expansion = 3;
    configs.push(deep);
    let (mut block_dev, mut residual_dev): (f64, f64) = (0.0, 0.0);
    let mut all_pass = true;
    for (i, base) in configs.into_iter().enumerate() {
        for kernel in kernels() {
            let mut config = base.clone();
            config.kernel = kernel;
            let model = random_model(config, 3000 + i as u64);
            for res in model.residuals() {
                let fine = res.resampler().fine();
                let report = zero_constancy_check(res.block(), fine, 1e-10);
                all_pass &= report.pass;
                block_dev = block_dev.max(report.max_deviation);
                let values: Vec<f64> = (0..2 * res.in_features())
                    .flat_map(|l| std::iter::repeat_n(0.37 * l as f64 - 0.9, fine.len()))
                    .collect();
                let r = FeatureMap::new(2, res.in_features(), fine.clone(), values).unwrap();
                let on = res.forward(&r, true, Mode::Eval).unwrap().0;
                let off = res.forward(&r, false, Mode::Eval).unwrap().0;
                residual_dev = residual_dev.max(on.max_abs_diff(&off));
            }
        }
    }
    outcome(
        all_pass && block_dev <= 1e-10 && residual_dev <= 1e-10,
        format!("block deviation {block_dev:.2e}, residual vs projected downsample {residual_dev:.2e}"),
    )
}

fn random_map(batch: usize, features: usize, grid: GridSpec, seed: u64) -> FeatureMap<f64> {
    let n = batch * features * grid.len();
    FeatureMap::new(batch, features, grid, random_vec(n, &mut rng(seed))).unwrap()
}

/// Worst relative error over the input gradient and every trainable
/// parameter of `model` under `loss`. `analytic` runs forward and backward,
/// accumulating parameter gradients and returning the input gradient.
fn worst_gradient_error<M: HasParameters<f64>>(
    model: &mut M,
    x: &FeatureMap<f64>,
    loss: impl Fn(&M, &FeatureMap<f64>) -> f64,
    analytic: impl Fn(&mut M, &FeatureMap<f64>) -> Vec<f64>,
) -> f64 {
    zero_grads(model);
    let gx = analytic(model, x);
    let grads = analytic_param_grads(model);
    let mut worst = rel_err(&gx, &numeric_input_grad(x, |x| loss(model, x)));
    for (a, n) in grads.iter().zip(&numeric_param_grads(model, |m| loss(m, x))) {
        worst = worst.max(rel_err(a, n));
    }
    worst
}

fn layer_error(mut layer: Layer<f64>, x: FeatureMap<f64>, mode: Mode, seed: u64) -> f64 {
    let w = random_vec(layer.forward(&x, mode).unwrap().0.values().len(), &mut rng(seed));
    worst_gradient_error(
        &mut layer,
        &x,
        |l, x| dot(l.forward(x, mode).unwrap().0.values(), &w),
        |l, x| {
            let (y, cache) = l.forward(x, mode).unwrap();
            l.backward(&cache, &y.with_values(w.clone())).unwrap().into_values()
        },
    )
}

fn gradients() -> Outcome {
    let mut r = rng(4000);
    let mut errors: Vec<(String, f64)> = Vec::new();
    let line = |n| GridSpec::line(n).unwrap();

    let pw = Layer::Pointwise(Pointwise::new(3, 4, true, &mut r));
    errors.push(("pointwise".into(), layer_error(pw, random_map(2, 3, line(5), 1), Mode::Train, 2)));
    for (dims, grid) in [(1, line(6)), (2, GridSpec::new(vec![3, 4]).unwrap())] {
        for padding in [Padding::Replicate, Padding::Zero] {
            let mut dw = Depthwise::new(2, dims, padding, &mut r);
            dw.bias.value = vec![0.3, -0.2];
            let e = layer_error(Layer::Depthwise(dw), random_map(2, 2, grid.clone(), 3), Mode::Train, 4);
            errors.push((format!("depthwise {dims}d {padding:?}"), e));
        }
    }
    let mut bn = BatchNorm::new(3);
    bn.gamma.value = vec![1.5, -0.7, 0.4];
    bn.beta.value = vec![0.1, 0.2, -0.3];
    bn.running_mean.value = vec![0.2, -0.1, 0.05];
    bn.running_var.value = vec![1.3, 0.6, 2.0];
    for mode in [Mode::Train, Mode::Eval] {
        let e = layer_error(Layer::BatchNorm(bn.clone()), random_map(3, 3, line(4), 5), mode, 6);
        errors.push((format!("batch norm {mode:?}"), e));
    }
    errors.push(("silu".into(), layer_error(Layer::Silu, random_map(2, 2, line(3), 7), Mode::Train, 8)));

    let mut block = InnerBlock::new(&InnerBlockSpec::new(2), 2, &mut r).unwrap();
    perturb(&mut block, 0.2, &mut r);
    let x = random_map(3, 2, GridSpec::square(2).unwrap(), 9);
    let w = random_vec(x.values().len(), &mut rng(10));
    let e = worst_gradient_error(
        &mut block,
        &x,
        |b, x| dot(b.forward(x, Mode::Train).unwrap().0.values(), &w),
        |b, x| {
            let (y, tape) = b.forward(x, Mode::Train).unwrap();
            b.backward(&tape, &y.with_values(w.clone())).unwrap().into_values()
        },
    );
    errors.push(("inner block".into(), e));

    let mut head = Head::new(3, 4, 5, 0.5, &mut r).unwrap();
    perturb(&mut head, 0.2, &mut r);
    let mask = head.sample_mask(4, &mut r);
    let x = random_map(4, 3, line(4), 11);
    let w = random_vec(4 * 5, &mut rng(12));
    let e = worst_gradient_error(
        &mut head,
        &x,
        |h, x| dot(h.forward(x, Mode::Train, mask.as_deref()).unwrap().0.values(), &w),
        |h, x| {
            let (y, tape) = h.forward(x, Mode::Train, mask.as_deref()).unwrap();
            h.backward(&tape, &y.with_values(w.clone())).unwrap().into_values()
        },
    );
    errors.push(("head".into(), e));

    let mut config = ModelConfig::with_ladder("8,4,2".parse().unwrap(), 2, 3);
    config.features = vec![2, 3, 3];
    config.tail_features = 3;
    config.kernel = SmoothingKernelSpec::windowed_sinc();
    config.dropout = DropoutConfig::uniform(2, 0.5);
    let labels = [0usize, 2, 1];
    for (mode, mask) in [
        (Mode::Eval, DropoutMask::all_on(2)),
        (Mode::Train, DropoutMask::all_on(2)),
        (Mode::Train, DropoutMask::skip_first(2, 1)),
    ] {
        let mut model = random_model(config.clone(), 4100);
        let x = random_input::<f64, _>(model.ladder().level(0), 2, 3, &mut rng(13));
        let head_mask = model.head().sample_mask(3, &mut rng(14));
        let e = worst_gradient_error(
            &mut model,
            &x,
            |m, x| {
                let (logits, _) = m.forward_taped(x, Some(&mask), mode, head_mask.as_deref()).unwrap();
                softmax_cross_entropy(logits.values(), 3, &labels).0
            },
            |m, x| {
                let (logits, tape) = m.forward_taped(x, Some(&mask), mode, head_mask.as_deref()).unwrap();
                let (_, g) = softmax_cross_entropy(logits.values(), 3, &labels);
                m.backward(&tape, &logits.with_values(g)).unwrap().into_values()
            },
        );
        errors.push((format!("model {mode:?} skip {}", mask.dropped()), e));
    }
    let (name, worst) = errors.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    outcome(worst <= GRAD_TOL, format!("{} checks, worst rel err {worst:.2e} ({name})", errors.len()))
}

fn kernel_ordering() -> Outcome {
    let mut medians = Vec::new();
    for kernel in kernels() {
        let mut d: Vec<f64> = (0..10u64)
            .map(|seed| {
                let model = random_model(desk(), 5000 + seed).with_kernel(&kernel).unwrap();
                (1..3)
                    .map(|level| {
                        let x = random_input::<f64, _>(model.ladder().level(level), 2, 4, &mut rng(5100 + seed));
                        compare_paths(&model, &x).unwrap().max_abs
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        d.sort_by(f64::total_cmp);
        medians.push((d[4] + d[5]) / 2.0);
    }
    let pass = medians[0] <= medians[1] && medians[1] <= medians[2] && medians[0] <= 1e-9 && medians[2] > 1e-6;
    outcome(
        pass,
        format!("medians perfect {:.2e}, windowed-sinc {:.2e}, gaussian {:.2e}", medians[0], medians[1], medians[2]),
    )
}

/// Desk-scale training protocol shared by the two accuracy criteria.
fn training_grid() -> AblationResult {
    let train = TrainConfig { epochs: 20, batch_size: 32, ..Default::default() };
    let resolutions = ["64", "48", "32", "24", "16"].iter().map(|s| s.parse().unwrap()).collect();
    let mut config = AblationConfig::new(ModelConfig::desk_1d(1, 4), SynthDatasetSpec::desk_1d(7), train, resolutions);
    config.kernels = vec![perfect(), SmoothingKernelSpec::truncated_gaussian()];
    config.seeds = vec![0, 1, 2];
    config.dropout_p = 0.3;
    ablation_grid::<f32>(&config).unwrap()
}

fn accuracy_at(grid: &AblationResult, kernel: &str, dropout: bool, mode: EvalMode, resolution: &str) -> f64 {
    let res: GridSpec = resolution.parse().unwrap();
    grid.rows
        .iter()
        .find(|r| r.kernel == kernel && r.dropout == dropout && r.mode == mode && r.resolution == res)
        .map(|r| r.accuracy)
        .expect("row present")
}

fn robustness(grid: &AblationResult) -> Outcome {
    let coarse_on = accuracy_at(grid, "perfect", true, EvalMode::Adapted, "16");
    let coarse_off = accuracy_at(grid, "perfect", false, EvalMode::Adapted, "16");
    let full_on = accuracy_at(grid, "perfect", true, EvalMode::Full, "64");
    let full_off = accuracy_at(grid, "perfect", false, EvalMode::Full, "64");
    let gain = 100.0 * (coarse_on - coarse_off);
    let loss = 100.0 * (full_off - full_on);
    outcome(
        gain >= 5.0 && loss <= 3.0,
        format!(
            "coarsest {:.1}% vs {:.1}% (+{gain:.1} pts), full {:.1}% vs {:.1}% (-{loss:.1} pts)",
            100.0 * coarse_on,
            100.0 * coarse_off,
            100.0 * full_on,
            100.0 * full_off
        ),
    )
}

fn dual_regularization(grid: &AblationResult) -> Outcome {
    let cell = |dropout, mode| grid.cell("gaussian", dropout, mode).expect("cell present").accuracy;
    let on_adapted = cell(true, EvalMode::Adapted);
    let off_adapted = cell(false, EvalMode::Adapted);
    let off_full = cell(false, EvalMode::Full);
    outcome(
        on_adapted >= off_adapted && off_full >= off_adapted,
        format!(
            "dropout+adapted {:.1}%, plain+adapted {:.1}%, plain+full {:.1}%",
            100.0 * on_adapted,
            100.0 * off_adapted,
            100.0 * off_full
        ),
    )
}

fn compute_scaling() -> Outcome {
    let mut exact = true;
    let mut decreasing = true;
    for config in [ModelConfig::desk_1d(1, 4), ModelConfig::desk_2d(3, 10)] {
        let model = ArrnModel::<f64>::new(config.clone(), &mut rng(6000)).unwrap();
        let mut last = u64::MAX;
        for level in 0..model.ladder().len() {
            let x = random_input::<f64, _>(model.ladder().level(level), config.in_features, 1, &mut rng(6001));
            let (_, counted) = macs::instrument(|| model.forward_adapted(&x, Mode::Eval).unwrap());
            exact &= counted == model.count_macs(level);
            decreasing &= counted < last;
            last = counted;
        }
    }
    let model = ArrnModel::<f32>::new(ModelConfig::desk_1d(1, 4), &mut rng(6002)).unwrap();
    let m = model.ladder().coarsest();
    let ratio = model.count_macs(m) as f64 / model.count_macs(0) as f64;
    outcome(
        exact && decreasing && ratio <= 0.4,
        format!(
            "analytic = instrumented: {exact}, strictly decreasing: {decreasing}, coarsest/full {:.1}% ({} / {})",
            100.0 * ratio,
            model.count_macs(m),
            model.count_macs(0)
        ),
    )
}

fn run_artifacts<T: arrn::Real>(dir: &std::path::Path) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let spec = SynthDatasetSpec { train_per_class: 16, test_per_class: 8, ..SynthDatasetSpec::desk_1d(3) };
    let data = generate_dataset::<T>(&spec).unwrap();
    let mut config = ModelConfig::desk_1d(1, 4);
    config.kernel = SmoothingKernelSpec::windowed_sinc();
    let mut model = ArrnModel::<T>::new(config, &mut rng(7000)).unwrap();
    let report = train(&mut model, &data.train, &TrainConfig { epochs: 2, batch_size: 16, seed: 7001, ..Default::default() })
        .unwrap();
    let resolutions: Vec<GridSpec> = ["64", "32", "16"].iter().map(|s| s.parse().unwrap()).collect();
    let rows =
        evaluate_sweep(&model, &data.test, &resolutions, &[EvalMode::Full, EvalMode::Adapted], true, &Default::default())
            .unwrap();
    let path = dir.join("model.arnn");
    arrn::arrn::write_checkpoint(&path, &model, &toml::Table::new()).unwrap();
    (std::fs::read(path).unwrap(), sweep_csv(&rows).into_bytes(), report.to_csv().into_bytes())
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let wide = [run_artifacts::<f64>(dirs[0].path()), run_artifacts::<f64>(dirs[1].path())];
    let narrow = [run_artifacts::<f32>(dirs[0].path()), run_artifacts::<f32>(dirs[1].path())];
    let same = wide[0] == wide[1] && narrow[0] == narrow[1];
    outcome(
        same,
        format!("f64 checkpoint {} bytes, f32 checkpoint {} bytes, sweep and loss CSVs compared", wide[0].0.len(), narrow[0].0.len()),
    )
}

fn main() {
    let start = Instant::now();
    let mut grid: Option<AblationResult> = None;
    let mut failed = 0;
    for n in 1..=10 {
        let t = Instant::now();
        let (name, result) = match n {
            1 => ("pyramid reconstruction", catch_unwind(pyramid_reconstruction)),
            2 => ("skip theorem", catch_unwind(skip_theorem)),
            3 => ("dropout equals downsampling", catch_unwind(dropout_is_downsampling)),
            4 => ("zero-constancy and constant inputs", catch_unwind(constancy)),
            5 => ("gradient checks", catch_unwind(gradients)),
            6 => ("kernel-quality ordering", catch_unwind(kernel_ordering)),
            7 | 8 => {
                if grid.is_none() {
                    grid = catch_unwind(training_grid).ok();
                }
                let g = AssertUnwindSafe(grid.as_ref());
                let f = move || match *g {
                    Some(g) if n == 7 => robustness(g),
                    Some(g) => dual_regularization(g),
                    None => outcome(false, "training failed"),
                };
                (if n == 7 { "dropout robustness" } else { "dual regularization" }, catch_unwind(f))
            }
            9 => ("compute scaling", catch_unwind(compute_scaling)),
            _ => ("determinism", catch_unwind(determinism)),
        };
        let o = result.unwrap_or_else(|_| outcome(false, "panicked"));
        failed += usize::from(!o.pass);
        println!(
            "{} {n:>2}. {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed in {:.1}s", 10 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

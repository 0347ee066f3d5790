use std::fmt;
use std::path::Path;
use std::time::Instant;

use arrn::arrn::{
    equivalence_report, peek_checkpoint, random_input, read_checkpoint, write_checkpoint, ArrnModel, DropoutConfig,
    ModelConfig,
};
use arrn::io::write_atomic;
use arrn::nn::{HasParameters, Mode};
use arrn::pyramid::{self, decompose_adapted, read_dir, write_dir};
use arrn::signal::{arsg, downsample, GridSpec, SmoothingKernelSpec};
use arrn::train::{
    ablation_grid, evaluate_sweep, generate_dataset, read_dataset, sweep_csv, sweep_svg, write_dataset,
    AblationConfig, EvalMode, SweepOptions, SynthDatasetSpec, TrainConfig,
};
use arrn::{DType, Error, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{
    parse_grids, AblateArgs, BenchArgs, DecomposeArgs, EvalArgs, GenDataArgs, ReconstructArgs, SweepArgs, TrainArgs,
    VerifyArgs,
};

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Verification(String),
    Usage(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Usage(_) => 64,
            Failure::Core(e) => match e {
                Error::Format(_) | Error::Io(_) => 2,
                Error::Shape(_) | Error::IncomparableGrids(_) => 3,
                Error::NonFinite(_) | Error::Divergence { .. } => 4,
                Error::InvalidArgument(_) => 64,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Verification(m) | Failure::Usage(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type Result<T = ()> = std::result::Result<T, Failure>;

/// Runs a generic body with `T` bound to the scalar type of `dtype`.
macro_rules! with_dtype {
    ($dtype:expr, $t:ident => $body:expr) => {
        match $dtype {
            DType::F32 => {
                type $t = f32;
                $body
            }
            DType::F64 => {
                type $t = f64;
                $body
            }
        }
    };
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::Core(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

pub fn decompose(args: &DecomposeArgs) -> Result {
    let bytes = read(&args.input)?;
    let header = arsg::peek_header(&bytes)?;
    with_dtype!(header.dtype, T => {
        let signal = arsg::decode::<T>(&bytes)?;
        let d = decompose_adapted(&signal, &args.levels, &args.kernel)?;
        write_dir(&d, &args.out)?;
        println!("entry level {} ({}), kernel {}", d.start_level(), signal.grid(), args.kernel);
        for (i, diff) in d.diffs().iter().enumerate() {
            let peak = diff.values().iter().map(|v| v.abs().as_f64()).fold(0.0, f64::max);
            println!("diff {} on {}: max abs {peak:.3e}", d.start_level() + i, diff.grid());
        }
        println!("low on {}", d.low().grid());
    });
    Ok(())
}

pub fn reconstruct(args: &ReconstructArgs) -> Result {
    let dtype = arsg::peek_header(&read(&args.dir.join(pyramid::LOW_FILE))?)?.dtype;
    with_dtype!(dtype, T => {
        let d = read_dir::<T>(&args.dir)?;
        let r = pyramid::reconstruct(&d, args.level)?;
        if let Some(out) = &args.out {
            write_atomic(out, &arsg::encode(&r))?;
        }
        println!("reconstructed level {} on {}", args.level, r.grid());
        if let Some(reference) = &args.reference {
            let s = arsg::decode::<T>(&read(reference)?)?;
            let expected = downsample(&s, r.grid(), d.kernel())?;
            println!("max abs error vs smoothed reference: {:.3e}", r.max_abs_diff(&expected));
        }
    });
    Ok(())
}

/// Moves every parameter off its initial value so no path is trivially
/// zero; running variances stay positive.
fn jitter_parameters<T: Real>(model: &mut ArrnModel<T>, rng: &mut ChaCha8Rng) {
    let mut params = Vec::new();
    model.collect_parameters_mut(&mut params);
    for p in params {
        let trainable = p.trainable();
        for v in p.value.iter_mut() {
            let u: f64 = rng.random();
            *v += T::of(if trainable { 0.2 * (u - 0.5) } else { 0.3 * u });
        }
    }
}

pub fn verify_adaptation(args: &VerifyArgs) -> Result {
    if args.levels.len() < 2 {
        return Err(Failure::Usage("a single-level ladder has nothing to skip".into()));
    }
    if args.trials == 0 || args.batch == 0 {
        return Err(Failure::Usage("trials and batch must be positive".into()));
    }
    let mut config = ModelConfig::with_ladder(args.levels.clone(), 1, 4);
    config.kernel = args.kernel.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let levels = args.levels.len();
    let mut worst = vec![(0.0f64, 0.0f64, 0.0f64); levels];
    with_dtype!(args.dtype, T => {
        for _ in 0..args.trials {
            let mut model = ArrnModel::<T>::new(config.clone(), &mut rng)?;
            jitter_parameters(&mut model, &mut rng);
            for (level, w) in worst.iter_mut().enumerate() {
                let r = equivalence_report(&model, level, 1, args.batch, &mut rng)?;
                *w = (w.0.max(r.max_abs), w.1 + r.mean_abs / args.trials as f64, w.2.max(r.max_rel));
            }
        }
    });
    let mut failed = Vec::new();
    println!("kernel {}, {} trials, dtype {}", args.kernel, args.trials, args.dtype);
    for (level, (max_abs, mean_abs, max_rel)) in worst.iter().enumerate() {
        let measured = if args.relative { *max_rel } else { *max_abs };
        let ok = measured <= args.tol;
        println!(
            "level {level} ({}): max abs {max_abs:.3e}, mean abs {mean_abs:.3e}, max rel {max_rel:.3e} {}",
            args.levels.level(level),
            if ok { "ok" } else { "EXCEEDS" }
        );
        if !ok {
            failed.push(format!("level {level}: {measured:.3e}"));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("discrepancy above {:.1e} at {}", args.tol, failed.join(", "))))
    }
}

pub fn gen_data(args: &GenDataArgs) -> Result {
    let spec = SynthDatasetSpec {
        ladder: args.levels.clone(),
        classes: args.classes,
        train_per_class: args.train_per_class,
        test_per_class: args.test_per_class,
        noise: args.noise,
        jitter: args.jitter,
        coarse_levels: args.coarse_levels.unwrap_or(args.classes),
        ..SynthDatasetSpec::desk_1d(args.seed)
    };
    with_dtype!(args.dtype, T => {
        let data = generate_dataset::<T>(&spec)?;
        write_dataset(&args.out, &data)?;
        println!("{} train and {} test samples on {} written to {}", data.train.len(), data.test.len(), spec.grid(), args.out.display());
    });
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result {
    with_dtype!(args.dtype, T => {
        let data = read_dataset::<T>(&args.data)?;
        let mut config = ModelConfig::with_ladder(data.spec.ladder.clone(), 1, data.spec.classes);
        config.kernel = args.kernel.clone();
        config.dropout = DropoutConfig::uniform(config.residual_count(), args.dropout_p);
        let mut model = ArrnModel::<T>::new(config, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
        let mut tc = TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch_size,
            seed: args.seed,
            laplacian_dropout: args.dropout_p > 0.0,
            ..Default::default()
        };
        tc.optimizer.lr = args.lr;
        tc.optimizer.weight_decay = args.weight_decay;
        let report = arrn::train::train(&mut model, &data.train, &tc)?;
        let mut extra = toml::Table::new();
        extra.insert("dataset_seed".into(), toml::Value::Integer(data.spec.seed as i64));
        extra.insert("train".into(), toml::Value::try_from(&tc).map_err(|e| Error::Format(e.to_string()))?);
        write_checkpoint(&args.out, &model, &extra)?;
        let loss_path = args.loss_csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
        write_atomic(&loss_path, report.to_csv().as_bytes())?;
        let last = report.epochs.last().expect("at least one epoch");
        println!(
            "{} epochs: loss {:.4}, train accuracy {:.3}; checkpoint {}, loss curve {}",
            report.epochs.len(),
            last.loss,
            last.accuracy,
            args.out.display(),
            loss_path.display()
        );
    });
    Ok(())
}

fn modes(s: &str) -> Result<Vec<EvalMode>> {
    match s {
        "both" => Ok(vec![EvalMode::Full, EvalMode::Adapted]),
        other => Ok(vec![other.parse::<EvalMode>()?]),
    }
}

fn resolutions<T: Real>(sweep: &SweepArgs, model: &ArrnModel<T>) -> Result<Vec<GridSpec>> {
    match &sweep.resolutions {
        Some(list) => parse_grids(list),
        None => Ok(model.ladder().levels().to_vec()),
    }
}

fn print_rows(rows: &[arrn::train::SweepRow]) {
    for r in rows {
        println!("{:>8} {:<8} accuracy {:.4}  macs {}", r.resolution.to_string(), r.mode.to_string(), r.accuracy, r.macs);
    }
}

pub fn eval(args: &EvalArgs) -> Result {
    let info = peek_checkpoint(&read(&args.model)?)?;
    with_dtype!(info.dtype, T => {
        let (model, _) = read_checkpoint::<T>(&args.model)?;
        let data = read_dataset::<T>(&args.data)?;
        if data.test.inputs.grid() != model.ladder().level(0) {
            return Err(Error::Shape(format!(
                "dataset grid {} differs from the model's finest grid {}",
                data.test.inputs.grid(),
                model.ladder().level(0)
            ))
            .into());
        }
        let options = SweepOptions { policy: args.sweep.policy, batch: args.sweep.batch, timing: args.timing };
        let dropout = model.config().dropout.is_active();
        let rows = evaluate_sweep(&model, &data.test, &resolutions(&args.sweep, &model)?, &modes(&args.sweep.mode)?, dropout, &options)?;
        write_atomic(&args.out, sweep_csv(&rows).as_bytes())?;
        if let Some(svg) = &args.svg {
            write_atomic(svg, sweep_svg(&rows).as_bytes())?;
        }
        print_rows(&rows);
    });
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result {
    if args.repeats == 0 {
        return Err(Failure::Usage("repeats must be positive".into()));
    }
    let info = peek_checkpoint(&read(&args.model)?)?;
    let mut out = String::from("resolution,mode,level,macs,wall_ms\n");
    with_dtype!(info.dtype, T => {
        let (model, _) = read_checkpoint::<T>(&args.model)?;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let base = model.ladder().level(0).clone();
        for grid in resolutions(&args.sweep, &model)? {
            if !grid.fits_within(&base) {
                return Err(Error::Shape(format!("resolution {grid} exceeds the finest grid {base}")).into());
            }
            let x = random_input::<T, _>(&grid, model.config().in_features, args.sweep.batch, &mut rng);
            for mode in modes(&args.sweep.mode)? {
                let run = || -> arrn::Result<usize> {
                    match mode {
                        EvalMode::Full => model.forward_full_at(&x, Mode::Eval).map(|_| 0),
                        EvalMode::Adapted => model.forward_at(&x, args.sweep.policy, Mode::Eval).map(|(l, _)| l),
                    }
                };
                let level = run()?;
                let start = Instant::now();
                for _ in 0..args.repeats {
                    run()?;
                }
                let ms = start.elapsed().as_secs_f64() * 1e3 / args.repeats as f64;
                let macs = model.count_macs(level);
                out.push_str(&format!("{grid},{mode},{level},{macs},{ms:.3}\n"));
                println!("{:>8} {:<8} level {level}  macs/sample {macs}  {ms:.3} ms/batch", grid.to_string(), mode.to_string());
            }
        }
    });
    write_atomic(&args.out, out.as_bytes())?;
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result {
    let data = match &args.data {
        Some(dir) => read_dataset::<f64>(dir)?.spec,
        None => SynthDatasetSpec::desk_1d(args.data_seed),
    };
    let seeds = args
        .seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| Failure::Usage(format!("bad seed `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let kernels = args.kernels.split(',').map(|s| s.trim().parse::<SmoothingKernelSpec>()).collect::<arrn::Result<Vec<_>>>()?;
    if seeds.is_empty() || kernels.is_empty() {
        return Err(Failure::Usage("need at least one seed and one kernel".into()));
    }
    let resolutions = match &args.resolutions {
        Some(list) => parse_grids(list)?,
        None => data.ladder.levels().to_vec(),
    };
    let model = ModelConfig::with_ladder(data.ladder.clone(), 1, data.classes);
    let train = TrainConfig { epochs: args.epochs, batch_size: args.batch_size, ..Default::default() };
    let mut config = AblationConfig::new(model, data, train, resolutions);
    config.kernels = kernels;
    config.seeds = seeds;
    config.dropout_p = args.dropout_p;
    let result = with_dtype!(args.dtype, T => ablation_grid::<T>(&config)?);
    std::fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("rows.csv"), sweep_csv(&result.rows).as_bytes())?;
    write_atomic(&args.out.join("summary.csv"), result.summary_csv().as_bytes())?;
    if let Some(svg) = &args.svg {
        write_atomic(svg, sweep_svg(&result.rows).as_bytes())?;
    }
    println!("{:<14} {:<8} {:<8} {:>8} {:>8} {:>8} {:>8}", "kernel", "dropout", "mode", "accuracy", "kernel", "dropout", "mode");
    for c in &result.cells {
        println!(
            "{:<14} {:<8} {:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            c.kernel,
            if c.dropout { "on" } else { "off" },
            c.mode.to_string(),
            c.accuracy,
            c.kernel_ratio,
            c.dropout_ratio,
            c.mode_ratio
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kinds() {
        assert_eq!(Failure::Core(Error::Format("x".into())).code(), 2);
        assert_eq!(Failure::Core(Error::Shape("x".into())).code(), 3);
        assert_eq!(Failure::Core(Error::IncomparableGrids("x".into())).code(), 3);
        assert_eq!(Failure::Core(Error::Divergence { epoch: 0, step: 0, loss: f64::NAN }).code(), 4);
        assert_eq!(Failure::Verification("x".into()).code(), 1);
        assert_eq!(Failure::Usage("x".into()).code(), 64);
    }

    #[test]
    fn mode_lists() {
        assert_eq!(modes("both").unwrap().len(), 2);
        assert_eq!(modes("adapted").unwrap(), vec![EvalMode::Adapted]);
        assert!(modes("sideways").is_err());
    }
}

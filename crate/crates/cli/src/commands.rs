use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use versor::algebra::Engine;
use versor::bench::{self, MIN_REPS};
use versor::model::{
    load_checkpoint, rollout, rollout_mse, save_checkpoint, teacher_forcing_mse, train as fit,
    Composition, GeneratorSet, ModelConfig, NBodyModel, TrainConfig,
};
use versor::selftest::{run_selftest, SelftestOptions};
use versor::tasks::{
    energy_drift, gen_snake_dataset, generate_nbody, mcc, read_jsonl, snake_connectivity_algebraic,
    write_jsonl, NBodyConfig, SnakeLabel, SnakeSample, Trajectory,
};
use versor::{config_hash, FORMAT_VERSION};

use crate::settings::Settings;
use crate::{Common, ModelArgs};

const DEFAULT_LENGTHS: [usize; 7] = [128, 256, 512, 1024, 2048, 4096, 8192];

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn provenance(seed: u64, hash: &str) -> Value {
    json!({ "seed": seed, "config_hash": hash, "format_version": FORMAT_VERSION })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Some(e)) = (base.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            b.insert(k.clone(), v.clone());
        }
    }
    base
}

/// CSV with one extra trailing column per row, which a flattened struct cannot express.
fn to_csv<T: Serialize>(header: &[&str], rows: &[T], extra: &[(&str, String)]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let mut cols: Vec<&str> = header.to_vec();
    cols.extend(extra.iter().map(|(k, _)| *k));
    w.write_record(&cols)?;
    let tail: Vec<&str> = extra.iter().map(|(_, v)| v.as_str()).collect();
    for r in rows {
        w.serialize((r, &tail))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

const PRODUCT_COLUMNS: [&str; 12] = [
    "engine",
    "batch",
    "median_ns",
    "mad_count",
    "intensity",
    "mean_ns",
    "p95_ns",
    "reps",
    "bytes_modeled",
    "counted_ops",
    "seed",
    "format_version",
];
const RRA_COLUMNS: [&str; 8] = [
    "length",
    "median_ns",
    "mean_ns",
    "p95_ns",
    "reps",
    "ns_per_step",
    "seed",
    "format_version",
];

pub fn selftest(common: &Common, corrupt_cayley: bool) -> Result<ExitCode> {
    let settings = Settings::load(common.config.as_deref())?;
    let seed = settings.pick(common.seed, "seed", 0)?;
    let report = run_selftest(&SelftestOptions {
        seed,
        corrupt_cayley,
    });
    let hash = config_hash(&json!({ "seed": seed, "corrupt_cayley": corrupt_cayley }))?;
    let mut body = serde_json::to_value(&report)?;
    body = merge(body, json!({ "config_hash": hash }));
    emit(
        common.out.as_deref(),
        &(serde_json::to_string_pretty(&body)? + "\n"),
    )?;
    if let Some(name) = report.first_failure {
        eprintln!("selftest failed: {name}");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn bench_product(
    common: &Common,
    engine: Option<String>,
    batch: Option<usize>,
    reps: Option<usize>,
) -> Result<ExitCode> {
    let settings = Settings::load(common.config.as_deref())?;
    let seed = settings.pick(common.seed, "seed", 0)?;
    let engine: String = settings.pick(engine, "engine", "all".to_string())?;
    let batch = settings.pick(batch, "batch", 64)?;
    let reps = settings.pick(reps, "reps", MIN_REPS)?;
    let engines: Vec<Engine> = if engine == "all" {
        Engine::ALL.to_vec()
    } else {
        vec![engine.parse()?]
    };
    let hash =
        config_hash(&json!({ "engines": engine, "batch": batch, "reps": reps, "seed": seed }))?;
    let mut rows = Vec::new();
    for e in engines {
        rows.push(bench::bench_product(e, batch, reps, seed)?);
    }
    emit(
        common.out.as_deref(),
        &to_csv(&PRODUCT_COLUMNS, &rows, &[("config_hash", hash)])?,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn parse_lengths(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad length {s:?}"))
        })
        .collect()
}

pub fn bench_rra(
    common: &Common,
    lengths: Option<String>,
    reps: Option<usize>,
) -> Result<ExitCode> {
    let settings = Settings::load(common.config.as_deref())?;
    let seed = settings.pick(common.seed, "seed", 0)?;
    let lengths = match settings.pick_opt(lengths, "lengths")? {
        Some(raw) => parse_lengths(&raw)?,
        None => DEFAULT_LENGTHS.to_vec(),
    };
    let reps = settings.pick(reps, "reps", MIN_REPS)?;
    let hash = config_hash(&json!({ "lengths": lengths, "reps": reps, "seed": seed }))?;
    let result = bench::bench_rra(&lengths, reps, seed)?;
    let extra = [("slope", result.slope.to_string()), ("config_hash", hash)];
    emit(
        common.out.as_deref(),
        &to_csv(&RRA_COLUMNS, &result.rows, &extra)?,
    )?;
    if result.slope.is_finite() {
        eprintln!("log-log slope {:.4}", result.slope);
    }
    Ok(ExitCode::SUCCESS)
}

pub struct GenArgs {
    pub task: Option<String>,
    pub trajectories: Option<usize>,
    pub steps: Option<usize>,
    pub bodies: Option<usize>,
    pub grid: Option<usize>,
    pub samples: Option<usize>,
}

fn nbody_config(settings: &Settings, seed: u64, args: &GenArgs) -> Result<NBodyConfig> {
    let d = NBodyConfig::default();
    Ok(NBodyConfig {
        n_bodies: settings.pick(args.bodies, "bodies", d.n_bodies)?,
        steps: settings.pick(args.steps, "steps", d.steps)?,
        n_trajectories: settings.pick(args.trajectories, "trajectories", d.n_trajectories)?,
        g: settings.pick(None, "g", d.g)?,
        epsilon: settings.pick(None, "epsilon", d.epsilon)?,
        dt: settings.pick(None, "dt", d.dt)?,
        heavy_mass: settings.pick(None, "heavy-mass", d.heavy_mass)?,
        light_mass: settings.pick(None, "light-mass", d.light_mass)?,
        substeps: settings.pick(None, "substeps", d.substeps)?,
        seed,
        ..d
    })
}

#[derive(Serialize)]
struct SnakeConfig {
    grid: usize,
    samples: usize,
    seed: u64,
}

fn snake_config(settings: &Settings, seed: u64, args: &GenArgs) -> Result<SnakeConfig> {
    Ok(SnakeConfig {
        grid: settings.pick(args.grid, "grid", 16)?,
        samples: settings.pick(args.samples, "samples", 1000)?,
        seed,
    })
}

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

fn write_meta(path: &Path, meta: &Value) -> Result<()> {
    fs::write(meta_path(path), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

enum Dataset {
    NBody(Vec<Trajectory>, Value),
    Snake(Vec<SnakeSample>, Value),
}

fn generate(task: &str, settings: &Settings, seed: u64, args: &GenArgs) -> Result<Dataset> {
    match task {
        "nbody" => {
            let cfg = nbody_config(settings, seed, args)?;
            let hash = config_hash(&cfg)?;
            let ds = generate_nbody(&cfg)?;
            if ds.rejections > 0 {
                eprintln!("resampled {} rejected initial conditions", ds.rejections);
            }
            let meta = merge(
                json!({ "task": "nbody", "records": ds.trajectories.len(), "rejections": ds.rejections }),
                provenance(seed, &hash),
            );
            Ok(Dataset::NBody(ds.trajectories, meta))
        }
        "snake" => {
            let cfg = snake_config(settings, seed, args)?;
            let hash = config_hash(&cfg)?;
            let samples = gen_snake_dataset(cfg.grid, cfg.samples, seed)?;
            let meta = merge(
                json!({ "task": "snake", "records": samples.len(), "grid": cfg.grid }),
                provenance(seed, &hash),
            );
            Ok(Dataset::Snake(samples, meta))
        }
        other => bail!("unknown task {other:?}; expected nbody or snake"),
    }
}

fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let meta = match ds {
        Dataset::NBody(t, meta) => {
            write_jsonl(path, t)?;
            meta
        }
        Dataset::Snake(s, meta) => {
            write_jsonl(path, s)?;
            meta
        }
    };
    write_meta(path, meta)
}

pub fn gen(common: &Common, args: GenArgs) -> Result<ExitCode> {
    let settings = Settings::load(common.config.as_deref())?;
    let seed = settings.pick(common.seed, "seed", 0)?;
    let task: String = settings.pick(args.task.clone(), "task", "nbody".to_string())?;
    let ds = generate(&task, &settings, seed, &args)?;
    match &common.out {
        Some(path) => {
            write_dataset(path, &ds)?;
            let meta = match &ds {
                Dataset::NBody(_, m) | Dataset::Snake(_, m) => m,
            };
            println!("{}", serde_json::to_string(meta)?);
        }
        None => {
            let mut text = String::new();
            match &ds {
                Dataset::NBody(t, _) => t.iter().try_for_each(|r| -> Result<()> {
                    text.push_str(&versor::tasks::to_jsonl_line(r)?);
                    text.push('\n');
                    Ok(())
                })?,
                Dataset::Snake(s, _) => s.iter().try_for_each(|r| -> Result<()> {
                    text.push_str(&versor::tasks::to_jsonl_line(r)?);
                    text.push('\n');
                    Ok(())
                })?,
            }
            emit(None, &text)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize, Clone)]
struct RunConfig {
    model: ModelConfig,
    train: TrainConfig,
}

fn run_config(
    settings: &Settings,
    seed: u64,
    args: &ModelArgs,
    n_bodies: usize,
) -> Result<RunConfig> {
    let td = TrainConfig::default();
    let composition: Composition = settings
        .pick(args.composition.clone(), "composition", "rra".to_string())?
        .parse()?;
    let generators: GeneratorSet = settings
        .pick(args.generators.clone(), "generators", "compact".to_string())?
        .parse()?;
    let normalize = if args.no_normalize {
        false
    } else {
        settings.pick(None, "normalize", true)?
    };
    Ok(RunConfig {
        model: ModelConfig {
            composition,
            n_bodies,
            normalize,
            generators,
            seed,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            epochs: settings.pick(args.epochs, "epochs", td.epochs)?,
            lr: settings.pick(args.lr, "lr", td.lr)?,
            batch_size: settings.pick(args.batch_size, "batch-size", td.batch_size)?,
            weight_decay: settings.pick(None, "weight-decay", td.weight_decay)?,
            seed,
            ..td
        },
    })
}

fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let data: Vec<Trajectory> =
        read_jsonl(path).with_context(|| format!("reading dataset {}", path.display()))?;
    if data.is_empty() {
        bail!("dataset {} is empty", path.display());
    }
    Ok(data)
}

fn train_model(run: &RunConfig, data: &[Trajectory]) -> Result<(NBodyModel, Value)> {
    let mut model = NBodyModel::new(run.model.clone(), data)?;
    let history = fit(&mut model, data, &run.train)?;
    let summary = json!({
        "initial_mse": history.initial_mse,
        "final_mse": history.final_mse,
        "epoch_mse": history.epoch_mse,
        "parameters": model.parameter_count(),
    });
    Ok((model, summary))
}

pub fn train(common: &Common, dataset: Option<PathBuf>, args: &ModelArgs) -> Result<ExitCode> {
    let settings = Settings::load(common.config.as_deref())?;
    let seed = settings.pick(common.seed, "seed", 0)?;
    let Some(path) = settings.pick_opt(dataset, "dataset")? else {
        bail!("missing dataset path (--dataset)")
    };
    let data = load_trajectories(&path)?;
    let run = run_config(&settings, seed, args, data[0].masses.len())?;
    let hash = config_hash(&run)?;
    let (model, summary) = train_model(&run, &data)?;
    if let Some(out) = &common.out {
        save_checkpoint(&model, out)?;
    }
    println!(
        "{}",
        serde_json::to_string(&merge(summary, provenance(seed, &hash)))?
    );
    Ok(ExitCode::SUCCESS)
}

pub struct EvalArgs {
    pub task: Option<String>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub horizon: Option<usize>,
}

fn nbody_metrics(model: &NBodyModel, data: &[Trajectory], horizon: usize) -> Result<Value> {
    let tf = teacher_forcing_mse(model, data)?;
    let (mut mse_sum, mut drift_sum, mut counted, mut truncated) = (0.0, 0.0, 0usize, 0usize);
    for t in data {
        let window = t.frames.len() / 2;
        let h = horizon.min(t.frames.len() - window);
        if window == 0 || h == 0 {
            continue;
        }
        let mut predictor = model.predictor()?;
        let r = rollout(&mut predictor, &t.frames[..window], h)?;
        if !r.is_complete(h) {
            truncated += 1;
        }
        if r.frames.is_empty() {
            continue;
        }
        mse_sum += rollout_mse(&r.frames, &t.frames[window..])?;
        let mut path = vec![t.frames[window - 1].clone()];
        path.extend(r.frames);
        drift_sum += energy_drift(&path, &t.masses, t.config.g, t.config.epsilon)?;
        counted += 1;
    }
    let mean = |s: f64| {
        if counted > 0 {
            s / counted as f64
        } else {
            f64::NAN
        }
    };
    Ok(json!({
        "task": "nbody",
        "teacher_forcing_mse": tf,
        "rollout_mse": mean(mse_sum),
        "energy_drift_pct": mean(drift_sum),
        "rollout_horizon": horizon,
        "rollouts_truncated": truncated,
        "parameters": model.parameter_count(),
    }))
}

pub fn eval(common: &Common, args: EvalArgs, model_args: &ModelArgs) -> Result<ExitCode> {
    let settings = Settings::load(common.config.as_deref())?;
    let seed = settings.pick(common.seed, "seed", 0)?;
    let task: String = settings.pick(args.task.clone(), "task", "nbody".to_string())?;
    if task != "nbody" && task != "snake" {
        bail!("unknown task {task:?}; expected nbody or snake");
    }
    let Some(path) = settings.pick_opt(args.dataset.clone(), "dataset")? else {
        bail!("missing dataset path (--dataset)")
    };
    let gen_args = GenArgs {
        task: None,
        trajectories: None,
        steps: None,
        bodies: None,
        grid: None,
        samples: None,
    };
    if !path.exists() {
        write_dataset(&path, &generate(&task, &settings, seed, &gen_args)?)?;
    }
    let metrics = if task == "snake" {
        let samples: Vec<SnakeSample> = read_jsonl(&path)?;
        let pred: Vec<bool> = samples
            .iter()
            .map(|s| snake_connectivity_algebraic(s).map(|l| l == SnakeLabel::Broken))
            .collect::<versor::Result<_>>()?;
        let labels: Vec<bool> = samples
            .iter()
            .map(|s| s.label == SnakeLabel::Broken)
            .collect();
        let hash = config_hash(&json!({ "task": "snake", "dataset": path, "seed": seed }))?;
        merge(
            json!({ "task": "snake", "detector": "algebraic", "mcc": mcc(&pred, &labels)?, "samples": samples.len() }),
            provenance(seed, &hash),
        )
    } else {
        let data = load_trajectories(&path)?;
        let horizon = settings.pick(args.horizon, "horizon", 50)?;
        if horizon == 0 {
            bail!("horizon must be at least 1");
        }
        let run = run_config(&settings, seed, model_args, data[0].masses.len())?;
        let (model, train_summary) = match &args.checkpoint {
            Some(ck) => (load_checkpoint(ck)?, json!({ "checkpoint": ck })),
            None => {
                let (m, s) = train_model(&run, &data)?;
                (
                    m,
                    json!({ "epochs": run.train.epochs, "initial_mse": s["initial_mse"] }),
                )
            }
        };
        let hash =
            config_hash(&json!({ "run": run, "horizon": horizon, "checkpoint": args.checkpoint }))?;
        merge(
            merge(nbody_metrics(&model, &data, horizon)?, train_summary),
            provenance(seed, &hash),
        )
    };
    let text = serde_json::to_string_pretty(&metrics)? + "\n";
    emit(None, &text)?;
    if let Some(out) = &common.out {
        fs::write(out, &text)?;
    }
    Ok(ExitCode::SUCCESS)
}

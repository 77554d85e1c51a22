//! The `aniso` command-line driver.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::checks::{run_scope, Scope};
use crate::covariance::{CovarianceFamily, CovarianceSpec, DiagonalCovariance, Domain, GroupPartition, PhiBounds, Shape};
use crate::density::{blind_estimate, calibrate, write_blind_csv, BlindRow, NormalizationRecord};
use crate::energymodel::{Energy, ModelConfig, QuadraticMixtureEnergy};
use crate::error::{Error, Result};
use crate::io::{create_new, read_array_file, write_array, write_trajectory};
use crate::oracle::OraclePrior;
use crate::record::Record;
use crate::sampling::{
    chain_rng, posterior_sample, posterior_sample_chains, write_diagnostics_csv, CorrectorKind, SamplerConfig,
    ScheduleMode, StepSize,
};
use crate::training::{train, write_metrics_csv, Dataset, TrainingConfig};

const CONFIG_HELP: &str = "\
Configuration files are flat `key = value` text. A `[name]` line prefixes
the keys below it with `name.`; `#` starts a comment; arrays are comma
separated. Every seed is explicit.

Sections used by the commands:

  [data]        kind = gsm | field
                gsm:   dim, weights, variances
                field: dims (h,w), exponent, cutoff  (or spectrum)
                samples (dataset size; omit to draw fresh), seed
  [prior]       same keys as [data]; an analytic model for sample/denoise/blind
  [model]       checkpoint = path   (learned model for sample/denoise/blind)
                train: components, hidden, depth, embed_floor, seed,
                partition = halves | singletons | single | patches, patch_size
  [training]    batch_size, steps, learning_rate, warmup_steps, clip_norm,
                phi_min, phi_max, adsm_weight, acsm_weight, seed,
                metrics_every, checkpoint_every
  [measurement] file = path to an ANISO1 array of measurements
  [covariance]  family = explicit | box | half_mask | patch | blur | superres,
                dims, domain, phi_min, phi_max and the family parameters
                (phi; box_size, sigma_in, sigma_out; patch_size, variances;
                blur_width, sigma, eps; factor, sigma, eps)
  [sampler]     mode = fixed | adaptive, levels, corrector = none | ula | mala,
                corrector_steps, step_ratio | step_fixed, temperature,
                schedule_end, adaptive_eta, psd_floor, max_levels, chains,
                seed, trajectory = true | false
  [sweep]       denoise only: clean = path, sigma_in = list, seed
  [candidates]  blind: family = box (dims, sizes, sigma_in, sigma_out)
                       | grouped (values: every pair over two groups)
  [calibration] blind with a learned model: samples, seed
  [output]      dir

Array files hold a text line `ANISO1 n d` followed by n*d little-endian
f64 values. Outputs are never overwritten.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 output
already exists. ANISO_THREADS overrides --threads.";

#[derive(Debug, Parser)]
#[command(name = "aniso", version, about = "Covariance-conditioned energy models for linear inverse problems", long_about = CONFIG_HELP)]
pub struct Cli {
    /// Worker threads; 1 is fully deterministic and sequential.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an energy model by dual score matching.
    Train { config: PathBuf },
    /// Draw posterior samples for each measurement.
    Sample { config: PathBuf },
    /// One-shot posterior mean for each measurement.
    Denoise { config: PathBuf },
    /// Score candidate covariances for each measurement.
    Blind { config: PathBuf },
    /// Run numerical self-checks.
    Check {
        /// Comma-separated scopes: grad, fp_identity, tweedie, bregman, mala.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        scope: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(e) if e.kind() == std::io::ErrorKind::AlreadyExists => 4,
        Error::Io(_) | Error::Parse(_) | Error::Parameter(_) | Error::Dimension(_) => 2,
        _ => 3,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = std::env::var("ANISO_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(cli.threads)
        .max(1);
    // A global pool may already exist when called repeatedly in-process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Termination { trajectory, .. } = &e {
                eprintln!("trajectory reached {} levels", trajectory.diagnostics.len());
            }
            exit_code(&e)
        }
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Train { config } => cmd_train(&load(config)?),
        Command::Sample { config } => cmd_sample(&load(config)?),
        Command::Denoise { config } => cmd_denoise(&load(config)?),
        Command::Blind { config } => cmd_blind(&load(config)?),
        Command::Check { scope, seed } => cmd_check(scope, *seed),
    }
}

fn load(path: &Path) -> Result<Record> {
    let text = fs::read_to_string(path).map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    Record::parse(&text)
}

fn output_dir(cfg: &Record) -> Result<PathBuf> {
    let dir = PathBuf::from(cfg.get_or("output.dir", ".".to_string())?);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Fails with `AlreadyExists` before any work if an output is present.
fn ensure_fresh(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if p.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} already exists", p.display()),
            )));
        }
    }
    Ok(())
}

fn partition_for(cfg: &Record, shape: Shape) -> Result<GroupPartition> {
    match cfg.get_or("model.partition", "halves".to_string())?.as_str() {
        "halves" => GroupPartition::halves(shape.len),
        "singletons" => Ok(GroupPartition::singletons(shape.len)),
        "single" => GroupPartition::single(shape.len),
        "patches" => {
            let (h, w) = shape.grid.ok_or_else(|| Error::param("patch partition needs 2-D data"))?;
            GroupPartition::patches(h, w, cfg.get("model.patch_size")?)
        }
        other => Err(Error::parse(format!("unknown partition `{other}`"))),
    }
}

fn data_shape(prior: &OraclePrior) -> Shape {
    match prior {
        OraclePrior::Gsm(p) => Shape::flat(p.dim()),
        OraclePrior::Field(p) => p.shape(),
    }
}

pub fn training_config(cfg: &Record) -> Result<TrainingConfig> {
    let d = TrainingConfig::default();
    let t = cfg.section("training");
    Ok(TrainingConfig {
        batch_size: t.get_or("batch_size", d.batch_size)?,
        steps: t.get_or("steps", d.steps)?,
        learning_rate: t.get_or("learning_rate", d.learning_rate)?,
        warmup_steps: t.get_or("warmup_steps", d.warmup_steps)?,
        clip_norm: t.get_or("clip_norm", d.clip_norm)?,
        phi_range: PhiBounds {
            min: t.get_or("phi_min", d.phi_range.min)?,
            max: t.get_or("phi_max", d.phi_range.max)?,
        },
        adsm_weight: t.get_or("adsm_weight", d.adsm_weight)?,
        acsm_weight: t.get_or("acsm_weight", d.acsm_weight)?,
        seed: t.get("seed")?,
        metrics_every: t.get_or("metrics_every", d.metrics_every)?,
    })
}

fn cmd_train(cfg: &Record) -> Result<()> {
    let prior = OraclePrior::from_record(&cfg.section("data"))?;
    let shape = data_shape(&prior);
    let defaults = ModelConfig::default();
    let m = cfg.section("model");
    let model_cfg = ModelConfig {
        components: m.get_or("components", defaults.components)?,
        hidden: m.get_or("hidden", defaults.hidden)?,
        depth: m.get_or("depth", defaults.depth)?,
        embed_floor: m.get_or("embed_floor", defaults.embed_floor)?,
    };
    let tc = training_config(cfg)?;
    tc.validate()?;
    let checkpoint_every: usize = cfg.get_or("output.checkpoint_every", 0)?;
    let dir = output_dir(cfg)?;
    let (ckpt, metrics, run) = (dir.join("checkpoint.txt"), dir.join("metrics.csv"), dir.join("run.txt"));
    ensure_fresh(&[&ckpt, &metrics, &run])?;

    let mut rng = ChaCha8Rng::seed_from_u64(m.get("seed")?);
    let mut model = QuadraticMixtureEnergy::new(&model_cfg, partition_for(cfg, shape)?, shape, &mut rng)?;
    let dataset = match cfg.raw("data.samples") {
        Some(_) => Some(Dataset::from_prior(&prior, cfg.get("data.samples")?, cfg.get("data.seed")?)?),
        None => None,
    };
    let phi_max = tc.phi_range.max;
    let save = |path: &Path, model: &QuadraticMixtureEnergy, meta: &crate::energymodel::CheckpointMeta| -> Result<()> {
        let mut rec = model.to_checkpoint(meta);
        rec.set("meta.phi_max", phi_max);
        create_new(path)?.write_all(rec.to_text().as_bytes())?;
        Ok(())
    };
    let mut hook = |step: usize, model: &QuadraticMixtureEnergy, _: &[crate::training::MetricsRow]| -> Result<()> {
        if checkpoint_every > 0 && step % checkpoint_every == 0 && step < tc.steps {
            let meta = crate::energymodel::CheckpointMeta {
                step,
                seed: tc.seed,
                loss_tail: Vec::new(),
            };
            save(&dir.join(format!("checkpoint_step{step}.txt")), model, &meta)?;
        }
        Ok(())
    };
    let source: &dyn crate::training::DataSource = match &dataset {
        Some(d) => d,
        None => &prior,
    };
    let out = train(&mut model, &tc, source, Some(&mut hook))?;
    save(&ckpt, &model, &out.meta)?;
    write_metrics_csv(create_new(&metrics)?, &out.metrics)?;
    let mut echo = cfg.clone();
    echo.set("result.steps", out.meta.step);
    echo.set_floats("result.loss_tail", &out.meta.loss_tail);
    echo.set("result.num_params", model.num_params());
    create_new(&run)?.write_all(echo.to_text().as_bytes())?;
    println!("trained {} steps; checkpoint at {}", out.meta.step, ckpt.display());
    Ok(())
}

enum ModelSource {
    Learned { model: QuadraticMixtureEnergy, phi_max: f64 },
    Oracle(OraclePrior),
}

impl ModelSource {
    fn load(cfg: &Record) -> Result<Self> {
        if let Some(path) = cfg.raw("model.checkpoint") {
            let rec = Record::parse(&fs::read_to_string(path).map_err(|e| Error::parse(format!("{path}: {e}")))?)?;
            let phi_max = rec.get_or("meta.phi_max", 1e2)?;
            let (model, _) = QuadraticMixtureEnergy::from_checkpoint(&rec)?;
            Ok(Self::Learned { model, phi_max })
        } else {
            Ok(Self::Oracle(OraclePrior::from_record(&cfg.section("prior"))?))
        }
    }

    fn energy(&self) -> &dyn Energy {
        match self {
            Self::Learned { model, .. } => model,
            Self::Oracle(p) => p.as_energy(),
        }
    }

    fn shape(&self) -> Shape {
        match self {
            Self::Learned { model, .. } => model.shape(),
            Self::Oracle(p) => data_shape(p),
        }
    }

    /// Learned energies are calibrated at the top of their training range;
    /// analytic ones are already normalized.
    fn normalization(&self, cfg: &Record) -> Result<NormalizationRecord> {
        let shape = self.shape();
        match self {
            Self::Learned { model, phi_max } => {
                let bounds = PhiBounds::new(PhiBounds::default().min, *phi_max)?;
                let cal = DiagonalCovariance::uniform(Domain::Spatial, shape, *phi_max, bounds)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.get("calibration.seed")?);
                calibrate(model, &cal, cfg.get_or("calibration.samples", 10_000)?, &mut rng)
            }
            Self::Oracle(_) => Ok(NormalizationRecord {
                offset: 0.0,
                calibration: DiagonalCovariance::floor(Domain::Spatial, shape, PhiBounds::default()),
                samples: 0,
                stderr: f64::MIN_POSITIVE,
            }),
        }
    }
}

fn measurements(cfg: &Record, d: usize) -> Result<Vec<Vec<f64>>> {
    let ys = read_array_file(Path::new(cfg.str("measurement.file")?))?;
    if ys.iter().any(|y| y.len() != d) {
        return Err(Error::dim(format!("measurements must have {d} columns")));
    }
    Ok(ys)
}

fn measurement_covariance(cfg: &Record) -> Result<DiagonalCovariance> {
    CovarianceSpec::from_record(&cfg.section("covariance"))?.build()
}

pub fn sampler_config(cfg: &Record) -> Result<SamplerConfig> {
    let d = SamplerConfig::default();
    let s = cfg.section("sampler");
    let mode = match s.get_or("mode", "fixed".to_string())?.as_str() {
        "fixed" => ScheduleMode::FixedGeometric,
        "adaptive" => ScheduleMode::Adaptive,
        other => return Err(Error::parse(format!("unknown sampler mode `{other}`"))),
    };
    let corrector = match s.get_or("corrector", "ula".to_string())?.as_str() {
        "none" => CorrectorKind::None,
        "ula" => CorrectorKind::Ula,
        "mala" => CorrectorKind::Mala,
        other => return Err(Error::parse(format!("unknown corrector `{other}`"))),
    };
    let step = match (s.raw("step_fixed"), s.raw("step_ratio")) {
        (Some(_), Some(_)) => return Err(Error::parse("set only one of step_fixed and step_ratio")),
        (Some(_), None) => StepSize::Fixed(s.get("step_fixed")?),
        (None, Some(_)) => StepSize::Ratio(s.get("step_ratio")?),
        (None, None) => d.step,
    };
    Ok(SamplerConfig {
        mode,
        levels: s.get_or("levels", d.levels)?,
        corrector,
        corrector_steps: s.get_or("corrector_steps", d.corrector_steps)?,
        step,
        temperature: s.get_or("temperature", d.temperature)?,
        schedule_end: s.get_or("schedule_end", d.schedule_end)?,
        adaptive_eta: s.get_or("adaptive_eta", d.adaptive_eta)?,
        psd_floor: s.get_or("psd_floor", d.psd_floor)?,
        max_levels: if s.contains("max_levels") { Some(s.get("max_levels")?) } else { None },
        retain_iterates: s.get_or("trajectory", false)?,
        seed: s.get("seed")?,
    })
}

fn cmd_sample(cfg: &Record) -> Result<()> {
    let source = ModelSource::load(cfg)?;
    let model = source.energy();
    let meas = measurement_covariance(cfg)?;
    let ys = measurements(cfg, model.dim())?;
    let sc = sampler_config(cfg)?;
    let chains: usize = cfg.get_or("sampler.chains", 1)?;
    let dir = output_dir(cfg)?;
    let (samples, diag, traj_path) = (dir.join("samples.bin"), dir.join("diagnostics.csv"), dir.join("trajectory.bin"));
    ensure_fresh(&[&samples, &diag, &traj_path])?;

    let inputs: Vec<Vec<f64>> = ys.iter().flat_map(|y| std::iter::repeat_n(y.clone(), chains)).collect();
    let (xs, traj) = match sc.mode {
        ScheduleMode::FixedGeometric => posterior_sample_chains(model, &inputs, &meas, None, &sc)?,
        ScheduleMode::Adaptive => {
            let mut xs = Vec::with_capacity(inputs.len());
            let mut first = None;
            for (i, y) in inputs.iter().enumerate() {
                let (x, t) = posterior_sample(model, y, &meas, None, &sc, &mut chain_rng(sc.seed, i))?;
                xs.push(x);
                first.get_or_insert(t);
            }
            (xs, first.unwrap_or_default())
        }
    };
    write_array(create_new(&samples)?, &xs)?;
    write_diagnostics_csv(create_new(&diag)?, &traj.diagnostics)?;
    if sc.retain_iterates && !inputs.is_empty() {
        let (_, t) = posterior_sample(model, &inputs[0], &meas, None, &sc, &mut chain_rng(sc.seed, 0))?;
        write_trajectory(create_new(&traj_path)?, &t)?;
    }
    println!("wrote {} samples to {}", xs.len(), samples.display());
    Ok(())
}

fn cmd_denoise(cfg: &Record) -> Result<()> {
    let source = ModelSource::load(cfg)?;
    let model = source.energy();
    let dir = output_dir(cfg)?;
    let (out, sweep_path) = (dir.join("denoised.bin"), dir.join("sweep.csv"));
    let has_meas = cfg.contains("measurement.file");
    let has_sweep = cfg.contains("sweep.clean");
    if !has_meas && !has_sweep {
        return Err(Error::parse("denoise needs measurement.file or sweep.clean"));
    }
    ensure_fresh(&[&out, &sweep_path])?;
    if has_meas {
        let meas = measurement_covariance(cfg)?;
        let ys = measurements(cfg, model.dim())?;
        let xs = ys
            .iter()
            .map(|y| model.posterior_mean(y, &meas))
            .collect::<Result<Vec<_>>>()?;
        write_array(create_new(&out)?, &xs)?;
        println!("wrote {} estimates to {}", xs.len(), out.display());
    }
    if has_sweep {
        let clean = read_array_file(Path::new(cfg.str("sweep.clean")?))?;
        let spec = CovarianceSpec::from_record(&cfg.section("covariance"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.get("sweep.seed")?);
        let mut w = create_new(&sweep_path)?;
        writeln!(w, "sigma_in_sq,mse")?;
        for s in cfg.list::<f64>("sweep.sigma_in")? {
            let mut spec = spec.clone();
            match &mut spec.family {
                CovarianceFamily::Box { sigma_in, .. } | CovarianceFamily::HalfMask { sigma_in, .. } => *sigma_in = s,
                _ => return Err(Error::parse("sweeps need a box or half_mask covariance")),
            }
            let cov = spec.build()?;
            let mut mse = 0.0;
            for x in &clean {
                let v: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let noise = cov.apply_sqrt(&v)?;
                let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
                let m = model.posterior_mean(&y, &cov)?;
                mse += m.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
            }
            writeln!(w, "{},{}", s * s, mse / clean.len() as f64)?;
        }
        w.flush()?;
        println!("wrote {}", sweep_path.display());
    }
    Ok(())
}

/// Candidate covariances with their two display parameters.
fn candidates(cfg: &Record, source: &ModelSource) -> Result<Vec<(DiagonalCovariance, f64, f64)>> {
    let c = cfg.section("candidates");
    let bounds = PhiBounds::default();
    match c.str("family")? {
        "box" => {
            let (h, w) = source
                .shape()
                .grid
                .ok_or_else(|| Error::param("box candidates need a 2-D model"))?;
            let sigma_out: f64 = c.get("sigma_out")?;
            let mut out = Vec::new();
            for s in c.list::<usize>("sizes")? {
                for g in c.list::<f64>("sigma_in")? {
                    out.push((crate::covariance::make_box_covariance(h, w, s, g, sigma_out, bounds)?, s as f64, g));
                }
            }
            Ok(out)
        }
        "grouped" => {
            let ModelSource::Learned { model, .. } = source else {
                return Err(Error::param("grouped candidates need a learned model"));
            };
            let part = model.partition();
            if part.num_groups() != 2 {
                return Err(Error::param("grouped candidates need a two-group model"));
            }
            let values: Vec<f64> = c.list("values")?;
            let mut out = Vec::new();
            for &a in &values {
                for &b in &values {
                    let phi = part.expand(&[a, b])?;
                    out.push((DiagonalCovariance::new(Domain::Spatial, model.shape(), phi, bounds)?, a, b));
                }
            }
            Ok(out)
        }
        other => Err(Error::parse(format!("unknown candidate family `{other}`"))),
    }
}

fn cmd_blind(cfg: &Record) -> Result<()> {
    let source = ModelSource::load(cfg)?;
    let model = source.energy();
    let ys = measurements(cfg, model.dim())?;
    let cands = candidates(cfg, &source)?;
    if cands.is_empty() {
        return Err(Error::parse("empty candidate grid"));
    }
    let dir = output_dir(cfg)?;
    let paths: Vec<PathBuf> = if ys.len() == 1 {
        vec![dir.join("blind.csv")]
    } else {
        (0..ys.len()).map(|i| dir.join(format!("blind_{i}.csv"))).collect()
    };
    ensure_fresh(&paths.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let norm = source.normalization(cfg)?;
    let covs: Vec<DiagonalCovariance> = cands.iter().map(|c| c.0.clone()).collect();
    for (i, (y, path)) in ys.iter().zip(&paths).enumerate() {
        let (best, scores) = blind_estimate(model, &norm, y, &covs)?;
        let rows: Vec<BlindRow> = cands
            .iter()
            .zip(&scores)
            .enumerate()
            .map(|(k, ((_, p1, p2), s))| BlindRow {
                candidate_id: k,
                param1: *p1,
                param2: *p2,
                log_density: *s,
            })
            .collect();
        write_blind_csv(create_new(path)?, &rows)?;
        println!(
            "measurement {i}: argmax candidate {best} (param1 = {}, param2 = {}) log density {} +- {}",
            cands[best].1, cands[best].2, scores[best], norm.stderr
        );
    }
    Ok(())
}

fn cmd_check(scopes: &[String], seed: u64) -> Result<()> {
    let scopes = scopes
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| Scope::parse(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    if scopes.is_empty() {
        return Err(Error::parse("no check scope given"));
    }
    let mut failed = 0;
    for scope in scopes {
        for r in run_scope(scope, seed)? {
            println!("[{}] {r}", scope.as_str());
            failed += (!r.passed) as usize;
        }
    }
    if failed > 0 {
        return Err(Error::Contract(format!("{failed} checks failed")));
    }
    Ok(())
}

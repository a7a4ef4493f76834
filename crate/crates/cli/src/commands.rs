use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use koopman_ib::allocation::{entropy_regularized_allocation, gains_from_model, water_fill, Allocation, SpectralGains};
use koopman_ib::dynamics::{
    add_observation_noise, lorenz63_ensemble, simulate_linear_gaussian, vanderpol_ensemble, Normalization, Trajectory,
};
use koopman_ib::evaluation::{evaluate, EvalConfig};
use koopman_ib::gaussian_info::{InfoReport, LinearGaussianKoopman, ModelFile};
use koopman_ib::koopman_ae::{
    gradient_check, koopman_spectrum, log_csv, spectrum_csv, train, Checkpoint, KoopmanAutoencoder, Mode, Term, TrainConfig,
};

use crate::resolve::{read_config_file, resolve, sidecar, write_json, write_text, Flags};
use crate::{CliError, Outcome};

fn read_trajectories(paths: &[PathBuf]) -> Result<Vec<Trajectory<f64>>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Input("no data files given".into()));
    }
    paths.iter().map(|p| read_csv(p)).collect()
}

fn read_csv(path: &Path) -> Result<Trajectory<f64>, CliError> {
    Trajectory::read_csv(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<LinearGaussianKoopman<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(file.into_model()?)
}

fn emit_json<V: Serialize>(out: Option<&Path>, v: &V) -> Result<(), CliError> {
    match out {
        Some(p) => write_json(p, v),
        None => {
            let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Numeric(e.to_string()))?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Input(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: String,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    /// Van der Pol damping.
    pub mu: f64,
    /// Observation noise as a fraction of each coordinate's std.
    pub noise: f64,
    /// Linear-Gaussian model JSON, required for `linear_gaussian`.
    pub model: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            system: "lorenz63".into(),
            steps: 1000,
            dt: 0.1,
            seed: 0,
            mu: 1.0,
            noise: 0.0,
            model: None,
            out: "trajectory.csv".into(),
        }
    }
}

pub fn simulate(file: Option<PathBuf>, flags: Flags) -> Result<Outcome, CliError> {
    let cfg: SimulateConfig = resolve(&SimulateConfig::default(), file.as_deref().map(read_config_file).transpose()?, flags.into_map())?;
    let csv = match cfg.system.as_str() {
        "lorenz63" | "vanderpol" => {
            let mut t = if cfg.system == "lorenz63" {
                lorenz63_ensemble(1, cfg.steps, cfg.dt, cfg.seed)?
            } else {
                vanderpol_ensemble(1, cfg.steps, cfg.dt, cfg.mu, 0, cfg.seed)?
            }
            .remove(0);
            if cfg.noise > 0.0 {
                t = add_observation_noise(&t, cfg.noise, cfg.seed.wrapping_add(1))?;
            }
            t.to_csv_string()
        }
        "linear_gaussian" => {
            let path = cfg.model.as_ref().ok_or_else(|| CliError::Input("linear_gaussian needs --model".into()))?;
            let model = read_model(path)?;
            let z0 = DVector::zeros(model.latent_dim());
            simulate_linear_gaussian(&model, &z0, cfg.steps, cfg.seed)?.to_csv_string()
        }
        other => return Err(CliError::Input(format!("unknown system `{other}` (lorenz63, vanderpol, linear_gaussian)"))),
    };
    write_text(&cfg.out, &csv)?;
    write_json(&sidecar(&cfg.out), &cfg)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    pub preset: String,
    pub data: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Fit a per-coordinate normalization on the data before training.
    pub normalize: bool,
    pub train: TrainConfig,
}

pub fn train_cmd(file: Option<PathBuf>, preset: Option<String>, flags: Flags) -> Result<Outcome, CliError> {
    let file = file.as_deref().map(read_config_file).transpose()?;
    let preset = preset
        .or_else(|| file.as_ref().and_then(|f| f.get("preset")).and_then(|p| p.as_str()).map(String::from))
        .unwrap_or_else(|| "default".into());
    let base = TrainRun { preset: preset.clone(), data: vec![], out_dir: "train_out".into(), normalize: true, train: TrainConfig::preset(&preset)? };
    let mut cfg: TrainRun = resolve(&base, file, flags.into_map())?;
    cfg.preset = preset;
    cfg.train.validate()?;
    let raw = read_trajectories(&cfg.data)?;
    let (data, norm) = if cfg.normalize {
        let n = Normalization::fit(&raw)?;
        (raw.iter().map(|t| n.apply(t)).collect::<koopman_ib::Result<Vec<_>>>()?, Some(n))
    } else {
        (raw, None)
    };
    let out = train(&data, &cfg.train)?;
    let dir = &cfg.out_dir;
    Checkpoint::from_model(&out.model, &cfg.train, norm).write(dir.join("checkpoint.json"))?;
    write_text(&dir.join("train_log.csv"), &log_csv(&out.log))?;
    write_json(&dir.join("resolved_config.json"), &cfg)?;
    Ok(match out.divergence {
        Some(reason) => Outcome::Numeric(format!("training diverged ({reason}); last good checkpoint kept")),
        None => Outcome::Done,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRun {
    pub checkpoint: PathBuf,
    pub data: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Store the measured runtime; off by default so reports stay
    /// byte-reproducible.
    pub record_runtime: bool,
    pub eval: EvalConfig,
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, KoopmanAutoencoder<f64>), CliError> {
    let ck = Checkpoint::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let model = ck.to_model()?;
    Ok((ck, model))
}

fn normalized(ck: &Checkpoint, trajs: Vec<Trajectory<f64>>) -> Result<Vec<Trajectory<f64>>, CliError> {
    match &ck.normalization {
        Some(n) => Ok(trajs.iter().map(|t| n.apply(t)).collect::<koopman_ib::Result<Vec<_>>>()?),
        None => Ok(trajs),
    }
}

pub fn eval_cmd(file: Option<PathBuf>, flags: Flags) -> Result<Outcome, CliError> {
    let base = EvalRun { checkpoint: "checkpoint.json".into(), data: vec![], out_dir: "eval_out".into(), record_runtime: false, eval: EvalConfig::default() };
    let cfg: EvalRun = resolve(&base, file.as_deref().map(read_config_file).transpose()?, flags.into_map())?;
    let (ck, model) = load_checkpoint(&cfg.checkpoint)?;
    let tests = normalized(&ck, read_trajectories(&cfg.data)?)?;
    let mut report = evaluate(&model, &tests, &cfg.eval)?;
    if !cfg.record_runtime {
        report.runtime_seconds = 0.0;
    }
    write_json(&cfg.out_dir.join("eval.json"), &report)?;
    write_text(&cfg.out_dir.join("eval.csv"), &report.to_csv())?;
    write_json(&cfg.out_dir.join("resolved_config.json"), &cfg)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoRun {
    pub model: PathBuf,
    pub n: usize,
    pub out: Option<PathBuf>,
}

pub fn info(file: Option<PathBuf>, flags: Flags) -> Result<Outcome, CliError> {
    let base = InfoRun { model: "model.json".into(), n: 5, out: None };
    let cfg: InfoRun = resolve(&base, file.as_deref().map(read_config_file).transpose()?, flags.into_map())?;
    let report = InfoReport::compute(&read_model(&cfg.model)?, cfg.n)?;
    emit_json(cfg.out.as_deref(), &report)?;
    if let Some(out) = &cfg.out {
        write_json(&sidecar(out), &cfg)?;
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateRun {
    pub gains: Option<Vec<f64>>,
    /// Take gains from the `n`-step forward operator of this model instead.
    pub model: Option<PathBuf>,
    pub n: usize,
    pub budget: f64,
    pub gamma: f64,
    pub out: Option<PathBuf>,
}

pub fn allocate(file: Option<PathBuf>, flags: Flags) -> Result<Outcome, CliError> {
    let base = AllocateRun { gains: None, model: None, n: 1, budget: 1.0, gamma: 0.0, out: None };
    let cfg: AllocateRun = resolve(&base, file.as_deref().map(read_config_file).transpose()?, flags.into_map())?;
    let gains = match (&cfg.gains, &cfg.model) {
        (Some(g), None) => SpectralGains::new(g.clone())?,
        (None, Some(m)) => gains_from_model(&read_model(m)?, cfg.n)?,
        _ => return Err(CliError::Input("give exactly one of --gains or --model".into())),
    };
    let alloc: Allocation<f64> = if cfg.gamma == 0.0 {
        water_fill(&gains, cfg.budget)?
    } else {
        entropy_regularized_allocation(&gains, cfg.budget, cfg.gamma)?
    };
    emit_json(cfg.out.as_deref(), &alloc)?;
    if let Some(out) = &cfg.out {
        write_json(&sidecar(out), &cfg)?;
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumRun {
    pub checkpoint: PathBuf,
    pub out: Option<PathBuf>,
}

pub fn spectrum(file: Option<PathBuf>, flags: Flags) -> Result<Outcome, CliError> {
    let base = SpectrumRun { checkpoint: "checkpoint.json".into(), out: None };
    let cfg: SpectrumRun = resolve(&base, file.as_deref().map(read_config_file).transpose()?, flags.into_map())?;
    let (_, model) = load_checkpoint(&cfg.checkpoint)?;
    let csv = spectrum_csv(&koopman_spectrum(&model.k)?);
    match &cfg.out {
        Some(out) => {
            write_text(out, &csv)?;
            write_json(&sidecar(out), &cfg)?;
        }
        None => print!("{csv}"),
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckRun {
    /// Checked model; a fresh one is built from `train` when absent.
    pub checkpoint: Option<PathBuf>,
    /// Batch source; the first `train.batch` states are used. A Lorenz
    /// window is simulated when absent.
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub train: TrainConfig,
    pub out: Option<PathBuf>,
}

pub fn gradcheck(file: Option<PathBuf>, flags: Flags) -> Result<Outcome, CliError> {
    let small = TrainConfig { latent_dim: 4, hidden: vec![16, 16], batch: 16, ..TrainConfig::default() };
    let base = GradcheckRun { checkpoint: None, data: None, seed: 0, train: small, out: None };
    let cfg: GradcheckRun = resolve(&base, file.as_deref().map(read_config_file).transpose()?, flags.into_map())?;
    let (train_cfg, model, norm) = match &cfg.checkpoint {
        Some(p) => {
            let (ck, m) = load_checkpoint(p)?;
            (TrainConfig { batch: cfg.train.batch, ..ck.config.clone() }, m, ck.normalization)
        }
        None => {
            cfg.train.validate()?;
            let obs = match &cfg.data {
                Some(p) => read_csv(p)?.dim(),
                None => 3,
            };
            let m = KoopmanAutoencoder::init(obs, cfg.train.latent_dim, &cfg.train.hidden, cfg.train.mode, cfg.train.seed)?;
            (cfg.train.clone(), m, None)
        }
    };
    let traj = match &cfg.data {
        Some(p) => read_csv(p)?,
        None => {
            let t = lorenz63_ensemble(1, train_cfg.batch, 0.1, cfg.seed)?.remove(0);
            Normalization::fit(std::slice::from_ref(&t))?.apply(&t)?
        }
    };
    let traj = match &norm {
        Some(n) => n.apply(&traj)?,
        None => traj,
    };
    if traj.len() < train_cfg.batch {
        return Err(CliError::Input(format!("data has fewer than {} states", train_cfg.batch)));
    }
    let batch = DMatrix::from_fn(train_cfg.batch, traj.dim(), |r, c| traj.states()[r][c]);
    let terms: &[Term] = match train_cfg.mode {
        Mode::Ae => &Term::AE,
        Mode::Vae => &Term::VAE,
    };
    let report = gradient_check(&model, &batch, &train_cfg, cfg.seed, terms)?;
    emit_json(cfg.out.as_deref(), &report)?;
    if let Some(out) = &cfg.out {
        write_json(&sidecar(out), &cfg)?;
    }
    Ok(if report.passed {
        Outcome::Done
    } else {
        let worst = report.terms.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
        Outcome::Numeric(format!("gradient check failed: max relative error {worst:e}"))
    })
}

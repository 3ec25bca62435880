//! Command-line front end: training, evaluation, BER sweeps, rate tables and
//! gradient checks.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 configuration
//! error.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use noma_core::neural::{grad_check, Network, Tensor};
use noma_core::rng::stream;
use noma_core::training::{model_file_name, train_with};
use noma_core::{
    load, rates, save, sweep, ArtifactSet, ChannelPair, Cx, Detector, FeatureSequence, PowerConfig,
    Scheme, SweepConfig, TrainConfig, User,
};
use rand::Rng;

use crate::config::Config;
use crate::output::{emit_csv, fmt_decimal, fmt_sci, write_atomic};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<noma_core::Error> for CliError {
    fn from(e: noma_core::Error) -> Self {
        match e {
            noma_core::Error::InvalidParameter(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "noma",
    about = "Uplink NOMA link simulation with classical and LSTM detectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// Configuration file (key = value with [sections]).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Override a configuration value, `section.key=value`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train detector networks and save model files.
    Train(Common),
    /// Evaluate one saved model against the perfect-CSI baseline.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// BER versus SNR for every configured detector, user and frame length.
    Sweep(Common),
    /// Achievable rates for one channel realisation.
    Rates {
        #[arg(long, allow_hyphen_values = true)]
        h1: String,
        #[arg(long, allow_hyphen_values = true)]
        h2: String,
        #[arg(long)]
        n0: f64,
        #[arg(long, default_value = "two-slot")]
        scheme: String,
        #[arg(long, default_value_t = 1.0)]
        p1: f64,
        #[arg(long, default_value_t = 1.0)]
        p2: f64,
    },
    /// Finite-difference check of the backpropagated gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        nets: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Train(common) => cmd_train(&common),
        Command::Eval { common, model } => cmd_eval(&common, &model),
        Command::Sweep(common) => cmd_sweep(&common),
        Command::Rates {
            h1,
            h2,
            n0,
            scheme,
            p1,
            p2,
        } => cmd_rates(&h1, &h2, n0, &scheme, p1, p2),
        Command::Gradcheck { seed, nets, eps } => cmd_gradcheck(seed, nets, eps),
    }
}

/// Loads the config file, applies overrides and the seed/worker flags, and
/// configures the thread pool. Every effective value ends up in the returned
/// config so it can be echoed into the manifest.
fn effective_config(common: &Common, command: &str) -> Result<Config, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    for kv in &common.overrides {
        cfg.set_override(kv)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("run.seed", seed);
    }
    if let Some(w) = common.workers {
        cfg.set("run.workers", w);
    }
    let seed: u64 = cfg.get("run.seed", 0)?;
    cfg.set("run.seed", seed);
    let default_workers = if command == "train" { 1 } else { 0 };
    let workers: usize = cfg.get("run.workers", default_workers)?;
    cfg.set("run.workers", workers);
    cfg.set("run.command", command);
    // The global pool can only be built once per process; later calls keep it.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<PathBuf, CliError> {
    let dir = common
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

struct ChannelParams {
    sigma1_sq: f64,
    sigma2_sq: f64,
    power: PowerConfig,
}

fn channel_params(cfg: &mut Config) -> Result<ChannelParams, CliError> {
    let sigma1_sq: f64 = cfg.get("channel.sigma1_sq", 10.0)?;
    let sigma2_sq: f64 = cfg.get("channel.sigma2_sq", 1.0)?;
    let p1: f64 = cfg.get("channel.p1", 1.0)?;
    let p2: f64 = cfg.get("channel.p2", 1.0)?;
    cfg.set("channel.sigma1_sq", sigma1_sq);
    cfg.set("channel.sigma2_sq", sigma2_sq);
    cfg.set("channel.p1", p1);
    cfg.set("channel.p2", p2);
    Ok(ChannelParams {
        sigma1_sq,
        sigma2_sq,
        power: PowerConfig::new(p1, p2)?,
    })
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn write_manifest(dir: &Path, cfg: &Config, outputs: &[PathBuf]) -> Result<(), CliError> {
    let mut text = cfg.render();
    text.push_str("[outputs]\n");
    for (k, p) in outputs.iter().enumerate() {
        let name = p
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        text.push_str(&format!("file{k} = {name}\n"));
    }
    write_atomic(&dir.join("manifest.txt"), text.as_bytes())
}

fn cmd_train(common: &Common) -> Result<i32, CliError> {
    let mut cfg = effective_config(common, "train")?;
    let dir = out_dir(common)?;
    let ch = channel_params(&mut cfg)?;
    let schemes: Vec<Scheme> = cfg.list("train.schemes", "two-slot")?;
    let users: Vec<User> = cfg.list("train.users", "ue1")?;
    let ns: Vec<usize> = cfg.list("train.n", "8")?;
    let frames: u64 = cfg.get("train.frames", 10_000_000)?;
    let batch: usize = cfg.get("train.batch", 10_000)?;
    let lr: f64 = cfg.get("train.lr", 0.01)?;
    let lo: f64 = cfg.get("train.snr_db_lo", 0.0)?;
    let hi: f64 = cfg.get("train.snr_db_hi", 30.0)?;
    let seed: u64 = cfg.get("run.seed", 0)?;
    cfg.set(
        "train.schemes",
        join(&schemes.iter().map(|s| s.name()).collect::<Vec<_>>()),
    );
    cfg.set(
        "train.users",
        join(&users.iter().map(|u| u.name()).collect::<Vec<_>>()),
    );
    cfg.set("train.n", join(&ns));
    cfg.set("train.frames", frames);
    cfg.set("train.batch", batch);
    cfg.set("train.lr", fmt_decimal(lr));
    cfg.set("train.snr_db_lo", fmt_decimal(lo));
    cfg.set("train.snr_db_hi", fmt_decimal(hi));

    let mut jobs = Vec::new();
    for &scheme in &schemes {
        for &user in &users {
            for &n in &ns {
                let tc = TrainConfig {
                    frames,
                    batch,
                    lr,
                    snr_db_range: (lo, hi),
                    seed,
                    sigma1_sq: ch.sigma1_sq,
                    sigma2_sq: ch.sigma2_sq,
                    power: ch.power,
                    ..TrainConfig::new(scheme, user, n)
                };
                tc.validate()?;
                jobs.push(tc);
            }
        }
    }
    let mut outputs = Vec::new();
    for tc in jobs {
        if tc.is_long_running() {
            eprintln!(
                "warning: {} {} n={} trains on {} frames; this is a long run",
                tc.scheme.name(),
                tc.user.name(),
                tc.n,
                tc.frames
            );
        }
        let every = (tc.steps() / 20).max(1);
        let artifact = train_with(&tc, |p| {
            if p.step % every == 0 || p.step == p.steps {
                eprintln!("  step {}/{} loss {:.6}", p.step, p.steps, p.loss);
            }
        })?;
        let path = dir.join(model_file_name(tc.scheme, tc.user, tc.n));
        save(&artifact, &path)?;
        println!("saved {}", path.display());
        outputs.push(path);
    }
    write_manifest(&dir, &cfg, &outputs)?;
    Ok(0)
}

fn load_artifacts(dir: &Path, cfg: &SweepConfig) -> Result<ArtifactSet, CliError> {
    let mut set = ArtifactSet::new();
    for d in &cfg.detectors {
        let Some(scheme) = d.scheme() else { continue };
        for &user in &cfg.users {
            for &n in &cfg.n_values {
                let path = dir.join(model_file_name(scheme, user, n));
                if !path.exists() {
                    return Err(CliError::Runtime(format!(
                        "no trained model for {} {} n={n} ({})",
                        scheme.name(),
                        user.name(),
                        path.display()
                    )));
                }
                let art = load(&path)?;
                art.ensure_matches(scheme, user, n)?;
                set.insert(art);
            }
        }
    }
    Ok(set)
}

fn sweep_config(cfg: &mut Config, prefix: &str) -> Result<SweepConfig, CliError> {
    let ch = channel_params(cfg)?;
    let detectors: Vec<Detector> =
        cfg.list(&format!("{prefix}.detectors"), "ml-csi, sic-ml-csi")?;
    let users: Vec<User> = cfg.list(&format!("{prefix}.users"), "ue1, ue2")?;
    let ns: Vec<usize> = cfg.list(&format!("{prefix}.n"), "8")?;
    let snr = cfg.snr_grid(&format!("{prefix}.snr_db"), "0:5:30")?;
    let min_bits: u64 = cfg.get(&format!("{prefix}.min_bits"), 2_000_000)?;
    let max_frames: u64 = cfg.get(&format!("{prefix}.max_frames"), 5_000_000)?;
    let seed: u64 = cfg.get("run.seed", 0)?;
    cfg.set(
        &format!("{prefix}.detectors"),
        join(&detectors.iter().map(|d| d.name()).collect::<Vec<_>>()),
    );
    cfg.set(
        &format!("{prefix}.users"),
        join(&users.iter().map(|u| u.name()).collect::<Vec<_>>()),
    );
    cfg.set(&format!("{prefix}.n"), join(&ns));
    cfg.set(
        &format!("{prefix}.snr_db"),
        join(&snr.iter().map(|&s| fmt_decimal(s)).collect::<Vec<_>>()),
    );
    cfg.set(&format!("{prefix}.min_bits"), min_bits);
    cfg.set(&format!("{prefix}.max_frames"), max_frames);
    Ok(SweepConfig {
        detectors,
        users,
        n_values: ns,
        snr_db: snr,
        min_bits,
        max_frames,
        seed,
        sigma1_sq: ch.sigma1_sq,
        sigma2_sq: ch.sigma2_sq,
        power: ch.power,
    })
}

fn print_curves(curves: &[noma_core::BerCurve]) {
    for c in curves {
        println!("{} {} n={}", c.detector.name(), c.user.name(), c.n);
        for p in &c.points {
            println!(
                "  snr_db={} bits={} errors={} ber={}",
                fmt_decimal(p.snr_db),
                p.bits,
                p.errors,
                fmt_sci(p.ber())
            );
        }
    }
}

fn cmd_sweep(common: &Common) -> Result<i32, CliError> {
    let mut cfg = effective_config(common, "sweep")?;
    let dir = out_dir(common)?;
    let sc = sweep_config(&mut cfg, "sweep")?;
    let models = cfg.raw("sweep.models").map(PathBuf::from);
    let needs_models = sc.detectors.iter().any(|d| d.scheme().is_some());
    let artifacts = match (&models, needs_models) {
        (Some(m), true) => {
            if !m.is_dir() {
                return Err(CliError::Config(format!(
                    "sweep.models: {} is not a directory",
                    m.display()
                )));
            }
            load_artifacts(m, &sc)?
        }
        (None, true) => {
            return Err(CliError::Config(
                "learned detectors need sweep.models".into(),
            ))
        }
        _ => ArtifactSet::new(),
    };
    let curves = sweep(&sc, &artifacts)?;
    let outputs = emit_csv(&curves, &dir)?;
    write_manifest(&dir, &cfg, &outputs)?;
    print_curves(&curves);
    Ok(0)
}

fn cmd_eval(common: &Common, model: &Path) -> Result<i32, CliError> {
    let mut cfg = effective_config(common, "eval")?;
    if !model.is_file() {
        return Err(CliError::Config(format!(
            "model {} does not exist",
            model.display()
        )));
    }
    let art = load(model)?;
    let c = &art.config;
    let baseline = match c.user {
        User::Ue1 => Detector::MlCsi,
        User::Ue2 => Detector::SicMlCsi,
    };
    let learned = match c.scheme {
        Scheme::TwoSlot => Detector::DlTwoSlot,
        Scheme::ThreeSlot => Detector::DlThreeSlot,
    };
    cfg.set("eval.detectors", join(&[baseline.name(), learned.name()]));
    cfg.set("eval.users", c.user.name());
    cfg.set("eval.n", c.n);
    cfg.set("eval.model", model.display());
    if cfg.raw("eval.snr_db").is_none() {
        cfg.set("eval.snr_db", "0:10:30");
    }
    let sc = sweep_config(&mut cfg, "eval")?;
    let mut set = ArtifactSet::new();
    set.insert(art);
    let curves = sweep(&sc, &set)?;
    print_curves(&curves);
    if common.out.is_some() {
        let dir = out_dir(common)?;
        let outputs = emit_csv(&curves, &dir)?;
        write_manifest(&dir, &cfg, &outputs)?;
    }
    Ok(0)
}

/// Accepts `1.5`, `-2j`, `0.5-0.5j`, `1+2i`.
pub fn parse_complex(s: &str) -> Result<Cx, CliError> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || CliError::Usage(format!("'{s}' is not a complex number"));
    if let Ok(v) = t.parse::<f64>() {
        return Ok(Cx::new(v, 0.0));
    }
    let body = t.strip_suffix(['j', 'i']).ok_or_else(bad)?;
    // Split at the last sign that is not part of an exponent or leading.
    let split = body
        .char_indices()
        .filter(|&(k, c)| {
            (c == '+' || c == '-') && k > 0 && !matches!(body.as_bytes()[k - 1], b'e' | b'E')
        })
        .map(|(k, _)| k)
        .next_back();
    let im_of = |x: &str| match x {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        v => v.parse::<f64>().map_err(|_| bad()),
    };
    match split {
        Some(k) => Ok(Cx::new(
            body[..k].parse().map_err(|_| bad())?,
            im_of(&body[k..])?,
        )),
        None => Ok(Cx::new(0.0, im_of(body)?)),
    }
}

fn cmd_rates(h1: &str, h2: &str, n0: f64, scheme: &str, p1: f64, p2: f64) -> Result<i32, CliError> {
    let h1 = parse_complex(h1)?;
    let h2 = parse_complex(h2)?;
    let scheme: Scheme = scheme
        .parse()
        .map_err(|e: noma_core::Error| CliError::Usage(e.to_string()))?;
    let ch = ChannelPair::new(h1, h2, n0).map_err(|e| CliError::Usage(e.to_string()))?;
    let pw = PowerConfig::new(p1, p2).map_err(|e| CliError::Usage(e.to_string()))?;
    let r = rates(&ch, &pw, scheme);
    println!(
        "scheme={} prefactor={}",
        scheme.name(),
        fmt_decimal(r.prefactor)
    );
    println!(
        "sinr1={} sinr2={}",
        fmt_decimal(r.sinr1),
        fmt_decimal(r.sinr2)
    );
    println!("r1={} r2={}", fmt_decimal(r.r1), fmt_decimal(r.r2));
    Ok(0)
}

/// Worst relative error over `nets` random small networks (hidden 4 and 3,
/// three time steps).
pub fn gradcheck_worst(seed: u64, nets: usize, eps: f64) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for k in 0..nets {
        let mut rng = stream(seed, &[k as u64]);
        let net = Network::with_sizes(4, 4, 3, 2, &mut rng);
        let feats =
            FeatureSequence::from_rows((0..12).map(|_| rng.random_range(-1.5..1.5)).collect(), 4)?;
        let target = Tensor::from_vec(
            &[3, 2],
            (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )?;
        worst = worst.max(grad_check(&net, &feats, &target, eps)?);
    }
    Ok(worst)
}

fn cmd_gradcheck(seed: u64, nets: usize, eps: f64) -> Result<i32, CliError> {
    let worst = gradcheck_worst(seed, nets, eps)?;
    println!("max_relative_error={}", fmt_sci(worst));
    Ok(if worst <= 1e-4 { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("1").unwrap(), Cx::new(1.0, 0.0));
        assert_eq!(parse_complex("0.5-0.5j").unwrap(), Cx::new(0.5, -0.5));
        assert_eq!(parse_complex("-2j").unwrap(), Cx::new(0.0, -2.0));
        assert_eq!(parse_complex("1e-3+2e-1i").unwrap(), Cx::new(1e-3, 0.2));
        assert_eq!(parse_complex("3-j").unwrap(), Cx::new(3.0, -1.0));
        assert!(parse_complex("abc").is_err());
    }
}

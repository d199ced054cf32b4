//! The `plume` command-line tool.
//!
//! Exit status: 0 on success, 1 when a check fails (gradient check,
//! oracle tolerance, CFL bound), 2 on usage, format or I/O errors.
//! Reports go to stdout as `name<TAB>value` lines and, when requested, to
//! a report file written atomically.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    check_targets, erf_map, erf_report, pde_oracle, ErfNet, GradCheckConfig, GradTarget, DEFAULT_STEP, DEFAULT_TOLERANCE,
    ERF_BATCH,
};
use crate::config::RunConfig;
use crate::edge::{agpeo, build_pyramid, AgpeoParams, DirectionalBank, EdgeBanks, GaborBank, PyramidProjections};
use crate::error::Error;
use crate::gas_block::{gas_block_forward, GasBlockParams, DEFAULT_ALPHA_DECAY};
use crate::io::{decode_pgm, decode_tensor, write_atomic, write_pgm, write_tensor};
use crate::plume::synthetic_plume;
use crate::report::Report;
use crate::rng::Prng;
use crate::routing::{casr_pan_forward, importance_map, CasrParams, FeaturePyramid, ImportanceParams};
use crate::spectral::DiffusionParams;
use crate::tensor::{Shape, Tensor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const ERF_CHANNELS: usize = 4;
const ORACLE_TOLERANCE: f64 = 2e-2;

#[derive(Debug, Parser)]
#[command(name = "plume", version, about = "Convection-diffusion feature operators, edge maps and routing checks")]
pub struct Cli {
    /// Run configuration file (key=value lines); flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fused gradient / phase-congruency edge map of a PGM image.
    Edge(EdgeArgs),
    /// Max-pooled edge pyramid: E_i as PGM, projected levels as tensor files.
    Pyramid(PyramidArgs),
    /// One gas block forward pass with a dump of every intermediate.
    Gasblock(GasblockArgs),
    /// Per-pixel, per-channel importance map.
    Importance(ImportanceArgs),
    /// Cross-scale routing neck over a three-level feature pyramid.
    Route(RouteArgs),
    /// Spectral solution against the finite-difference rollout.
    Oracle(OracleArgs),
    /// Finite-difference gradient check of the differentiable operators.
    Gradcheck(GradcheckArgs),
    /// Effective receptive field map and contribution ratios.
    Erf(ErfArgs),
    /// Synthetic faint-plume PGM frame.
    Plume(PlumeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaChoice {
    LearnedInit,
    Fixed(f64),
}

fn parse_alpha(s: &str) -> Result<AlphaChoice, String> {
    if s == "learned-init" {
        return Ok(AlphaChoice::LearnedInit);
    }
    match s.parse::<f64>() {
        Ok(a) if (0.0..=1.0).contains(&a) => Ok(AlphaChoice::Fixed(a)),
        _ => Err(format!("expected a number in [0, 1] or \"learned-init\", got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct EdgeArgs {
    /// Input image (binary PGM).
    #[arg(long = "in", value_name = "PGM")]
    pub input: PathBuf,
    /// Fusion weight of the gradient map, or the configured initial value.
    #[arg(long, value_parser = parse_alpha, default_value = "learned-init")]
    pub alpha: AlphaChoice,
    /// Output edge map (PGM).
    #[arg(long, value_name = "PGM")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PyramidArgs {
    #[arg(long = "in", value_name = "PGM")]
    pub input: PathBuf,
    /// Number of pooled levels below the full-resolution map.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Prefix for `e<i>.pgm` and `proj<i>.gtsr`.
    #[arg(long, value_name = "PREFIX")]
    pub out_prefix: String,
    /// Seed for the level projections.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_alpha, default_value = "learned-init")]
    pub alpha: AlphaChoice,
}

#[derive(Debug, Args)]
pub struct GasblockArgs {
    /// Input features (tensor file or PGM).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Edge prior (tensor file or PGM).
    #[arg(long, value_name = "FILE")]
    pub edge: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial spectral decay scale.
    #[arg(long)]
    pub alpha_decay: Option<f64>,
    /// Output tensor; intermediates go to `<stem>.<name>.gtsr` beside it.
    #[arg(long, value_name = "GTSR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "GTSR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    /// Finest level (twice the size of P4).
    #[arg(long, value_name = "FILE")]
    pub p3: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub p4: PathBuf,
    /// Coarsest level (half the size of P4).
    #[arg(long, value_name = "FILE")]
    pub p5: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Prefix for the routed levels, importance map and path weights.
    #[arg(long, value_name = "PREFIX")]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Grid side length.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Diffusion coefficient.
    #[arg(long = "D", default_value_t = 0.5)]
    pub diffusion: f64,
    /// Velocity along the width axis.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub vx: f64,
    /// Velocity along the height axis.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub vy: f64,
    /// Final time.
    #[arg(long = "t", default_value_t = 1.0)]
    pub time: f64,
    /// Finite-difference time step.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Width of the initial Gaussian; defaults to size / 8.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Largest accepted relative L2 error.
    #[arg(long, default_value_t = ORACLE_TOLERANCE)]
    pub tolerance: f64,
    /// Also write the report to this file.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// gasblock, agpeo, ie, aimm or all.
    #[arg(long, default_value = "all")]
    pub target: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Central-difference step.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
    /// Largest accepted relative error per coordinate.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Also write the report to this file.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ErfArgs {
    /// dwconv, stacked or gasblock.
    #[arg(long, default_value = "gasblock")]
    pub net: String,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated mass fractions in (0, 1).
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.5,0.99")]
    pub thresholds: Vec<f64>,
    /// Prefix for `erf.pgm` and `erf.txt`; omit to print the report only.
    #[arg(long, value_name = "PREFIX")]
    pub out_prefix: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlumeArgs {
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "PGM")]
    pub out: PathBuf,
}

enum Failure {
    Check(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Cfl { .. } => Failure::Check(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Check(msg)) => {
            let _ = writeln!(stderr, "check failed: {msg}");
            EXIT_CHECK
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Outcome {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Edge(a) => edge_cmd(&a, &cfg),
        Command::Pyramid(a) => pyramid_cmd(&a, &cfg, out),
        Command::Gasblock(a) => gasblock_cmd(&a, &cfg, out),
        Command::Importance(a) => importance_cmd(&a, &cfg),
        Command::Route(a) => route_cmd(&a, &cfg, out),
        Command::Oracle(a) => oracle_cmd(&a, out),
        Command::Gradcheck(a) => gradcheck_cmd(&a, &cfg, out),
        Command::Erf(a) => erf_cmd(&a, &cfg, out),
        Command::Plume(a) => Ok(write_pgm(&synthetic_plume(a.size, a.seed.unwrap_or(cfg.seed))?, &a.out)?),
    }
}

/// Reads a tensor file, or a PGM image as a 1×1×H×W tensor.
pub fn read_input(path: &Path) -> crate::Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        decode_tensor(&bytes)
    }
}

fn emit(out: &mut dyn Write, report: &Report, file: Option<&Path>) -> Outcome {
    let text = report.to_string();
    if let Some(p) = file {
        write_atomic(p, text.as_bytes())?;
    }
    out.write_all(text.as_bytes()).map_err(|e| Failure::Usage(e.to_string()))
}

fn banks(cfg: &RunConfig) -> crate::Result<EdgeBanks> {
    Ok(EdgeBanks { directional: DirectionalBank::new(cfg.directions.clone())?, gabor: GaborBank::new(cfg.gabor_scales)? })
}

fn edge_map(path: &Path, alpha: AlphaChoice, cfg: &RunConfig) -> crate::Result<Tensor> {
    let image = read_input(path)?;
    let params = match alpha {
        AlphaChoice::LearnedInit => AgpeoParams::with_alpha(cfg.alpha_fusion_init)?,
        AlphaChoice::Fixed(a) => AgpeoParams::fixed(a)?,
    };
    agpeo(&image, &params, &banks(cfg)?)
}

fn edge_cmd(a: &EdgeArgs, cfg: &RunConfig) -> Outcome {
    Ok(write_pgm(&edge_map(&a.input, a.alpha, cfg)?, &a.out)?)
}

fn pyramid_cmd(a: &PyramidArgs, cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let e0 = edge_map(&a.input, a.alpha, cfg)?;
    let levels = a.levels.unwrap_or(cfg.pyramid_levels);
    let mut rng = Prng::new(a.seed.unwrap_or(cfg.seed));
    let proj = PyramidProjections::init(levels, e0.shape().channels, &mut rng)?;
    let pyr = build_pyramid(&e0, levels, &proj)?;
    let mut report = Report::new();
    for (i, (e, p)) in pyr.levels.iter().zip(&pyr.projected).enumerate() {
        write_pgm(e, Path::new(&format!("{}e{i}.pgm", a.out_prefix)))?;
        write_tensor(p, Path::new(&format!("{}proj{i}.gtsr", a.out_prefix)))?;
        report.push(format!("level{i}"), e.shape());
    }
    emit(out, &report, None)
}

fn trace_path(out: &Path, name: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{name}.gtsr"))
}

fn gasblock_cmd(a: &GasblockArgs, cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let x = read_input(&a.input)?;
    let e = read_input(&a.edge)?;
    let alpha = a.alpha_decay.unwrap_or(cfg.alpha_decay_init);
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Failure::Usage(format!("alpha-decay {alpha} must be a finite non-negative number")));
    }
    let mut rng = Prng::new(a.seed.unwrap_or(cfg.seed));
    let mut params = GasBlockParams::init(x.shape().channels, e.shape().channels, DEFAULT_ALPHA_DECAY, &mut rng)?;
    params.set_alpha_decay(alpha);
    let (y, trace) = gas_block_forward(&x, &e, &params)?;
    write_tensor(&y, &a.out)?;
    let mut report = Report::new();
    report.push("y", y.shape());
    for (name, t) in trace.named() {
        write_tensor(t, &trace_path(&a.out, name))?;
        report.push_real(format!("{name}.energy"), t.energy());
    }
    emit(out, &report, None)
}

fn importance_cmd(a: &ImportanceArgs, cfg: &RunConfig) -> Outcome {
    let x = read_input(&a.input)?;
    let mut rng = Prng::new(a.seed.unwrap_or(cfg.seed));
    let params = ImportanceParams::init(x.shape().channels, &mut rng)?;
    Ok(write_tensor(&importance_map(&x, &params)?, &a.out)?)
}

fn route_cmd(a: &RouteArgs, cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let pyr = FeaturePyramid { p3: read_input(&a.p3)?, p4: read_input(&a.p4)?, p5: read_input(&a.p5)? };
    pyr.validate()?;
    let mut rng = Prng::new(a.seed.unwrap_or(cfg.seed));
    let params = CasrParams::init(pyr.p4.shape().channels, &mut rng)?;
    let res = casr_pan_forward(&pyr, &params)?;
    let mut outputs: Vec<(String, &Tensor)> = vec![
        ("p3".into(), &res.pyramid.p3),
        ("p4".into(), &res.pyramid.p4),
        ("p5".into(), &res.pyramid.p5),
        ("importance".into(), &res.importance),
    ];
    outputs.extend(res.weights.maps.iter().enumerate().map(|(k, w)| (format!("w{}", k + 1), w)));
    let mut report = Report::new();
    for (name, t) in outputs {
        write_tensor(t, Path::new(&format!("{}{name}.gtsr", a.out_prefix)))?;
        report.push(format!("{name}.shape"), t.shape());
        report.push_real(format!("{name}.sum"), t.sum());
    }
    emit(out, &report, None)
}

fn oracle_cmd(a: &OracleArgs, out: &mut dyn Write) -> Outcome {
    let params = DiffusionParams::new(a.diffusion, a.vx, a.vy, a.time)?;
    let sigma = a.sigma.unwrap_or(a.size as f64 / 8.0);
    let cmp = pde_oracle(a.size, &params, a.dt, sigma)?;
    let pass = cmp.rel_l2 <= a.tolerance;
    let mut r = Report::new();
    r.push("size", a.size);
    r.push_real("D", a.diffusion);
    r.push_real("vx", a.vx);
    r.push_real("vy", a.vy);
    r.push_real("t", a.time);
    r.push_real("dt", a.dt);
    r.push_real("sigma", sigma);
    r.push("steps", cmp.steps);
    r.push_real("rel_l2", cmp.rel_l2);
    r.push_real("max_abs", cmp.max_abs);
    r.push_real("tolerance", a.tolerance);
    r.push("status", if pass { "pass" } else { "fail" });
    emit(out, &r, a.report.as_deref())?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("relative L2 error {:.3e} exceeds {:.3e}", cmp.rel_l2, a.tolerance)))
    }
}

fn gradcheck_cmd(a: &GradcheckArgs, cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let targets = GradTarget::parse(&a.target)
        .ok_or_else(|| Failure::Usage(format!("unknown target {:?}: expected gasblock, agpeo, ie, aimm or all", a.target)))?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let gc = GradCheckConfig { step: a.step, tolerance: a.tolerance, seed, ..Default::default() };
    let report = check_targets(&targets, seed, &gc)?;
    emit(out, &report.to_report(), a.report.as_deref())?;
    match report.failures().count() {
        0 => Ok(()),
        n => Err(Failure::Check(format!("{n} of {} gradient coordinates out of tolerance", report.entries.len()))),
    }
}

fn erf_cmd(a: &ErfArgs, cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let net = ErfNet::parse(&a.net)
        .ok_or_else(|| Failure::Usage(format!("unknown network {:?}: expected dwconv, stacked or gasblock", a.net)))?;
    let shape = Shape::new(ERF_BATCH, ERF_CHANNELS, a.size, a.size)?;
    let erf = erf_map(net, shape, a.seed.unwrap_or(cfg.seed))?;
    let report = erf_report(&erf, &a.thresholds)?;
    let file = a.out_prefix.as_ref().map(|p| PathBuf::from(format!("{p}erf.txt")));
    if let Some(p) = &a.out_prefix {
        write_pgm(&erf.to_tensor(), Path::new(&format!("{p}erf.pgm")))?;
    }
    emit(out, &report, file.as_deref())
}

//! The `wavefront` command line: configuration, dispatch to the solvers and
//! CSV output.
//!
//! Every flag may also be given in a configuration file passed with
//! `--config`: one `key = value` per line, keys spelled like the long flags
//! without dashes (`ensemble = regular:3,6`, `L = 256`, `mode = sweep`),
//! `#` starts a comment. Flags on the command line override the file.
//!
//! Which solvers answer a measure depends on the channel: BEC runs the
//! scalar recursion, BIAWGN the Gaussian approximation, and the `bms` mode
//! evolves full densities for either channel.

use std::cell::OnceCell;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::OnceLock;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use wavefront_core::bec::{self, BecChannel};
use wavefront_core::front::{self, MeasureWindow, RunOptions};
use wavefront_core::gauss::{self, DenominatorVariant, GaModel, GaWave, GaussChannel, Psi};
use wavefront_core::{Ensemble, Error, ErrorKind, GridConfig, Profile, Trajectory};

use crate::bms::{self, ChannelKind, DensityDe, FixedPointOptions, ThresholdScan};
use crate::density::{Algebra, Density, LlrGrid};
use crate::io::{fmt, write_binary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Thresholds,
    Wave,
    Empirical,
    Sweep,
    Gamma,
    Ga,
    Bms,
    DensityCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Thresholds => "thresholds",
            Mode::Wave => "wave",
            Mode::Empirical => "empirical",
            Mode::Sweep => "sweep",
            Mode::Gamma => "gamma",
            Mode::Ga => "ga",
            Mode::Bms => "bms",
            Mode::DensityCheck => "density-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    VBec,
    VE,
    VA1,
    VA2,
    VB,
    VGa,
    VBms,
    EpsBp,
    EpsMap,
    XBp,
    Gap,
    GammaBar,
    Duality,
    Closure,
    Mass,
    Symmetry,
}

const MEASURES: [(Measure, &str); 16] = [
    (Measure::VBec, "v_bec"),
    (Measure::VE, "v_e"),
    (Measure::VA1, "v_a1"),
    (Measure::VA2, "v_a2"),
    (Measure::VB, "v_b"),
    (Measure::VGa, "v_ga"),
    (Measure::VBms, "v_bms"),
    (Measure::EpsBp, "eps_bp"),
    (Measure::EpsMap, "eps_map"),
    (Measure::XBp, "x_bp"),
    (Measure::Gap, "gap"),
    (Measure::GammaBar, "gamma_bar"),
    (Measure::Duality, "duality"),
    (Measure::Closure, "closure"),
    (Measure::Mass, "mass"),
    (Measure::Symmetry, "symmetry"),
];

impl Measure {
    pub fn name(self) -> &'static str {
        MEASURES
            .iter()
            .find(|(m, _)| *m == self)
            .map(|(_, n)| *n)
            .unwrap_or("?")
    }

    fn needs_param(self) -> bool {
        !matches!(
            self,
            Measure::EpsBp
                | Measure::EpsMap
                | Measure::GammaBar
                | Measure::Duality
                | Measure::Closure
                | Measure::Mass
                | Measure::Symmetry
        )
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        MEASURES
            .iter()
            .find(|(_, n)| n.eq_ignore_ascii_case(s))
            .map(|(m, _)| *m)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown measure {s:?}")))
    }
}

/// Solver family behind a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Scalar,
    Ga,
    Density,
    Check,
}

impl Pipeline {
    fn supports(self, m: Measure) -> bool {
        use Measure::*;
        match self {
            Pipeline::Scalar => matches!(
                m,
                VBec | VE | VA1 | VA2 | VB | EpsBp | EpsMap | XBp | Gap | GammaBar
            ),
            Pipeline::Ga => matches!(m, VGa | VE | EpsBp | EpsMap | XBp | Gap),
            Pipeline::Density => matches!(m, VBms | VE | EpsBp | EpsMap | XBp | Gap),
            Pipeline::Check => matches!(m, Duality | Closure | Mass | Symmetry),
        }
    }
}

fn parse_channel(s: &str) -> Result<ChannelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<DenominatorVariant, String> {
    match s.trim() {
        "r-2" => Ok(DenominatorVariant::RMinusTwo),
        "r-1" => Ok(DenominatorVariant::RMinusOne),
        other => Err(format!("variant must be r-2 or r-1, got {other:?}")),
    }
}

fn variant_name(v: DenominatorVariant) -> &'static str {
    match v {
        DenominatorVariant::RMinusTwo => "r-2",
        DenominatorVariant::RMinusOne => "r-1",
    }
}

/// Raw command line.
#[derive(Debug, Parser)]
#[command(
    name = "wavefront",
    version,
    about = "Decoding-wave velocities of spatially coupled LDPC ensembles"
)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct Flags {
    /// What to compute.
    #[arg(value_enum)]
    pub mode: Option<Mode>,
    /// Mode given through a configuration file.
    #[arg(long = "mode", value_enum, hide = true)]
    pub mode_key: Option<Mode>,
    /// `key = value` configuration file; command-line flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `regular:<l>,<r>` or `lambda:<terms>;rho:<terms>`.
    #[arg(long)]
    pub ensemble: Option<String>,
    /// bec | biawgn
    #[arg(long, value_parser = parse_channel)]
    pub channel: Option<ChannelKind>,
    /// Erasure probability of the BEC.
    #[arg(long)]
    pub eps: Option<f64>,
    /// LLR mean 2/σ² of the BIAWGN channel.
    #[arg(long)]
    pub mean: Option<f64>,
    /// Sweep start.
    #[arg(long)]
    pub from: Option<f64>,
    /// Sweep end (inclusive).
    #[arg(long)]
    pub to: Option<f64>,
    /// Sweep step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Coupled chain length.
    #[arg(long = "L")]
    pub length: Option<usize>,
    /// Coupling width.
    #[arg(long = "w")]
    pub width: Option<usize>,
    /// Continuum grid spacing (in coupling windows).
    #[arg(long)]
    pub dz: Option<f64>,
    #[arg(long)]
    pub zmin: Option<f64>,
    #[arg(long)]
    pub zmax: Option<f64>,
    /// LLR grid half-width.
    #[arg(long = "grid-A")]
    pub grid_a: Option<f64>,
    /// LLR grid spacing.
    #[arg(long = "grid-delta")]
    pub grid_delta: Option<f64>,
    /// Continuum solver tolerance (profile and velocity).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Continuum solver iteration cap.
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Comma-separated measures.
    #[arg(long)]
    pub measure: Option<String>,
    /// Result CSV path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; only csv.
    #[arg(long)]
    pub format: Option<String>,
    /// Trajectory snapshot interval.
    #[arg(long = "snapshots-every")]
    pub snapshots_every: Option<usize>,
    /// Concurrent sweep points (0: one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Continuum profile CSV (z, value).
    #[arg(long = "profile-out")]
    pub profile_out: Option<PathBuf>,
    /// Coupled-run snapshots CSV (iteration, z, value).
    #[arg(long = "trajectory-out")]
    pub trajectory_out: Option<PathBuf>,
    /// Density profile as consecutive binary records, one per z.
    #[arg(long = "density-out")]
    pub density_out: Option<PathBuf>,
    /// Channel offset below the reference for gamma_bar.
    #[arg(long = "delta-eps")]
    pub delta_eps: Option<f64>,
    /// Reference parameter for gamma_bar (MAP threshold by default).
    #[arg(long = "eps-ref")]
    pub eps_ref: Option<f64>,
    /// GA denominator variant: r-2 | r-1
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<DenominatorVariant>,
}

/// A failed measure or run, with its stable code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: &'static str,
    pub kind: ErrorKind,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: "config",
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Solver => 3,
            ErrorKind::Regime => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: e.code(),
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: "io",
            kind: ErrorKind::Config,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self {
            code: "io",
            kind: ErrorKind::Config,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

/// A validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub ensemble: Ensemble,
    pub channel: ChannelKind,
    pub params: Vec<f64>,
    pub length: usize,
    pub width: usize,
    /// Continuum grid of the chosen pipeline.
    pub grid: GridConfig,
    pub llr: LlrGrid,
    pub measures: Vec<Measure>,
    pub variant: DenominatorVariant,
    pub delta_eps: f64,
    pub eps_ref: Option<f64>,
    pub snapshots_every: usize,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub profile_out: Option<PathBuf>,
    pub trajectory_out: Option<PathBuf>,
    pub density_out: Option<PathBuf>,
}

/// Turns configuration file text into flags.
pub fn file_args(text: &str) -> Result<Vec<String>, Failure> {
    let mut args = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("line {}: expected key = value", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k == "config" {
            return Err(Failure::config(format!("line {}: bad key {k:?}", no + 1)));
        }
        args.push(format!("--{k}"));
        args.push(v.to_string());
    }
    Ok(args)
}

fn clap_failure(e: clap::Error) -> Failure {
    Failure::config(e.to_string())
}

/// Parses the command line (and the configuration file it names).
pub fn load<I, T>(argv: I) -> Result<RunConfig, Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let first = Flags::try_parse_from(&argv).map_err(clap_failure)?;
    let flags = match &first.config {
        None => first,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            let mut merged = vec![argv.first().cloned().unwrap_or_default()];
            merged.extend(file_args(&text)?);
            merged.extend(argv.iter().skip(1).cloned());
            Flags::try_parse_from(&merged).map_err(clap_failure)?
        }
    };
    RunConfig::from_flags(flags)
}

fn sweep_points(from: f64, to: f64, step: f64) -> Result<Vec<f64>, Failure> {
    if !(step > 0.0) || !(to >= from) || !from.is_finite() || !to.is_finite() {
        return Err(Failure::config(
            "sweep needs finite --from <= --to and --step > 0",
        ));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    if n > 100_000 {
        return Err(Failure::config("sweep has more than 100000 points"));
    }
    // rounded so that echoed parameters read as typed
    Ok((0..n)
        .map(|i| ((from + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

impl RunConfig {
    pub fn from_flags(f: Flags) -> Result<Self, Failure> {
        let mode = f
            .mode
            .or(f.mode_key)
            .ok_or_else(|| Failure::config("no mode given"))?;
        let default_channel = if mode == Mode::Ga {
            ChannelKind::Biawgn
        } else {
            ChannelKind::Bec
        };
        let channel = f.channel.unwrap_or(default_channel);
        let ensemble: Ensemble = f
            .ensemble
            .as_deref()
            .unwrap_or("regular:3,6")
            .parse()
            .map_err(Failure::from)?;
        let pipeline = pipeline_of(mode, channel)?;

        let single = match (channel, f.eps, f.mean) {
            (ChannelKind::Bec, Some(_), Some(_)) | (ChannelKind::Biawgn, Some(_), Some(_)) => {
                return Err(Failure::config("give either --eps or --mean, not both"))
            }
            (ChannelKind::Bec, _, Some(_)) => {
                return Err(Failure::config("--mean needs --channel biawgn"))
            }
            (ChannelKind::Biawgn, Some(_), _) => {
                return Err(Failure::config("--eps needs --channel bec"))
            }
            (_, e, m) => e.or(m),
        };
        let params = match (f.from, f.to, f.step) {
            (None, None, None) => single.into_iter().collect(),
            (Some(a), Some(b), Some(s)) if single.is_none() => {
                if mode != Mode::Sweep {
                    return Err(Failure::config("--from/--to/--step need the sweep mode"));
                }
                sweep_points(a, b, s)?
            }
            _ => {
                return Err(Failure::config(
                    "a sweep needs all of --from, --to, --step and no single parameter",
                ))
            }
        };
        for &p in &params {
            let ok = match channel {
                ChannelKind::Bec => (0.0..=1.0).contains(&p),
                ChannelKind::Biawgn => p > 0.0 && p.is_finite(),
            };
            if !ok {
                return Err(Failure::config(format!(
                    "{} parameter {p} out of range",
                    channel.name()
                )));
            }
        }

        let measures: Vec<Measure> = match &f.measure {
            Some(list) => list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.parse::<Measure>().map_err(Failure::from))
                .collect::<Result<_, _>>()?,
            None => default_measures(mode, pipeline),
        };
        if measures.is_empty() {
            return Err(Failure::config("no measures requested"));
        }
        for m in &measures {
            if !pipeline.supports(*m) {
                return Err(Failure::config(format!(
                    "measure {} is not available in {} mode on {}",
                    m.name(),
                    mode.name(),
                    channel.name()
                )));
            }
        }
        if measures.iter().any(|m| m.needs_param()) && params.is_empty() {
            return Err(Failure::config(format!(
                "{} needs --{}",
                measures
                    .iter()
                    .find(|m| m.needs_param())
                    .map_or("?", |m| m.name()),
                param_key(channel)
            )));
        }
        if mode != Mode::Sweep && params.len() > 1 {
            return Err(Failure::config(
                "only the sweep mode takes several parameters",
            ));
        }

        let (dl, dw) = match channel {
            ChannelKind::Bec => (256, 8),
            ChannelKind::Biawgn => (100, 3),
        };
        let length = f.length.unwrap_or(dl);
        let width = f.width.unwrap_or(dw);
        if width == 0 || length < 4 * width {
            return Err(Failure::config(format!(
                "need w >= 1 and L >= 4w, got L = {length}, w = {width}"
            )));
        }

        let overrides = |mut g: GridConfig| -> Result<GridConfig, Failure> {
            if let Some(v) = f.dz {
                g.dz = v;
            }
            if let Some(v) = f.zmin {
                g.z_min = v;
            }
            if let Some(v) = f.zmax {
                g.z_max = v;
            }
            if let Some(v) = f.tol {
                if !(v > 0.0) {
                    return Err(Failure::config("--tol must be positive"));
                }
                g.tol_profile = v;
                g.tol_velocity = v;
            }
            if let Some(v) = f.max_iter {
                g.max_iterations = v;
            }
            g.points().map_err(Failure::from)?;
            Ok(g)
        };
        let grid = overrides(if pipeline == Pipeline::Density {
            bms::density_grid()
        } else {
            GridConfig::default()
        })?;
        let base = LlrGrid::default();
        let llr = match (f.grid_a, f.grid_delta) {
            (None, None) => base,
            (a, d) => LlrGrid::new(a.unwrap_or(base.a_max()), d.unwrap_or(base.delta()))
                .map_err(Failure::from)?,
        };

        if let Some(fmt) = &f.format {
            if fmt != "csv" {
                return Err(Failure::config(format!(
                    "unsupported format {fmt:?}; only csv"
                )));
            }
        }
        let snapshots_every = f.snapshots_every.unwrap_or(50);
        if snapshots_every == 0 {
            return Err(Failure::config("--snapshots-every must be positive"));
        }
        let delta_eps = f.delta_eps.unwrap_or(0.04);
        if !(delta_eps > 0.0) {
            return Err(Failure::config("--delta-eps must be positive"));
        }
        let side = f.profile_out.is_some() || f.trajectory_out.is_some() || f.density_out.is_some();
        if side && params.len() != 1 {
            return Err(Failure::config(
                "profile and trajectory files need exactly one channel parameter",
            ));
        }
        if f.density_out.is_some() && pipeline != Pipeline::Density {
            return Err(Failure::config("--density-out needs the bms mode"));
        }

        Ok(Self {
            mode,
            ensemble,
            channel,
            params,
            length,
            width,
            grid,
            llr,
            measures,
            variant: f.variant.unwrap_or_default(),
            delta_eps,
            eps_ref: f.eps_ref,
            snapshots_every,
            workers: f.workers.unwrap_or(1),
            out: f.out,
            profile_out: f.profile_out,
            trajectory_out: f.trajectory_out,
            density_out: f.density_out,
        })
    }

    pub fn pipeline(&self) -> Pipeline {
        pipeline_of(self.mode, self.channel).expect("validated")
    }

    /// Input echo for one parameter value, keyed like the configuration
    /// file. Covers every input that changes a computed value; worker count
    /// and output paths are left out.
    pub fn echo(&self, param: Option<f64>) -> Vec<(&'static str, String)> {
        let g = &self.grid;
        let p = |c: ChannelKind| match param {
            Some(v) if c == self.channel => fmt(v),
            _ => String::new(),
        };
        vec![
            ("mode", self.mode.name().to_string()),
            ("ensemble", self.ensemble.spec_string()),
            ("channel", self.channel.name().to_string()),
            ("eps", p(ChannelKind::Bec)),
            ("mean", p(ChannelKind::Biawgn)),
            ("L", self.length.to_string()),
            ("w", self.width.to_string()),
            ("dz", fmt(g.dz)),
            ("zmin", fmt(g.z_min)),
            ("zmax", fmt(g.z_max)),
            ("grid-A", fmt(self.llr.a_max())),
            ("grid-delta", fmt(self.llr.delta())),
            ("variant", variant_name(self.variant).to_string()),
            // one tolerance flag sets both; distinct values are the defaults
            (
                "tol",
                if g.tol_profile == g.tol_velocity {
                    fmt(g.tol_profile)
                } else {
                    String::new()
                },
            ),
            ("max-iter", g.max_iterations.to_string()),
            ("delta-eps", fmt(self.delta_eps)),
            ("eps-ref", self.eps_ref.map(fmt).unwrap_or_default()),
        ]
    }
}

fn param_key(c: ChannelKind) -> &'static str {
    match c {
        ChannelKind::Bec => "eps",
        ChannelKind::Biawgn => "mean",
    }
}

fn pipeline_of(mode: Mode, channel: ChannelKind) -> Result<Pipeline, Failure> {
    Ok(match (mode, channel) {
        (Mode::DensityCheck, _) => Pipeline::Check,
        (Mode::Bms, _) => Pipeline::Density,
        (Mode::Ga, ChannelKind::Bec) => {
            return Err(Failure::config("the ga mode needs --channel biawgn"))
        }
        (Mode::Gamma, ChannelKind::Biawgn) => {
            return Err(Failure::config("the gamma mode needs --channel bec"))
        }
        (_, ChannelKind::Bec) => Pipeline::Scalar,
        (_, ChannelKind::Biawgn) => Pipeline::Ga,
    })
}

fn default_measures(mode: Mode, pipeline: Pipeline) -> Vec<Measure> {
    use Measure::*;
    match (mode, pipeline) {
        (_, Pipeline::Check) => vec![Duality, Closure, Mass, Symmetry],
        (Mode::Thresholds, _) => vec![EpsBp, EpsMap],
        (Mode::Gamma, _) => vec![GammaBar],
        (Mode::Empirical, _) => vec![VE],
        (Mode::Bms, _) => vec![VBms],
        (_, Pipeline::Ga) => vec![VGa, VE],
        (Mode::Sweep, _) => vec![VBec, VE],
        _ => vec![VBec],
    }
}

/// One computed number with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Value {
    pub value: f64,
    pub operation: &'static str,
    pub tolerance: Option<f64>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
}

impl Value {
    fn plain(value: f64, operation: &'static str, tolerance: Option<f64>) -> Self {
        Self {
            value,
            operation,
            tolerance,
            iterations: None,
            residual: None,
        }
    }
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub param: Option<f64>,
    pub measure: Measure,
    pub outcome: Result<Value, Failure>,
}

fn psi() -> &'static Psi {
    static T: OnceLock<Psi> = OnceLock::new();
    T.get_or_init(Psi::new)
}

fn run_all(cfg: &RunConfig) -> Result<Vec<Record>, Failure> {
    let alg = OnceLock::new();
    let alg = || alg.get_or_init(|| Algebra::new(cfg.llr));
    let points: Vec<Option<f64>> = if cfg.params.is_empty() {
        vec![None]
    } else {
        cfg.params.iter().copied().map(Some).collect()
    };
    let eval = |p: Option<f64>| -> Result<Vec<Record>, Failure> {
        match cfg.pipeline() {
            Pipeline::Scalar => scalar_point(cfg, p),
            Pipeline::Ga => ga_point(cfg, p),
            Pipeline::Density => density_point(cfg, alg(), p),
            Pipeline::Check => Ok(check_point(cfg, alg())),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Failure::config(e.to_string()))?;
    let rows: Vec<Result<Vec<Record>, Failure>> =
        pool.install(|| points.par_iter().map(|p| eval(*p)).collect());
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

fn records(
    cfg: &RunConfig,
    param: Option<f64>,
    mut f: impl FnMut(Measure) -> Result<Value, Failure>,
) -> Vec<Record> {
    cfg.measures
        .iter()
        .map(|&m| Record {
            param,
            measure: m,
            outcome: f(m),
        })
        .collect()
}

fn cached<T: Clone>(
    cell: &OnceCell<Result<T, Error>>,
    f: impl FnOnce() -> Result<T, Error>,
) -> Result<&T, Failure> {
    cell.get_or_init(f).as_ref().map_err(|e| e.clone().into())
}

fn scalar_point(cfg: &RunConfig, param: Option<f64>) -> Result<Vec<Record>, Failure> {
    let ens = &cfg.ensemble;
    let ch = param.map(BecChannel::new).transpose()?;
    let need = || ch.ok_or_else(|| Failure::config("missing --eps"));
    let wave = OnceCell::new();
    let traj = OnceCell::new();
    let solve = || {
        bec::solve_wave(
            need().map_err(|_| Error::InvalidArgument("eps".into()))?,
            ens,
            &cfg.grid,
        )
    };
    let run = || {
        let ch = need().map_err(|_| Error::InvalidArgument("eps".into()))?;
        bec::coupled_run(ch, ens, cfg.width, cfg.length, &RunOptions::default())
    };
    let rows = records(cfg, param, |m| {
        Ok(match m {
            Measure::VBec => {
                let s = cached(&wave, solve)?;
                Value {
                    value: s.velocity,
                    operation: "solve_wave",
                    tolerance: Some(cfg.grid.tol_velocity),
                    iterations: Some(s.iterations),
                    residual: Some(s.residual),
                }
            }
            Measure::VE => {
                let t = cached(&traj, run)?;
                Value::plain(
                    bec::empirical_velocity(t, need()?, ens)?,
                    "coupled_run",
                    None,
                )
            }
            Measure::VB => {
                let t = cached(&traj, run)?;
                Value::plain(
                    bec::v_bound_from(t, need()?, ens)?,
                    "discrete_velocity",
                    None,
                )
            }
            Measure::VA1 | Measure::VA2 => {
                let order = if m == Measure::VA1 { 1 } else { 2 };
                let a = bec::v_approx(need()?, ens, order)?;
                Value::plain(a.velocity, "v_approx", None)
            }
            Measure::XBp => Value::plain(
                bec::x_bp(need()?, ens)?,
                "fixed_point",
                Some(bec::FIXED_POINT_TOL),
            ),
            Measure::Gap => Value::plain(
                bec::energy_gap(need()?, ens)?,
                "potential",
                Some(bec::FIXED_POINT_TOL),
            ),
            Measure::EpsBp => Value::plain(
                bec::bp_threshold(ens),
                "bisect_bp",
                Some(bec::THRESHOLD_TOL),
            ),
            Measure::EpsMap => Value::plain(
                bec::map_threshold(ens)?,
                "bisect_map",
                Some(bec::THRESHOLD_TOL),
            ),
            Measure::GammaBar => Value::plain(
                bec::gamma_bar(ens, cfg.delta_eps, cfg.eps_ref, None, &cfg.grid)?,
                "gamma_bar",
                Some(cfg.grid.tol_velocity),
            ),
            _ => unreachable!("validated measure"),
        })
    });
    if let Some(path) = &cfg.profile_out {
        write_profile(path, &cached(&wave, solve)?.profile)?;
    }
    if let Some(path) = &cfg.trajectory_out {
        write_trajectory(path, cached(&traj, run)?, cfg.snapshots_every)?;
    }
    Ok(rows)
}

fn ga_point(cfg: &RunConfig, param: Option<f64>) -> Result<Vec<Record>, Failure> {
    let ens = &cfg.ensemble;
    let ps = psi();
    let ch = param.map(GaussChannel::new).transpose()?;
    let need = || ch.ok_or(Error::InvalidArgument("missing --mean".into()));
    let degrees = || {
        ens.regular_degrees().ok_or_else(|| {
            Error::Unsupported(format!(
                "Gaussian approximation needs a regular ensemble, got {ens}"
            ))
        })
    };
    let wave = OnceCell::new();
    let traj = OnceCell::new();
    let solve = || gauss::solve_wave_ga(ps, need()?, ens, &cfg.grid, cfg.variant);
    let run = || {
        gauss::coupled_run_ga(
            ps,
            need()?,
            ens,
            cfg.width,
            cfg.length,
            &RunOptions::default(),
        )
    };
    let rows = records(cfg, param, |m| {
        Ok(match m {
            Measure::VGa => {
                let s = cached(&wave, solve)?;
                Value {
                    value: s.velocity,
                    operation: "solve_wave_ga",
                    tolerance: Some(cfg.grid.tol_velocity),
                    iterations: Some(s.iterations),
                    residual: Some(s.residual),
                }
            }
            Measure::VE => {
                let (p_bp, t) = cached(&traj, run)?;
                let v = front::empirical_velocity(t, 0.5 * p_bp, &MeasureWindow::default())?;
                Value::plain(v, "coupled_run_ga", None)
            }
            Measure::XBp => {
                let p = GaModel::new(ps, need()?, ens)?.fixed_point()?;
                if p == 0.0 {
                    return Err(Error::BelowBpThreshold.into());
                }
                Value::plain(p, "fixed_point_ga", Some(1e-13))
            }
            Measure::Gap => {
                let w = GaWave::new(GaModel::new(ps, need()?, ens)?, cfg.variant)?;
                Value::plain(w.gap, "potential_ga", Some(1e-13))
            }
            Measure::EpsBp => {
                let (l, r) = degrees()?;
                Value::plain(gauss::ga_bp_threshold(ps, l, r), "bisect_bp_ga", Some(1e-9))
            }
            Measure::EpsMap => {
                let (l, r) = degrees()?;
                Value::plain(
                    gauss::ga_map_threshold(ps, l, r),
                    "bisect_map_ga",
                    Some(1e-9),
                )
            }
            _ => unreachable!("validated measure"),
        })
    });
    if let Some(path) = &cfg.profile_out {
        write_profile(path, &cached(&wave, solve)?.profile)?;
    }
    if let Some(path) = &cfg.trajectory_out {
        write_trajectory(path, &cached(&traj, run)?.1, cfg.snapshots_every)?;
    }
    Ok(rows)
}

fn density_point(
    cfg: &RunConfig,
    alg: &Algebra,
    param: Option<f64>,
) -> Result<Vec<Record>, Failure> {
    let ens = &cfg.ensemble;
    let kind = cfg.channel;
    let channel = param.map(|p| kind.density(alg.grid(), p)).transpose()?;
    let need = || {
        channel
            .as_ref()
            .ok_or(Error::InvalidArgument("missing channel parameter".into()))
    };
    let wave = OnceCell::new();
    let traj = OnceCell::new();
    let solve = || bms::solve_wave_density(alg, need()?, ens, &cfg.grid);
    let run = || -> Result<(f64, Trajectory), Error> {
        let de = DensityDe::new(alg, ens, need()?)?;
        let level = 0.5
            * bms::gap_with(&de, &FixedPointOptions::default())?
                .fixed_point
                .entropy;
        let r = bms::coupled_run_density(
            &de,
            cfg.width,
            cfg.length,
            level,
            &RunOptions::default(),
            false,
        )?;
        Ok((level, r.trajectory))
    };
    let scan = ThresholdScan::for_channel(kind);
    let rows = records(cfg, param, |m| {
        Ok(match m {
            Measure::VBms => {
                let s = cached(&wave, solve)?;
                Value {
                    value: s.velocity,
                    operation: "solve_wave_density",
                    tolerance: Some(cfg.grid.tol_velocity),
                    iterations: Some(s.iterations),
                    residual: Some(s.residual),
                }
            }
            Measure::VE => {
                let (level, t) = cached(&traj, run)?;
                let v = front::empirical_velocity(t, *level, &MeasureWindow::default())?;
                Value::plain(v, "coupled_run_density", None)
            }
            Measure::XBp => {
                let fp = bms::bp_fixed_point_density(alg, need()?, ens)?;
                if fp.trivial {
                    return Err(Error::BelowBpThreshold.into());
                }
                Value::plain(
                    fp.entropy,
                    "fixed_point_density",
                    Some(FixedPointOptions::default().tol),
                )
            }
            Measure::Gap => Value::plain(
                bms::energy_gap_density(alg, need()?, ens)?,
                "potential_density",
                Some(FixedPointOptions::default().tol),
            ),
            Measure::EpsBp => Value::plain(
                bms::bp_threshold_density(alg, ens, kind, &scan)?,
                "bisect_bp_density",
                Some(scan.tol),
            ),
            Measure::EpsMap => Value::plain(
                bms::map_threshold_density(alg, ens, kind, &scan)?,
                "bisect_map_density",
                Some(scan.tol),
            ),
            _ => unreachable!("validated measure"),
        })
    });
    if let Some(path) = &cfg.profile_out {
        let s = cached(&wave, solve)?;
        write_profile(path, &s.profile.entropy_trace(alg))?;
    }
    if let Some(path) = &cfg.density_out {
        let s = cached(&wave, solve)?;
        let mut w = BufWriter::new(File::create(path)?);
        for d in &s.profile.densities {
            write_binary(&mut w, d)?;
        }
        w.flush()?;
    }
    if let Some(path) = &cfg.trajectory_out {
        write_trajectory(path, &cached(&traj, run)?.1, cfg.snapshots_every)?;
    }
    Ok(rows)
}

/// Algebra self-checks on fixed inputs.
fn check_point(cfg: &RunConfig, alg: &Algebra) -> Vec<Record> {
    let g = alg.grid();
    let family = || -> Result<Vec<Density>, Error> {
        let mut v: Vec<Density> = [0.3, 1.2, 2.35, 3.4, 6.0]
            .iter()
            .map(|&m| Density::biawgn(g, m))
            .collect::<Result<_, _>>()?;
        v.push(Density::bec(g, 0.4)?);
        v.push(v[1].combine(0.5, &v[5], 0.5)?);
        Ok(v)
    };
    let pairs =
        |f: &mut dyn FnMut(&Density, &Density) -> Result<f64, Error>| -> Result<f64, Error> {
            let v = family()?;
            let mut worst: f64 = 0.0;
            for (i, a) in v.iter().enumerate() {
                for b in &v[i..] {
                    worst = worst.max(f(a, b)?);
                }
            }
            Ok(worst)
        };
    let checked = |value: f64, tol: f64, op: &'static str| -> Result<Value, Failure> {
        if value <= tol {
            Ok(Value::plain(value, op, Some(tol)))
        } else {
            Err(Failure {
                code: "tolerance-exceeded",
                kind: ErrorKind::Solver,
                message: format!("{op}: {value:e} above {tol:e}"),
            })
        }
    };
    records(cfg, None, |m| match m {
        Measure::Duality => {
            let v = pairs(&mut |a, b| {
                let h = |x: &Density| alg.entropy(x);
                Ok((h(&alg.var_conv(a, b)?)? + h(&alg.chk_conv(a, b)?)? - h(a)? - h(b)?).abs())
            })?;
            checked(v, 2e-3, "duality_rule")
        }
        Measure::Mass => {
            let v = pairs(&mut |a, b| {
                let x = (alg.var_conv(a, b)?.total_mass() - 1.0).abs();
                Ok(x.max((alg.chk_conv(a, b)?.total_mass() - 1.0).abs()))
            })?;
            checked(v, 1e-9, "mass_conservation")
        }
        Measure::Symmetry => {
            let v = pairs(&mut |a, b| {
                Ok(alg
                    .var_conv(a, b)?
                    .symmetry_defect()
                    .max(alg.chk_conv(a, b)?.symmetry_defect()))
            })?;
            checked(v, 1e-6, "symmetry")
        }
        Measure::Closure => {
            let mut worst: f64 = 0.0;
            let ens = &cfg.ensemble;
            for e in [0.2, 0.43, 0.465, 0.6, 0.9] {
                let c = Density::bec(g, e)?;
                let mut x = c.clone();
                let mut xs = e;
                for _ in 0..5 {
                    x = bms::de_single_step_density(alg, &x, &c, ens)?;
                    xs = bec::de_single_step(xs, BecChannel::new(e)?, ens)?;
                    worst = worst.max((alg.entropy(&x)? - xs).abs());
                }
                let e2 = 1.0 - e;
                let b = Density::bec(g, e2)?;
                worst = worst.max((alg.entropy(&alg.var_conv(&c, &b)?)? - e * e2).abs());
                worst = worst.max(
                    (alg.entropy(&alg.chk_conv(&c, &b)?)? - (1.0 - (1.0 - e) * (1.0 - e2))).abs(),
                );
            }
            checked(worst, 1e-9, "bec_closure")
        }
        _ => unreachable!("validated measure"),
    })
}

/// `z,value` rows of a continuum profile.
pub fn write_profile(path: &Path, profile: &Profile) -> Result<(), Failure> {
    if profile.values.is_empty() {
        return Err(Failure::config("empty profile"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["z", "value"])?;
    for (i, v) in profile.values.iter().enumerate() {
        w.write_record([fmt(profile.z(i)), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// `iteration,z,value` rows for every snapshot whose iteration is a
/// multiple of `every`.
pub fn write_trajectory(path: &Path, traj: &Trajectory, every: usize) -> Result<(), Failure> {
    if traj.is_empty() {
        return Err(Failure::config("empty trajectory"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "z", "value"])?;
    for snap in traj.snapshots.iter().filter(|s| s.iteration % every == 0) {
        for (z, v) in snap.values.iter().enumerate() {
            w.write_record([snap.iteration.to_string(), z.to_string(), fmt(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the result table; returns the first failure in row order.
pub fn write_records(
    out: impl Write,
    cfg: &RunConfig,
    rows: &[Record],
) -> Result<Option<Failure>, Failure> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = cfg.echo(None).iter().map(|(k, _)| *k).collect();
    header.extend([
        "measure",
        "value",
        "status",
        "operation",
        "tolerance",
        "iterations",
        "residual",
        "message",
    ]);
    w.write_record(&header)?;
    let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
    let mut first = None;
    for r in rows {
        let mut row: Vec<String> = cfg.echo(r.param).into_iter().map(|(_, v)| v).collect();
        row.push(r.measure.name().to_string());
        match &r.outcome {
            Ok(v) => row.extend([
                fmt(v.value),
                "ok".to_string(),
                v.operation.to_string(),
                opt(v.tolerance),
                v.iterations.map(|i| i.to_string()).unwrap_or_default(),
                opt(v.residual),
                String::new(),
            ]),
            Err(e) => {
                first.get_or_insert_with(|| e.clone());
                row.extend([
                    String::new(),
                    e.code.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.message.clone(),
                ]);
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(first)
}

/// Runs a validated configuration, writing the result table.
pub fn run(cfg: &RunConfig) -> Result<Option<Failure>, Failure> {
    let rows = run_all(cfg)?;
    match &cfg.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            let first = write_records(&mut f, cfg, &rows)?;
            f.flush()?;
            Ok(first)
        }
        None => write_records(io::stdout().lock(), cfg, &rows),
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    if let Err(e) = Flags::try_parse_from(&argv) {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    }
    let outcome = load(argv).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(f)) | Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}

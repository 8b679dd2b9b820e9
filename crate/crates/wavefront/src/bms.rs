//! Density evolution, potential and decoding waves over general binary
//! memoryless symmetric channels.

use rayon::prelude::*;
use wavefront_core::front::{self, kink_center, MeasureWindow, RunOptions};
use wavefront_core::numeric::{bisect, level_crossing, trapezoid};
use wavefront_core::{Ensemble, Error, GridConfig, Profile, Result, Trajectory};

use crate::density::{deriv_lift, Algebra, Density, GDensity, LlrGrid};

/// Finite mass below this is moved to `+∞` after each update.
pub const FLUSH_LEVEL: f64 = 1e-15;

/// Channel families with a scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Erasure probability `ε`.
    Bec,
    /// LLR mean `2/σ²`.
    Biawgn,
}

impl ChannelKind {
    pub fn density(self, grid: LlrGrid, param: f64) -> Result<Density> {
        match self {
            ChannelKind::Bec => Density::bec(grid, param),
            ChannelKind::Biawgn => Density::biawgn(grid, param),
        }
    }

    /// Whether a larger parameter means a noisier channel.
    pub fn increasing_noise(self) -> bool {
        self == ChannelKind::Bec
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Bec => "bec",
            ChannelKind::Biawgn => "biawgn",
        }
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bec" => Ok(ChannelKind::Bec),
            "biawgn" | "awgn" => Ok(ChannelKind::Biawgn),
            other => Err(Error::InvalidArgument(format!("unknown channel {other:?}"))),
        }
    }
}

/// Density evolution maps of one ensemble over one channel.
#[derive(Debug, Clone)]
pub struct DensityDe<'a> {
    pub alg: &'a Algebra,
    pub ens: &'a Ensemble,
    pub channel: &'a Density,
    lambda: Vec<f64>,
    rho: Vec<f64>,
}

impl<'a> DensityDe<'a> {
    pub fn new(alg: &'a Algebra, ens: &'a Ensemble, channel: &'a Density) -> Result<Self> {
        if channel.grid() != alg.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            alg,
            ens,
            channel,
            lambda: ens.lambda().by_power(),
            rho: ens.rho().by_power(),
        })
    }

    /// `ρ^⊠(x)`.
    pub fn check(&self, x: &Density) -> Density {
        self.alg
            .chk_lift(&self.rho, x)
            .expect("density on the algebra grid")
    }

    /// `c ⊛ λ^⊛(y)`.
    pub fn variable(&self, y: &Density) -> Density {
        self.alg
            .var_lift(&self.lambda, y, Some(self.channel))
            .expect("density on the algebra grid")
    }

    /// One uncoupled update, projected back onto symmetric probability
    /// densities.
    pub fn step(&self, x: &Density) -> Density {
        finish(self.variable(&self.check(x)))
    }

    /// Single-system potential `W_s(x; c)`.
    pub fn potential(&self, x: &Density) -> f64 {
        let alg = self.alg;
        let gx = alg.to_g(x).expect("density on the algebra grid");
        let g_rho = alg.g_lift(&self.rho, &gx);
        let node_chk = alg.g_entropy(&alg.g_lift(self.ens.node_chk_coeffs(), &gx));
        let rho = alg.from_g(&g_rho);
        let cross = alg.g_entropy(&alg.g_conv(&gx, &g_rho));
        let node_var = alg
            .entropy(
                &alg.var_lift(self.ens.node_var_coeffs(), &rho, Some(self.channel))
                    .expect("density on the algebra grid"),
            )
            .expect("density on the algebra grid");
        node_chk / self.ens.chk_degree() + alg.g_entropy(&g_rho)
            - cross
            - node_var / self.ens.var_degree()
    }
}

fn finish(x: Density) -> Density {
    x.symmetrized().normalized().flushed(FLUSH_LEVEL)
}

/// `f` over `items`, evaluated once per run of equal consecutive inputs.
/// Evaluation is parallel; the result does not depend on the schedule.
/// Positions closer than this to the start of their run reuse its image.
const RUN_TOL: f64 = 1e-15;

fn map_runs<F>(items: &[&Density], f: F) -> Vec<Density>
where
    F: Fn(&Density) -> Density + Sync,
{
    let mut starts: Vec<usize> = Vec::new();
    for i in 0..items.len() {
        match starts.last() {
            Some(&s) if items[i].max_diff(items[s]) <= RUN_TOL => {}
            _ => starts.push(i),
        }
    }
    let unique: Vec<Density> = starts.par_iter().map(|&i| f(items[i])).collect();
    let mut out = Vec::with_capacity(items.len());
    let mut run = 0;
    for i in 0..items.len() {
        if run + 1 < starts.len() && starts[run + 1] == i {
            run += 1;
        }
        out.push(unique[run].clone());
    }
    out
}

/// Trapezoid means over windows of `n + 1` consecutive entries.
fn window_means(items: &[Density], n: usize) -> Vec<Density> {
    if n == 0 {
        return items.to_vec();
    }
    let inv = 1.0 / n as f64;
    (0..items.len().saturating_sub(n))
        .map(|k| {
            let terms = (0..=n).map(|j| {
                let c = if j == 0 || j == n { 0.5 * inv } else { inv };
                (c, &items[k + j])
            });
            Density::mix(terms).expect("common grid")
        })
        .collect()
}

/// One uncoupled density evolution step `c ⊛ λ^⊛(ρ^⊠(x))`.
pub fn de_single_step_density(
    alg: &Algebra,
    x: &Density,
    channel: &Density,
    ens: &Ensemble,
) -> Result<Density> {
    alg.entropy(x)?;
    Ok(DensityDe::new(alg, ens, channel)?.step(x))
}

/// Stopping rules for the uncoupled fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Stop once the entropy moves less than this in one iteration.
    pub tol: f64,
    pub max_iterations: usize,
    /// Fixed points with entropy below this are trivial.
    pub trivial_level: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 100_000,
            trivial_level: 1e-8,
        }
    }
}

/// Outcome of iterating uncoupled density evolution from `Δ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFixedPoint {
    pub density: Density,
    pub entropy: f64,
    pub converged: bool,
    pub trivial: bool,
    pub iterations: usize,
}

pub fn bp_fixed_point_with(de: &DensityDe, opts: &FixedPointOptions) -> DensityFixedPoint {
    let alg = de.alg;
    let mut x = Density::delta_zero(alg.grid());
    let mut h = 1.0;
    for it in 1..=opts.max_iterations {
        let next = de.step(&x);
        let hn = alg.entropy(&next).expect("algebra grid");
        let done = (hn - h).abs() < opts.tol || next.is_delta_inf();
        x = next;
        h = hn;
        if done {
            return DensityFixedPoint {
                trivial: h < opts.trivial_level,
                density: x,
                entropy: h,
                converged: true,
                iterations: it,
            };
        }
    }
    DensityFixedPoint {
        trivial: h < opts.trivial_level,
        density: x,
        entropy: h,
        converged: false,
        iterations: opts.max_iterations,
    }
}

/// Fixed point of uncoupled density evolution started at `Δ₀`.
pub fn bp_fixed_point_density(
    alg: &Algebra,
    channel: &Density,
    ens: &Ensemble,
) -> Result<DensityFixedPoint> {
    Ok(bp_fixed_point_with(
        &DensityDe::new(alg, ens, channel)?,
        &FixedPointOptions::default(),
    ))
}

/// `W_s(x; c)`.
pub fn potential_single_density(
    alg: &Algebra,
    x: &Density,
    channel: &Density,
    ens: &Ensemble,
) -> Result<f64> {
    alg.entropy(x)?;
    Ok(DensityDe::new(alg, ens, channel)?.potential(x))
}

/// Nontrivial fixed point and energy gap `W_s(x_BP; c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGap {
    pub fixed_point: DensityFixedPoint,
    pub gap: f64,
}

pub fn gap_with(de: &DensityDe, opts: &FixedPointOptions) -> Result<DensityGap> {
    let fp = bp_fixed_point_with(de, opts);
    if fp.trivial {
        return Err(Error::BelowBpThreshold);
    }
    if !fp.converged {
        return Err(Error::NoConvergence {
            iterations: fp.iterations,
            residual: f64::NAN,
        });
    }
    let gap = de.potential(&fp.density);
    Ok(DensityGap {
        fixed_point: fp,
        gap,
    })
}

/// Energy gap at the nontrivial fixed point.
pub fn energy_gap_density(alg: &Algebra, channel: &Density, ens: &Ensemble) -> Result<f64> {
    Ok(gap_with(
        &DensityDe::new(alg, ens, channel)?,
        &FixedPointOptions::default(),
    )?
    .gap)
}

/// Bisection bracket and tolerance for threshold scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdScan {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub fixed_point: FixedPointOptions,
}

impl ThresholdScan {
    pub fn for_channel(kind: ChannelKind) -> Self {
        let fixed_point = FixedPointOptions {
            max_iterations: 20_000,
            ..FixedPointOptions::default()
        };
        match kind {
            ChannelKind::Bec => Self {
                lo: 0.0,
                hi: 1.0,
                tol: 1e-5,
                fixed_point,
            },
            ChannelKind::Biawgn => Self {
                lo: 0.1,
                hi: 20.0,
                tol: 1e-4,
                fixed_point,
            },
        }
    }
}

/// Boundary between trivial and nontrivial fixed points.
pub fn bp_threshold_density(
    alg: &Algebra,
    ens: &Ensemble,
    kind: ChannelKind,
    scan: &ThresholdScan,
) -> Result<f64> {
    let noisy = |p: f64| -> Result<bool> {
        let c = kind.density(alg.grid(), p)?;
        let fp = bp_fixed_point_with(&DensityDe::new(alg, ens, &c)?, &scan.fixed_point);
        // an unconverged iteration near the threshold counts as stuck
        Ok(!fp.trivial)
    };
    scan_parameter(kind, scan, noisy)
}

/// Parameter where the energy gap changes sign.
pub fn map_threshold_density(
    alg: &Algebra,
    ens: &Ensemble,
    kind: ChannelKind,
    scan: &ThresholdScan,
) -> Result<f64> {
    let bp = bp_threshold_density(alg, ens, kind, scan)?;
    let (lo, hi) = if kind.increasing_noise() {
        (bp, scan.hi)
    } else {
        (scan.lo, bp)
    };
    let noisy = |p: f64| -> Result<bool> {
        let c = kind.density(alg.grid(), p)?;
        match gap_with(&DensityDe::new(alg, ens, &c)?, &scan.fixed_point) {
            Ok(g) => Ok(g.gap <= 0.0),
            Err(Error::BelowBpThreshold) => Ok(false),
            Err(Error::NoConvergence { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    scan_parameter(kind, &ThresholdScan { lo, hi, ..*scan }, noisy)
}

fn scan_parameter(
    kind: ChannelKind,
    scan: &ThresholdScan,
    noisy: impl Fn(f64) -> Result<bool>,
) -> Result<f64> {
    let failure = std::cell::RefCell::new(None);
    let t = bisect(scan.lo, scan.hi, scan.tol, |p| match noisy(p) {
        Ok(v) => v == kind.increasing_noise(),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            false
        }
    });
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(t),
    }
}

// -- coupled chain --------------------------------------------------------

/// One synchronous coupled update of the densities at `z = 0 ..= L`.
///
/// Positions left of the chain are decoded (`Δ∞`, perfect channel);
/// positions right of it repeat `x_L`.
pub fn coupled_de_step_density(
    de: &DensityDe,
    width: usize,
    state: &[Density],
) -> Result<Vec<Density>> {
    if width == 0 || state.is_empty() {
        return Err(Error::InvalidArgument("empty coupled chain".into()));
    }
    if state.iter().any(|x| x.grid() != de.alg.grid()) {
        return Err(Error::GridMismatch);
    }
    let len = state.len() - 1;
    let w = width;
    let inputs: Vec<&Density> = (0..len + w).map(|z| &state[z.min(len)]).collect();
    let checks = map_runs(&inputs, |x| de.check(x));
    let inv = 1.0 / w as f64;
    let means: Vec<Density> = (0..=len)
        .map(|k| Density::mix((0..w).map(|j| (inv, &checks[k + j]))).expect("common grid"))
        .collect();
    let refs: Vec<&Density> = means.iter().collect();
    let vars = map_runs(&refs, |y| de.variable(y));
    let decoded = Density::delta_inf(de.alg.grid());
    let raw: Vec<Density> = (0..=len)
        .map(|z| {
            let terms = (0..w).map(|i| (inv, if i <= z { &vars[z - i] } else { &decoded }));
            Density::mix(terms).expect("common grid")
        })
        .collect();
    let refs: Vec<&Density> = raw.iter().collect();
    Ok(map_runs(&refs, |x| finish(x.clone())))
}

/// Entropy of each density.
pub fn entropy_trace(alg: &Algebra, xs: &[Density]) -> Vec<f64> {
    xs.iter()
        .map(|x| alg.entropy(x).expect("algebra grid"))
        .collect()
}

/// A coupled run: the entropy-trace trajectory and the final chain.
#[derive(Debug, Clone)]
pub struct DensityRun {
    pub trajectory: Trajectory,
    pub level: f64,
    pub last: Vec<Density>,
    /// Full chains at the recorded iterations, when requested.
    pub chains: Vec<(usize, Vec<Density>)>,
}

/// Runs the coupled chain from the all-`Δ₀` state, tracking the entropy
/// kink at `level`.
pub fn coupled_run_density(
    de: &DensityDe,
    width: usize,
    length: usize,
    level: f64,
    opts: &RunOptions,
    keep_chains: bool,
) -> Result<DensityRun> {
    if opts.record_every == 0 {
        return Err(Error::InvalidArgument(
            "record interval must be positive".into(),
        ));
    }
    if width == 0 || length < width {
        return Err(Error::InvalidArgument(format!(
            "chain length {length} too short for width {width}"
        )));
    }
    let alg = de.alg;
    let mut state = vec![Density::delta_zero(alg.grid()); length + 1];
    let mut trace = entropy_trace(alg, &state);
    let mut traj = Trajectory::new(width, length);
    let mut chains = Vec::new();
    traj.push(0, trace.clone());
    if keep_chains {
        chains.push((0, state.clone()));
    }
    for it in 1..=opts.max_iterations {
        let next = coupled_de_step_density(de, width, &state)?;
        let next_trace = entropy_trace(alg, &next);
        let moved = next_trace
            .iter()
            .zip(&trace)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        state = next;
        trace = next_trace;
        let center = kink_center(&trace, level);
        let done = moved < opts.stall_tol
            || center.is_none()
            || center.is_some_and(|c| c > opts.stop_fraction * length as f64);
        if it % opts.record_every == 0 || done {
            traj.push(it, trace.clone());
            if keep_chains {
                chains.push((it, state.clone()));
            }
        }
        if done {
            log::debug!("coupled density run stopped after {it} iterations");
            break;
        }
    }
    Ok(DensityRun {
        trajectory: traj,
        level,
        last: state,
        chains,
    })
}

/// Empirical velocity of the entropy kink at `H(x_BP)/2`.
pub fn empirical_velocity_density(
    alg: &Algebra,
    channel: &Density,
    ens: &Ensemble,
    width: usize,
    length: usize,
) -> Result<f64> {
    let de = DensityDe::new(alg, ens, channel)?;
    let g = gap_with(&de, &FixedPointOptions::default())?;
    let level = 0.5 * g.fixed_point.entropy;
    let run = coupled_run_density(&de, width, length, level, &RunOptions::default(), false)?;
    front::empirical_velocity(&run.trajectory, level, &MeasureWindow::default())
}

// -- continuum wave -------------------------------------------------------

/// Density-valued profile on a uniform z-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub z_min: f64,
    pub dz: f64,
    pub densities: Vec<Density>,
}

impl DensityProfile {
    pub fn z(&self, i: usize) -> f64 {
        self.z_min + i as f64 * self.dz
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn entropy_trace(&self, alg: &Algebra) -> Profile {
        Profile {
            z_min: self.z_min,
            dz: self.dz,
            values: entropy_trace(alg, &self.densities),
        }
    }

    /// `X(z + shift)` by linear interpolation, clamped to the ends.
    pub fn shifted(&self, shift: f64) -> DensityProfile {
        let last = self.len() - 1;
        let densities = (0..self.len())
            .map(|i| {
                let pos = i as f64 + shift / self.dz;
                if pos <= 0.0 {
                    return self.densities[0].clone();
                }
                if pos >= last as f64 {
                    return self.densities[last].clone();
                }
                let k = pos as usize;
                let t = pos - k as f64;
                self.densities[k]
                    .combine(1.0 - t, &self.densities[k + 1], t)
                    .expect("common grid")
            })
            .collect();
        DensityProfile { densities, ..*self }
    }

    /// Derivatives by central differences, one-sided at the ends.
    pub fn derivatives(&self) -> Vec<Density> {
        let n = self.len();
        let d = &self.densities;
        (0..n)
            .map(|i| {
                let (a, b, h) = match i {
                    0 => (&d[0], &d[1.min(n - 1)], 0.5 * self.dz),
                    i if i == n - 1 => (&d[n - 2], &d[n - 1], 0.5 * self.dz),
                    i => (&d[i - 1], &d[i + 1], self.dz),
                };
                deriv_lift(a, b, h).expect("common grid")
            })
            .collect()
    }
}

/// Converged density-valued wave with its velocity.
#[derive(Debug, Clone)]
pub struct BmsWaveSolution {
    pub profile: DensityProfile,
    pub velocity: f64,
    pub gap: f64,
    pub denominator: f64,
    pub residual: f64,
    pub iterations: usize,
    pub drift: f64,
    pub plateau: Density,
}

/// Entropy tolerance of the fixed point used as the wave plateau.
pub const PLATEAU_TOL: f64 = 1e-13;

/// Default z-grid of the density profile solver.
pub fn density_grid() -> GridConfig {
    GridConfig {
        z_min: -6.0,
        z_max: 6.0,
        dz: 1.0 / 16.0,
        tol_profile: 1e-9,
        tol_velocity: 1e-7,
        ..GridConfig::default()
    }
}

/// Solver for the density-valued shape equation
/// `X - v X' = ∫₀¹du c ⊛ λ^⊛(∫₀¹ds ρ^⊠(X(z - u + s)))`.
#[derive(Debug)]
pub struct WaveSolver<'a> {
    de: DensityDe<'a>,
    plateau: Density,
    gap: f64,
    drho: Vec<f64>,
}

impl<'a> WaveSolver<'a> {
    /// Requires a nontrivial fixed point with positive gap.
    pub fn new(de: DensityDe<'a>) -> Result<Self> {
        let opts = FixedPointOptions {
            tol: PLATEAU_TOL,
            ..FixedPointOptions::default()
        };
        let g = gap_with(&de, &opts)?;
        if g.gap <= 0.0 {
            return Err(Error::AboveMapThreshold { gap: g.gap });
        }
        let drho = de.ens.rho().derivative_by_power();
        Ok(Self {
            de,
            plateau: g.fixed_point.density,
            gap: g.gap,
            drho,
        })
    }

    pub fn plateau(&self) -> &Density {
        &self.plateau
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Windowed right-hand side; the profile is extended by `Δ∞` on the left
    /// and by the plateau on the right.
    pub fn rhs(&self, x: &[Density], n: usize) -> Vec<Density> {
        let grid = self.de.alg.grid();
        let left = self.de.check(&Density::delta_inf(grid));
        let right = self.de.check(&self.plateau);
        let refs: Vec<&Density> = x.iter().collect();
        let mut checks = Vec::with_capacity(x.len() + 2 * n);
        checks.extend(std::iter::repeat_n(left, n));
        checks.extend(map_runs(&refs, |d| self.de.check(d)));
        checks.extend(std::iter::repeat_n(right, n));
        let inner = window_means(&checks, n);
        let refs: Vec<&Density> = inner.iter().collect();
        let vars = map_runs(&refs, |y| finish(self.de.variable(y)));
        let mut out = window_means(&vars, n);
        out.truncate(x.len());
        out
    }

    /// `-∫ H(ρ'^⊠(X) ⊠ (X')^⊠2) dz`.
    pub fn denominator(&self, profile: &DensityProfile) -> f64 {
        let alg = self.de.alg;
        let derivs = profile.derivatives();
        let integrand: Vec<f64> = profile
            .densities
            .par_iter()
            .zip(derivs.par_iter())
            .map(|(x, d)| {
                if d.weights().iter().all(|&w| w == 0.0) && d.mass_inf() == 0.0 {
                    return 0.0;
                }
                let gx = alg.to_g(x).expect("algebra grid");
                let gd = alg.to_g(d).expect("algebra grid");
                -self.denominator_term(&gx, &gd)
            })
            .collect();
        trapezoid(&integrand, profile.dz)
    }

    fn denominator_term(&self, gx: &GDensity, gd: &GDensity) -> f64 {
        let alg = self.de.alg;
        let sq = alg.g_conv(gd, gd);
        let lift = alg.g_lift(&self.drho, gx);
        alg.g_entropy(&alg.g_conv(&lift, &sq))
    }

    pub fn solve(&self, grid: &GridConfig) -> Result<BmsWaveSolution> {
        let n = grid.per_window()?;
        let points = grid.points()?;
        let alg = self.de.alg;
        let decoded = Density::delta_inf(alg.grid());
        let level = 0.5 * alg.entropy(&self.plateau)?;
        let mut profile = DensityProfile {
            z_min: grid.z_min,
            dz: grid.dz,
            densities: (0..points)
                .map(|i| {
                    let s = 1.0 / (1.0 + (-4.0 * (grid.z_min + i as f64 * grid.dz)).exp());
                    decoded
                        .combine(1.0 - s, &self.plateau, s)
                        .expect("common grid")
                })
                .collect(),
        };
        let mut v = 0.0;
        let mut residual = f64::INFINITY;
        for it in 1..=grid.max_iterations {
            let rhs = self.rhs(&profile.densities, n);
            let solved = upwind_densities(&rhs, v, grid.dz, &self.plateau);
            let mut next: Vec<Density> = solved
                .iter()
                .zip(&profile.densities)
                .map(|(s, o)| {
                    s.combine(1.0 - grid.damping, o, grid.damping)
                        .expect("common grid")
                        .normalized()
                })
                .collect();
            next[0] = decoded.clone();
            let next = DensityProfile {
                z_min: grid.z_min,
                dz: grid.dz,
                densities: next,
            };
            let trace = entropy_trace(alg, &next.densities);
            let shift = level_crossing(&trace, level).ok_or(Error::NoFront)? * grid.dz + grid.z_min;
            let next = next.shifted(shift);
            let denom = front::checked_denominator(self.denominator(&next))?;
            let vn = self.gap / denom;
            let dx = next
                .densities
                .iter()
                .zip(&profile.densities)
                .map(|(a, b)| a.max_diff(b))
                .fold(0.0, f64::max);
            let dv = (vn - v).abs();
            residual = dx.max(dv);
            log::debug!("density wave iteration {it}: v = {vn:.6e}, dx = {dx:.3e}");
            profile = next;
            v = vn;
            if dx < grid.tol_profile && dv < grid.tol_velocity {
                return Ok(BmsWaveSolution {
                    profile,
                    velocity: v,
                    gap: self.gap,
                    denominator: denom,
                    residual,
                    iterations: it,
                    drift: shift,
                    plateau: self.plateau.clone(),
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: grid.max_iterations,
            residual,
        })
    }
}

/// Componentwise exact upwind solve of `X - v X' = R` with `X` equal to
/// `right` at the last node.
fn upwind_densities(rhs: &[Density], v: f64, dz: f64, right: &Density) -> Vec<Density> {
    let Some((a, b)) = front::upwind_weights(v, dz) else {
        return rhs.to_vec();
    };
    let n = rhs.len();
    let mut x = vec![right.clone(); n];
    for i in (0..n - 1).rev() {
        let terms = [(a, &x[i + 1]), (1.0 - a - b, &rhs[i]), (b, &rhs[i + 1])];
        x[i] = Density::mix(terms).expect("common grid");
    }
    x
}

/// Continuum wave shape and velocity for a channel density.
pub fn solve_wave_density(
    alg: &Algebra,
    channel: &Density,
    ens: &Ensemble,
    grid: &GridConfig,
) -> Result<BmsWaveSolution> {
    WaveSolver::new(DensityDe::new(alg, ens, channel)?)?.solve(grid)
}

/// Velocity formula evaluated on a given profile.
pub fn velocity_formula_density(
    alg: &Algebra,
    channel: &Density,
    ens: &Ensemble,
    profile: &DensityProfile,
) -> Result<f64> {
    let solver = WaveSolver::new(DensityDe::new(alg, ens, channel)?)?;
    let denom = front::checked_denominator(solver.denominator(profile))?;
    Ok(solver.gap / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;
    use wavefront_core::bec::{self, BecChannel};
    use wavefront_core::CoupledState;

    fn alg() -> &'static Algebra {
        static A: OnceLock<Algebra> = OnceLock::new();
        A.get_or_init(|| Algebra::new(LlrGrid::default()))
    }

    fn bec_d(e: f64) -> Density {
        Density::bec(alg().grid(), e).unwrap()
    }

    fn erasure(x: &Density) -> f64 {
        alg().entropy(x).unwrap()
    }

    fn is_two_point(x: &Density) -> bool {
        let n = x.grid().half();
        x.weights()
            .iter()
            .enumerate()
            .all(|(k, &w)| k == n || w == 0.0)
    }

    #[test]
    fn single_step_matches_scalar() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let out = de_single_step_density(alg(), &bec_d(0.5), &bec_d(0.5), &ens).unwrap();
        let want = bec::de_single_step(0.5, BecChannel::new(0.5).unwrap(), &ens).unwrap();
        assert!(is_two_point(&out));
        assert!((erasure(&out) - want).abs() < 1e-12);
        assert!((want - 0.469238).abs() < 1e-6);
        let inf = Density::delta_inf(alg().grid());
        assert!(de_single_step_density(alg(), &inf, &bec_d(0.5), &ens)
            .unwrap()
            .is_delta_inf());
        assert!(de_single_step_density(alg(), &bec_d(0.7), &inf, &ens)
            .unwrap()
            .is_delta_inf());
    }

    #[test]
    fn potential_and_gap_match_scalar() {
        let ens = Ensemble::regular(3, 6).unwrap();
        for (x, e) in [(0.2, 0.46), (0.35, 0.465), (0.9, 0.3)] {
            let ch = BecChannel::new(e).unwrap();
            let got = potential_single_density(alg(), &bec_d(x), &bec_d(e), &ens).unwrap();
            let want = bec::potential(x, ch, &ens).unwrap();
            assert!((got - want).abs() < 1e-12, "{got} {want}");
        }
        let inf = Density::delta_inf(alg().grid());
        assert_eq!(
            potential_single_density(alg(), &inf, &bec_d(0.4), &ens).unwrap(),
            0.0
        );
        let ch = BecChannel::new(0.465).unwrap();
        let got = energy_gap_density(alg(), &bec_d(0.465), &ens).unwrap();
        assert!((got - bec::energy_gap(ch, &ens).unwrap()).abs() < 1e-9);
        let fp = bp_fixed_point_density(alg(), &bec_d(0.46), &ens).unwrap();
        assert!(
            (fp.entropy - bec::x_bp(BecChannel::new(0.46).unwrap(), &ens).unwrap()).abs() < 1e-9
        );
        assert!(matches!(
            energy_gap_density(alg(), &bec_d(0.4), &ens),
            Err(Error::BelowBpThreshold)
        ));
        assert!(bp_fixed_point_density(alg(), &inf, &ens).unwrap().trivial);
    }

    #[test]
    fn coupled_step_matches_scalar() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let ch = BecChannel::new(0.47).unwrap();
        let c = bec_d(0.47);
        let de = DensityDe::new(alg(), &ens, &c).unwrap();
        let values: Vec<f64> = (0..=24).map(|z| (z as f64 / 24.0).powi(2) * 0.9).collect();
        let mut scalar = CoupledState::from_interior(4, values.clone()).unwrap();
        let mut dens: Vec<Density> = values.iter().map(|&x| bec_d(x)).collect();
        for _ in 0..5 {
            scalar = bec::coupled_de_step(&scalar, ch, &ens);
            dens = coupled_de_step_density(&de, 4, &dens).unwrap();
            for (d, s) in dens.iter().zip(scalar.interior()) {
                assert!(is_two_point(d));
                assert!((erasure(d) - s).abs() < 1e-9);
            }
        }
        let decoded = vec![Density::delta_inf(alg().grid()); 10];
        let out = coupled_de_step_density(&de, 3, &decoded).unwrap();
        assert!(out.iter().all(Density::is_delta_inf));
    }

    #[test]
    fn denominator_reduces_to_scalar_weight() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let c = bec_d(0.465);
        let solver = WaveSolver::new(DensityDe::new(alg(), &ens, &c).unwrap()).unwrap();
        let (x, dx) = (0.3, 0.7);
        let gx = alg().to_g(&bec_d(x)).unwrap();
        let d = Density::delta_zero(alg().grid())
            .combine(dx, &Density::delta_inf(alg().grid()), -dx)
            .unwrap();
        let gd = alg().to_g(&d).unwrap();
        let got = -solver.denominator_term(&gx, &gd);
        let want = ens.rho().derivative(1.0 - x) * dx * dx;
        assert!((got - want).abs() < 1e-12, "{got} {want}");
    }

    #[test]
    fn bec_wave_matches_scalar_solver() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let grid = density_grid();
        for (e, tol) in [(0.465, 1e-3), (0.485, 5e-4)] {
            let c = bec_d(e);
            let sol = solve_wave_density(alg(), &c, &ens, &grid).unwrap();
            let scalar = bec::solve_wave(BecChannel::new(e).unwrap(), &ens, &grid).unwrap();
            assert!(
                (sol.velocity - scalar.velocity).abs() < 1e-7,
                "{} {}",
                sol.velocity,
                scalar.velocity
            );
            let table = if e == 0.465 { 0.03741 } else { 0.00456 };
            assert!((sol.velocity - table).abs() < tol);
            assert!((sol.velocity - sol.gap / sol.denominator).abs() < 1e-10);
            let trace = sol.profile.entropy_trace(alg());
            assert!(trace.values[0] < 1e-5);
            assert!((trace.values[trace.len() - 1] - erasure(&sol.plateau)).abs() < 1e-5);
            assert!(trace.is_nondecreasing(1e-9));
        }
    }

    #[test]
    fn channel_kind_parsing() {
        assert_eq!("BEC".parse::<ChannelKind>().unwrap(), ChannelKind::Bec);
        assert_eq!(
            "biawgn".parse::<ChannelKind>().unwrap(),
            ChannelKind::Biawgn
        );
        assert!("bsc".parse::<ChannelKind>().is_err());
    }
}

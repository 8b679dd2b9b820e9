//! Scalar pipeline on the binary erasure channel.
//!
//! Messages are described by their erasure probability, so density
//! evolution, the potential and the wave shape are all scalar.

use alloc::format;
use alloc::vec::Vec;

use libm::sqrt;

use crate::ensemble::Ensemble;
use crate::error::{invalid, Error, Result};
use crate::front::{
    self, discrete_velocity, mid_snapshot, run_front, GridConfig, MeasureWindow, Profile,
    RunOptions, ScalarDe, ScalarWave, Trajectory, WaveSolution,
};
use crate::numeric::bisect;

/// Iteration cap of [`bp_fixed_point`].
pub const FIXED_POINT_CAP: usize = 1_000_000;
/// Step size below which the fixed-point iteration stops.
pub const FIXED_POINT_TOL: f64 = 1e-13;
/// Fixed points below this are reported as trivial.
pub const TRIVIAL_LEVEL: f64 = 1e-9;
/// Bisection tolerance of both thresholds.
pub const THRESHOLD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BecChannel {
    epsilon: f64,
}

impl BecChannel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(invalid(format!(
                "erasure probability {epsilon} outside [0, 1]"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// The recursion `x <- ε λ(1 - ρ(1 - x))` split into its two halves.
#[derive(Debug, Clone, Copy)]
pub struct BecDe<'a> {
    pub epsilon: f64,
    pub ensemble: &'a Ensemble,
}

impl<'a> BecDe<'a> {
    pub fn new(ch: BecChannel, ensemble: &'a Ensemble) -> Self {
        Self {
            epsilon: ch.epsilon,
            ensemble,
        }
    }
}

impl ScalarDe for BecDe<'_> {
    fn check_map(&self, x: f64) -> f64 {
        1.0 - self.ensemble.rho().value(1.0 - x)
    }

    fn variable_map(&self, y: f64) -> f64 {
        self.epsilon * self.ensemble.lambda().value(y)
    }
}

/// Uncoupled update `ε λ(1 - ρ(1 - x))`.
pub fn de_single_step(x: f64, ch: BecChannel, ens: &Ensemble) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("x = {x} outside [0, 1]")));
    }
    Ok(BecDe::new(ch, ens).step(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    /// Largest stable fixed point, or 0 when the iteration decodes.
    pub x_bp: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Iterates the uncoupled recursion from `x = 1`.
pub fn bp_fixed_point(ch: BecChannel, ens: &Ensemble) -> FixedPointReport {
    let de = BecDe::new(ch, ens);
    let mut x = 1.0;
    for it in 1..=FIXED_POINT_CAP {
        let next = de.step(x);
        let done = (next - x).abs() < FIXED_POINT_TOL;
        x = next;
        if done {
            return FixedPointReport {
                x_bp: if x < TRIVIAL_LEVEL { 0.0 } else { x },
                converged: true,
                iterations: it,
            };
        }
    }
    FixedPointReport {
        x_bp: x,
        converged: false,
        iterations: FIXED_POINT_CAP,
    }
}

/// Nonzero BP fixed point, or an error below threshold.
pub fn x_bp(ch: BecChannel, ens: &Ensemble) -> Result<f64> {
    let report = bp_fixed_point(ch, ens);
    if !report.converged {
        return Err(Error::NoConvergence {
            iterations: report.iterations,
            residual: (BecDe::new(ch, ens).step(report.x_bp) - report.x_bp).abs(),
        });
    }
    if report.x_bp == 0.0 {
        return Err(Error::BelowBpThreshold);
    }
    Ok(report.x_bp)
}

fn nontrivial(eps: f64, ens: &Ensemble) -> bool {
    bp_fixed_point(BecChannel { epsilon: eps }, ens).x_bp > 0.0
}

/// Largest ε for which the uncoupled recursion decodes.
pub fn bp_threshold(ens: &Ensemble) -> f64 {
    if !nontrivial(1.0, ens) {
        return 1.0;
    }
    bisect(0.0, 1.0, THRESHOLD_TOL, |e| nontrivial(e, ens))
}

/// `W(x; ε) = (1 - R(1-x))/R'(1) - x ρ(1-x) - ε L(1 - ρ(1-x))/L'(1)`.
pub fn potential(x: f64, ch: BecChannel, ens: &Ensemble) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("x = {x} outside [0, 1]")));
    }
    Ok(potential_unchecked(x, ch.epsilon, ens))
}

fn potential_unchecked(x: f64, eps: f64, ens: &Ensemble) -> f64 {
    let r1 = ens.rho().value(1.0 - x);
    (1.0 - ens.node_chk(1.0 - x)) / ens.chk_degree()
        - x * r1
        - eps * ens.node_var(1.0 - r1) / ens.var_degree()
}

/// `W(x_BP; ε) - W(0; ε)`.
pub fn energy_gap(ch: BecChannel, ens: &Ensemble) -> Result<f64> {
    let xb = x_bp(ch, ens)?;
    Ok(potential_unchecked(xb, ch.epsilon, ens) - potential_unchecked(0.0, ch.epsilon, ens))
}

/// Channel where the energy gap vanishes.
pub fn map_threshold(ens: &Ensemble) -> Result<f64> {
    let bp = bp_threshold(ens);
    let gap_closed = |e: f64| match energy_gap(BecChannel { epsilon: e }, ens) {
        Ok(g) => g <= 0.0,
        Err(_) => e > bp,
    };
    if !gap_closed(1.0) {
        return Err(invalid(format!("energy gap does not close for {ens}")));
    }
    Ok(bisect(bp, 1.0, THRESHOLD_TOL, gap_closed))
}

/// BEC model together with its fixed point and gap.
#[derive(Debug, Clone, Copy)]
pub struct BecWave<'a> {
    pub de: BecDe<'a>,
    pub x_bp: f64,
    pub gap: f64,
}

impl<'a> BecWave<'a> {
    /// Requires `ε_BP < ε < ε_MAP`.
    pub fn new(ch: BecChannel, ens: &'a Ensemble) -> Result<Self> {
        let xb = x_bp(ch, ens)?;
        let gap = potential_unchecked(xb, ch.epsilon, ens);
        if gap <= 0.0 {
            return Err(Error::AboveMapThreshold { gap });
        }
        Ok(Self {
            de: BecDe::new(ch, ens),
            x_bp: xb,
            gap,
        })
    }
}

impl ScalarDe for BecWave<'_> {
    fn check_map(&self, x: f64) -> f64 {
        self.de.check_map(x)
    }

    fn variable_map(&self, y: f64) -> f64 {
        self.de.variable_map(y)
    }
}

impl ScalarWave for BecWave<'_> {
    fn plateau(&self) -> f64 {
        self.x_bp
    }

    fn gap(&self) -> f64 {
        self.gap
    }

    fn weight(&self, x: f64) -> f64 {
        self.de.ensemble.rho().derivative(1.0 - x)
    }
}

/// One synchronous update of the coupled chain.
pub fn coupled_de_step(
    s: &front::CoupledState,
    ch: BecChannel,
    ens: &Ensemble,
) -> front::CoupledState {
    front::coupled_step(&BecDe::new(ch, ens), s)
}

/// Runs the coupled chain of length `length` and width `width` from the
/// undecoded state until the kink has crossed most of the chain.
pub fn coupled_run(
    ch: BecChannel,
    ens: &Ensemble,
    width: usize,
    length: usize,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let xb = x_bp(ch, ens)?;
    run_front(&BecDe::new(ch, ens), width, length, 0.5 * xb, opts)
}

/// Empirical velocity of the kink at `x_BP/2`.
pub fn empirical_velocity(traj: &Trajectory, ch: BecChannel, ens: &Ensemble) -> Result<f64> {
    let xb = x_bp(ch, ens)?;
    front::empirical_velocity(traj, 0.5 * xb, &MeasureWindow::default())
}

/// Discrete comparison bound `v_B/α` on the snapshot with the kink nearest
/// the chain centre.
pub fn v_bound_from(traj: &Trajectory, ch: BecChannel, ens: &Ensemble) -> Result<f64> {
    let wave = BecWave::new(ch, ens)?;
    let snap = mid_snapshot(traj, 0.5 * wave.x_bp)?;
    discrete_velocity(&wave, traj.width, &snap.values)
}

/// `v_B/α` from a fresh coupled run.
pub fn v_bound(ch: BecChannel, ens: &Ensemble, width: usize, length: usize) -> Result<f64> {
    let traj = coupled_run(ch, ens, width, length, &RunOptions::default())?;
    v_bound_from(&traj, ch, ens)
}

/// Continuum wave shape and velocity.
pub fn solve_wave(ch: BecChannel, ens: &Ensemble, grid: &GridConfig) -> Result<WaveSolution> {
    front::solve_wave(&BecWave::new(ch, ens)?, grid)
}

/// `gap / ∫ ρ'(1 - x) x'² dz` on a given profile.
pub fn velocity_formula(profile: &Profile, ch: BecChannel, ens: &Ensemble) -> Result<f64> {
    front::velocity_formula(&BecWave::new(ch, ens)?, profile)
}

/// Result of the profile-free velocity approximations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Approximation {
    pub velocity: f64,
    /// Some argument of `λ⁻¹` fell outside `[0, 1]` and was clamped.
    pub clamped: bool,
}

/// Nodes of the graded grid `x = x_BP s²` used by [`v_approx`].
pub const APPROX_NODES: usize = 20_001;

/// Radicands below this are a breakdown rather than rounding noise.
const RADICAND_FLOOR: f64 = -1e-12;

/// First (`order = 1`) or second (`order = 2`) profile-free approximation of
/// the BEC velocity. Fails when a radicand turns negative on `(0, x_BP)`.
pub fn v_approx(ch: BecChannel, ens: &Ensemble, order: u8) -> Result<Approximation> {
    if order != 1 && order != 2 {
        return Err(invalid(format!(
            "approximation order {order} not in {{1, 2}}"
        )));
    }
    let wave = BecWave::new(ch, ens)?;
    let eps = ch.epsilon;
    let xs: Vec<f64> = (0..APPROX_NODES)
        .map(|i| {
            let s = i as f64 / (APPROX_NODES - 1) as f64;
            wave.x_bp * s * s
        })
        .collect();
    let mut clamped = false;
    let mut stage = |f: &dyn Fn(usize) -> f64| -> Result<(Vec<f64>, f64)> {
        // integrand of F on the nodes, then cumulative trapezoid in x
        let g: Vec<f64> = (0..xs.len())
            .map(|i| {
                let t = f(i) / eps;
                clamped |= !(0.0..=1.0).contains(&t);
                let t = t.clamp(0.0, 1.0);
                1.0 - ens.rho().inverse(1.0 - ens.lambda().inverse(t))
            })
            .collect();
        let mut roots = Vec::with_capacity(xs.len());
        let mut big_f = 0.0;
        let mut denom = 0.0;
        let mut prev = 0.0;
        for i in 0..xs.len() {
            if i > 0 {
                let dx = xs[i] - xs[i - 1];
                big_f += 0.5 * dx * (g[i] + g[i - 1]);
            }
            let x = xs[i];
            let rad = -12.0 * x * x + 24.0 * big_f;
            if rad < RADICAND_FLOOR * (1.0 + x) && i > 0 {
                return Err(Error::ApproximationBreakdown {
                    at: x,
                    radicand: rad,
                });
            }
            let root = sqrt(rad.max(0.0));
            let k = ens.rho().derivative(1.0 - x) * root;
            if i > 0 {
                denom += 0.5 * (xs[i] - xs[i - 1]) * (k + prev);
            }
            prev = k;
            roots.push(root);
        }
        Ok((roots, denom))
    };
    let (roots1, d1) = stage(&|i| xs[i])?;
    let v1 = wave.gap / d1;
    let velocity = if order == 1 {
        v1
    } else {
        let (_, d2) = stage(&|i| xs[i] - v1 * roots1[i])?;
        wave.gap / d2
    };
    Ok(Approximation { velocity, clamped })
}

/// Scaling estimate `x_BP · (width · v) / Δε` at `ε = ε_ref - Δε`.
///
/// `v` is the continuum velocity per coupling window; `width` converts it to
/// positions per iteration and defaults to `L'(1)`. `eps_ref` defaults to the
/// MAP threshold.
pub fn gamma_bar(
    ens: &Ensemble,
    delta_eps: f64,
    eps_ref: Option<f64>,
    width: Option<f64>,
    grid: &GridConfig,
) -> Result<f64> {
    if !(delta_eps > 0.0) {
        return Err(invalid("Δε must be positive"));
    }
    let eps_ref = match eps_ref {
        Some(e) => e,
        None => map_threshold(ens)?,
    };
    let ch = BecChannel::new(eps_ref - delta_eps)?;
    let wave = BecWave::new(ch, ens)?;
    let sol = front::solve_wave(&wave, grid)?;
    let width = width.unwrap_or_else(|| ens.var_degree());
    Ok(wave.x_bp * width * sol.velocity / delta_eps)
}

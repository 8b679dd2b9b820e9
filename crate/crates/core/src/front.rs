//! Front dynamics shared by every scalar pipeline: the spatially coupled
//! chain, kink tracking on trajectories, and the continuum wave-shape solver.
//!
//! A scalar model is described by two maps. One coupled update reads
//!
//! ```text
//! x_z <- (1/w) Σ_i  h_{z-i}( (1/w) Σ_j g(x_{z-i+j}) )
//! ```
//!
//! where `g` is [`ScalarDe::check_map`] and `h` is
//! [`ScalarDe::variable_map`]. Positions left of the chain are decoded
//! (value 0, perfect channel). Positions right of the chain repeat `x_L`,
//! which keeps the termination one-sided.

use alloc::vec;
use alloc::vec::Vec;

use libm::exp;

use crate::error::{invalid, Error, Result};
use crate::numeric::{gradient, level_crossing, sample, trapezoid, window_mean};

/// A scalar density-evolution recursion split into check and variable maps.
pub trait ScalarDe {
    /// Check-side map applied at each position before window averaging.
    fn check_map(&self, x: f64) -> f64;
    /// Variable-side map applied to a window average, including the channel.
    fn variable_map(&self, y: f64) -> f64;

    /// Uncoupled update.
    fn step(&self, x: f64) -> f64 {
        self.variable_map(self.check_map(x))
    }
}

/// A scalar model with a travelling wave between its two fixed points.
pub trait ScalarWave: ScalarDe {
    /// Nontrivial stable fixed point reached far right of the front.
    fn plateau(&self) -> f64;
    /// Energy gap between the two fixed points.
    fn gap(&self) -> f64;
    /// Weight `k(x)` of the velocity denominator `∫ k(x) x'² dz`.
    fn weight(&self, x: f64) -> f64;
}

/// State of the coupled chain over positions `z = -w+1 ..= L`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    width: usize,
    length: usize,
    values: Vec<f64>,
}

impl CoupledState {
    /// Fully undecoded chain (`x_z = 1` on `0..=L`) with the decoded boundary.
    pub fn undecoded(width: usize, length: usize) -> Result<Self> {
        Self::from_interior(width, vec![1.0; length + 1])
    }

    /// Builds a state from the values at `z = 0 ..= L`.
    pub fn from_interior(width: usize, interior: Vec<f64>) -> Result<Self> {
        if width == 0 {
            return Err(invalid("coupling width must be positive"));
        }
        if interior.is_empty() {
            return Err(invalid("chain must contain at least one position"));
        }
        if interior.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("chain values must lie in [0, 1]"));
        }
        let length = interior.len() - 1;
        let mut values = vec![0.0; width - 1];
        values.extend(interior);
        Ok(Self {
            width,
            length,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Values at `z = -w+1 ..= L`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values at `z = 0 ..= L`.
    pub fn interior(&self) -> &[f64] {
        &self.values[self.width - 1..]
    }

    /// Value at position `z`, with the boundary conventions outside the chain.
    pub fn at(&self, z: isize) -> f64 {
        if z < 0 {
            0.0
        } else if z as usize > self.length {
            self.values[self.values.len() - 1]
        } else {
            self.values[z as usize + self.width - 1]
        }
    }
}

/// One synchronous coupled update.
pub fn coupled_step(model: &impl ScalarDe, state: &CoupledState) -> CoupledState {
    let w = state.width;
    let len = state.length;
    let interior = state.interior();
    // check outputs at z = 0 ..= L + w - 1
    let checks: Vec<f64> = (0..len + w)
        .map(|z| model.check_map(interior[z.min(len)]))
        .collect();
    let inv_w = 1.0 / w as f64;
    // variable outputs at k = 0 ..= L; k < 0 has a perfect channel
    let vars: Vec<f64> = (0..=len)
        .map(|k| {
            let y: f64 = (0..w).map(|j| checks[k + j]).sum::<f64>() * inv_w;
            model.variable_map(y)
        })
        .collect();
    let mut next = state.values.clone();
    for z in 0..=len {
        let acc: f64 = (0..w).filter(|&i| i <= z).map(|i| vars[z - i]).sum();
        next[z + w - 1] = (acc * inv_w).clamp(0.0, 1.0);
    }
    CoupledState {
        width: w,
        length: len,
        values: next,
    }
}

/// A recorded chain configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    /// Values at `z = 0 ..= L`.
    pub values: Vec<f64>,
}

/// Time-indexed snapshots of a coupled chain (scalar values or entropy
/// traces of density-valued chains).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub width: usize,
    pub length: usize,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn new(width: usize, length: usize) -> Self {
        Self {
            width,
            length,
            snapshots: Vec::new(),
        }
    }

    pub fn push(&mut self, iteration: usize, values: Vec<f64>) {
        debug_assert!(self
            .snapshots
            .last()
            .is_none_or(|s| s.iteration < iteration));
        self.snapshots.push(Snapshot { iteration, values });
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Kink centre of each snapshot: interpolated position where the
    /// profile (with the decoded boundary at `z = -1`) first reaches `level`.
    pub fn centers(&self, level: f64) -> Vec<Option<f64>> {
        self.snapshots
            .iter()
            .map(|s| kink_center(&s.values, level))
            .collect()
    }
}

/// Kink centre of the interior values `x_0 ..= x_L`, in chain positions.
pub fn kink_center(interior: &[f64], level: f64) -> Option<f64> {
    let mut padded = Vec::with_capacity(interior.len() + 1);
    padded.push(0.0);
    padded.extend_from_slice(interior);
    level_crossing(&padded, level).map(|c| c - 1.0)
}

/// Options for [`run_front`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_iterations: usize,
    /// Record every this many iterations (iteration 0 is always recorded).
    pub record_every: usize,
    /// Stop once the kink centre passes this fraction of the chain.
    pub stop_fraction: f64,
    /// Stop when no entry moves by more than this in one iteration.
    pub stall_tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            record_every: 1,
            stop_fraction: 0.8,
            stall_tol: 1e-14,
        }
    }
}

/// Runs the coupled chain from the undecoded state, tracking the kink at
/// `level`.
pub fn run_front(
    model: &impl ScalarDe,
    width: usize,
    length: usize,
    level: f64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    if opts.record_every == 0 {
        return Err(invalid("record interval must be positive"));
    }
    let mut state = CoupledState::undecoded(width, length)?;
    let mut traj = Trajectory::new(width, length);
    traj.push(0, state.interior().to_vec());
    for it in 1..=opts.max_iterations {
        let next = coupled_step(model, &state);
        let moved = next
            .values
            .iter()
            .zip(&state.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        state = next;
        let center = kink_center(state.interior(), level);
        let done = moved < opts.stall_tol
            || center.is_none()
            || center.is_some_and(|c| c > opts.stop_fraction * length as f64);
        if it % opts.record_every == 0 || done {
            traj.push(it, state.interior().to_vec());
        }
        if done {
            break;
        }
    }
    Ok(traj)
}

/// Transient and measurement window for empirical velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureWindow {
    /// Advance of the kink, in multiples of `w`, discarded as transient.
    pub transient_widths: f64,
    /// Measure while the centre lies in `[lo·L, hi·L]`.
    pub lo: f64,
    pub hi: f64,
}

impl Default for MeasureWindow {
    fn default() -> Self {
        Self {
            transient_widths: 2.0,
            lo: 0.25,
            hi: 0.75,
        }
    }
}

/// Average of `Δz / (w ΔI)` over consecutive snapshots inside the
/// measurement window.
pub fn empirical_velocity(traj: &Trajectory, level: f64, window: &MeasureWindow) -> Result<f64> {
    let centers = traj.centers(level);
    let first = centers
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or(Error::NoFront)?;
    let moved = centers.iter().flatten().any(|c| (c - first).abs() > 1e-12);
    if !moved {
        return Ok(0.0);
    }
    let len = traj.length as f64;
    let w = traj.width as f64;
    let mut started = false;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut prev: Option<(usize, f64)> = None;
    for (snap, center) in traj.snapshots.iter().zip(&centers) {
        let Some(c) = *center else {
            prev = None;
            continue;
        };
        started |= c - first >= window.transient_widths * w;
        let inside = started && c >= window.lo * len && c <= window.hi * len;
        if inside {
            if let Some((it, pc)) = prev {
                sum += (c - pc) / (w * (snap.iteration - it) as f64);
                count += 1;
            }
            prev = Some((snap.iteration, c));
        } else {
            prev = None;
        }
    }
    if count == 0 {
        return Err(Error::WaveReachedBoundary);
    }
    Ok(sum / count as f64)
}

/// Snapshot whose kink centre is nearest to the middle of the chain.
pub fn mid_snapshot(traj: &Trajectory, level: f64) -> Result<&Snapshot> {
    let mid = 0.5 * traj.length as f64;
    traj.snapshots
        .iter()
        .zip(traj.centers(level))
        .filter_map(|(s, c)| c.map(|c| (s, (c - mid).abs())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(s, _)| s)
        .ok_or(Error::NoFront)
}

/// Discrete analogue of the velocity formula on a chain snapshot:
/// `gap / (w Σ_z k(x_z)(x_z - x_{z-1})²)`, with the decoded boundary
/// `x_{-1} = 0` included.
pub fn discrete_velocity(model: &impl ScalarWave, width: usize, interior: &[f64]) -> Result<f64> {
    let mut prev = 0.0;
    let mut sum = 0.0;
    for &x in interior {
        sum += model.weight(x) * (x - prev) * (x - prev);
        prev = x;
    }
    let denom = width as f64 * sum;
    if denom < 1e-14 {
        return Err(Error::DegenerateProfile(denom));
    }
    Ok(model.gap() / denom)
}

/// Grid and stopping rules of the continuum solver. Lengths are in units of
/// the coupling window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub dz: f64,
    pub tol_profile: f64,
    pub tol_velocity: f64,
    pub damping: f64,
    pub max_iterations: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            z_min: -8.0,
            z_max: 8.0,
            dz: 1.0 / 64.0,
            tol_profile: 1e-10,
            tol_velocity: 1e-9,
            damping: 0.5,
            max_iterations: 5000,
        }
    }
}

impl GridConfig {
    /// Grid points per window; `1/dz` must be an integer.
    pub fn per_window(&self) -> Result<usize> {
        if !(self.dz > 0.0 && self.dz <= 1.0) {
            return Err(invalid(alloc::format!(
                "dz = {} must lie in (0, 1]",
                self.dz
            )));
        }
        let n = libm::round(1.0 / self.dz);
        if (n * self.dz - 1.0).abs() > 1e-9 {
            return Err(invalid(alloc::format!(
                "1/dz = {} is not an integer",
                1.0 / self.dz
            )));
        }
        Ok(n as usize)
    }

    /// Number of grid points, validating that `0` lies on the grid.
    pub fn points(&self) -> Result<usize> {
        self.per_window()?;
        if !(self.z_min < 0.0 && self.z_max > 0.0) {
            return Err(invalid("z range must straddle 0"));
        }
        let lo = -self.z_min / self.dz;
        let hi = self.z_max / self.dz;
        if (lo - libm::round(lo)).abs() > 1e-6 || (hi - libm::round(hi)).abs() > 1e-6 {
            return Err(invalid("z range must be a multiple of dz"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(invalid("damping must lie in [0, 1)"));
        }
        Ok((libm::round(lo) + libm::round(hi)) as usize + 1)
    }

    pub fn profile(&self, values: Vec<f64>) -> Profile {
        Profile {
            z_min: self.z_min,
            dz: self.dz,
            values,
        }
    }
}

/// A scalar profile on a uniform z-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub z_min: f64,
    pub dz: f64,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn z(&self, i: usize) -> f64 {
        self.z_min + i as f64 * self.dz
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Position where the profile first reaches `level`.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        level_crossing(&self.values, level).map(|i| self.z_min + i * self.dz)
    }

    /// The profile `x(z + shift)`, clamped to the end values.
    pub fn shifted(&self, shift: f64) -> Profile {
        let values = (0..self.len())
            .map(|i| sample(&self.values, i as f64 + shift / self.dz))
            .collect();
        Profile { values, ..*self }
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    /// `∫ k(x) x'² dz` with central-difference derivatives.
    pub fn denominator(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let d = gradient(&self.values, self.dz);
        let f: Vec<f64> = self
            .values
            .iter()
            .zip(&d)
            .map(|(&x, &dx)| weight(x) * dx * dx)
            .collect();
        trapezoid(&f, self.dz)
    }
}

/// Converged wave shape with its velocity and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSolution {
    pub profile: Profile,
    pub velocity: f64,
    pub gap: f64,
    pub denominator: f64,
    /// Largest of the last profile update and velocity change.
    pub residual: f64,
    pub iterations: usize,
    /// Translation applied by the last pinning step.
    pub drift: f64,
}

/// Velocity formula `gap / ∫ k(x) x'² dz` on a given profile.
pub fn velocity_formula(model: &impl ScalarWave, profile: &Profile) -> Result<f64> {
    let denom = checked_denominator(profile.denominator(|x| model.weight(x)))?;
    Ok(model.gap() / denom)
}

/// Rejects negative (sign violation) and vanishing denominators.
pub fn checked_denominator(denom: f64) -> Result<f64> {
    if denom < 0.0 {
        Err(Error::DenominatorSign(denom))
    } else if !(denom >= 1e-14) {
        Err(Error::DegenerateProfile(denom))
    } else {
        Ok(denom)
    }
}

/// Coefficients of the exact solve of `x - v x' = r` over one cell when
/// `r` is linear on the cell: `x_i = a x_{i+1} + (1-a-b) r_i + b r_{i+1}`.
/// All three weights are nonnegative, so the sweep is monotone.
pub fn upwind_weights(v: f64, dz: f64) -> Option<(f64, f64)> {
    if v <= 0.0 {
        return None;
    }
    let a = exp(-dz / v);
    let b = (v - (v + dz) * a) / dz;
    Some((a, b))
}

/// Solves `x - v x' = rhs` sweeping from the right end, where `x` equals
/// `right`.
pub fn upwind_solve(rhs: &[f64], v: f64, dz: f64, right: f64) -> Vec<f64> {
    let Some((a, b)) = upwind_weights(v, dz) else {
        return rhs.to_vec();
    };
    let n = rhs.len();
    let mut x = vec![0.0; n];
    x[n - 1] = right;
    for i in (0..n - 1).rev() {
        x[i] = a * x[i + 1] + (1.0 - a - b) * rhs[i] + b * rhs[i + 1];
    }
    x
}

/// Right-hand side of the continuum shape equation,
/// `∫₀¹du h(∫₀¹ds g(x(z-u+s)))`, with windows by the trapezoid rule on the
/// grid. The profile is extended by 0 on the left and `plateau` on the right.
pub fn continuum_rhs(model: &impl ScalarDe, x: &[f64], n: usize, plateau: f64) -> Vec<f64> {
    let len = x.len();
    let g0 = model.check_map(0.0);
    let gp = model.check_map(plateau);
    let mut g = Vec::with_capacity(len + 2 * n);
    g.extend(core::iter::repeat_n(g0, n));
    g.extend(x.iter().map(|&v| model.check_map(v)));
    g.extend(core::iter::repeat_n(gp, n));
    let inner = window_mean(&g, n);
    let h: Vec<f64> = inner.iter().map(|&y| model.variable_map(y)).collect();
    let mut out = window_mean(&h, n);
    out.truncate(len);
    out
}

/// Joint solve of the wave shape and velocity by damped alternation.
pub fn solve_wave(model: &impl ScalarWave, grid: &GridConfig) -> Result<WaveSolution> {
    let n = grid.per_window()?;
    let points = grid.points()?;
    let plateau = model.plateau();
    let level = 0.5 * plateau;
    let mut profile = grid.profile(
        (0..points)
            .map(|i| plateau / (1.0 + exp(-4.0 * (grid.z_min + i as f64 * grid.dz))))
            .collect(),
    );
    let mut v = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=grid.max_iterations {
        let rhs = continuum_rhs(model, &profile.values, n, plateau);
        let solved = upwind_solve(&rhs, v, grid.dz, plateau);
        let mut next: Vec<f64> = solved
            .iter()
            .zip(&profile.values)
            .map(|(s, o)| (1.0 - grid.damping) * s + grid.damping * o)
            .collect();
        next[0] = 0.0;
        let next = grid.profile(next);
        let shift = next.crossing(level).ok_or(Error::NoFront)?;
        let next = next.shifted(shift);
        let denom = checked_denominator(next.denominator(|x| model.weight(x)))?;
        let vn = model.gap() / denom;
        let dx = next
            .values
            .iter()
            .zip(&profile.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dv = (vn - v).abs();
        residual = dx.max(dv);
        profile = next;
        v = vn;
        if dx < grid.tol_profile && dv < grid.tol_velocity {
            return Ok(WaveSolution {
                profile,
                velocity: v,
                gap: model.gap(),
                denominator: denom,
                residual,
                iterations: it,
                drift: shift,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: grid.max_iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linear toy model: g(x) = x, h(y) = c·y.
    struct Linear(f64);

    impl ScalarDe for Linear {
        fn check_map(&self, x: f64) -> f64 {
            x
        }
        fn variable_map(&self, y: f64) -> f64 {
            self.0 * y
        }
    }

    #[test]
    fn decoded_chain_is_fixed() {
        let s = CoupledState::from_interior(3, vec![0.0; 11]).unwrap();
        let t = coupled_step(&Linear(0.9), &s);
        assert!(t.interior().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_conventions() {
        let s = CoupledState::from_interior(3, vec![0.5; 5]).unwrap();
        assert_eq!(s.values().len(), 7);
        assert_eq!(s.at(-1), 0.0);
        assert_eq!(s.at(0), 0.5);
        assert_eq!(s.at(5), 0.5);
        let t = coupled_step(&Linear(1.0), &s);
        assert_eq!(&t.values()[..2], &[0.0, 0.0]);
    }

    #[test]
    fn width_one_decouples() {
        let s = CoupledState::from_interior(1, vec![0.3, 0.6, 0.9]).unwrap();
        let t = coupled_step(&Linear(0.5), &s);
        assert_eq!(t.interior(), &[0.15, 0.3, 0.45]);
    }

    #[test]
    fn window_sums_by_hand() {
        // w = 2, L = 2, values 0.2 0.4 0.6; right of chain repeats 0.6
        let s = CoupledState::from_interior(2, vec![0.2, 0.4, 0.6]).unwrap();
        let t = coupled_step(&Linear(1.0), &s);
        // y_k = (g_k + g_{k+1})/2 : y0 = .3, y1 = .5, y2 = .6
        // x_0 = (y0 + 0)/2, x_1 = (y1 + y0)/2, x_2 = (y2 + y1)/2
        let want = [0.15, 0.4, 0.55];
        for (a, b) in t.interior().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_trajectory_has_zero_velocity() {
        let mut traj = Trajectory::new(2, 20);
        let profile: Vec<f64> = (0..=20).map(|i| if i < 10 { 0.0 } else { 0.4 }).collect();
        for it in 0..5 {
            traj.push(it * 10, profile.clone());
        }
        assert_eq!(
            empirical_velocity(&traj, 0.2, &MeasureWindow::default()),
            Ok(0.0)
        );
    }

    #[test]
    fn shifted_step_is_measured() {
        let (w, len) = (2usize, 100usize);
        let mut traj = Trajectory::new(w, len);
        for it in 0..200 {
            let c = -0.5 + 0.5 * it as f64;
            let values = (0..=len)
                .map(|z| if (z as f64) < c { 0.0 } else { 1.0 })
                .map(|v: f64| v.min(1.0))
                .collect();
            traj.push(it, values);
        }
        let v = empirical_velocity(&traj, 0.5, &MeasureWindow::default()).unwrap();
        assert!((v - 0.25).abs() < 0.02, "{v}");
    }

    #[test]
    fn no_front_is_an_error() {
        let mut traj = Trajectory::new(2, 10);
        traj.push(0, vec![0.0; 11]);
        assert_eq!(
            empirical_velocity(&traj, 0.5, &MeasureWindow::default()),
            Err(Error::NoFront)
        );
    }

    #[test]
    fn upwind_solve_is_exact_for_exponentials() {
        // x - v x' = 0 has x = C e^{z/v}
        let v = 0.3;
        let dz = 0.01;
        let zs: Vec<f64> = (0..200).map(|i| i as f64 * dz).collect();
        let x = upwind_solve(&vec![0.0; 200], v, dz, exp(zs[199] / v));
        for (xi, z) in x.iter().zip(&zs) {
            assert!((xi - exp(z / v)).abs() < 1e-9 * exp(z / v));
        }
        // linear right-hand side is reproduced exactly
        let rhs: Vec<f64> = zs.iter().map(|z| 2.0 * z + 1.0).collect();
        let exact: Vec<f64> = zs.iter().map(|z| 2.0 * z + 1.0 + 2.0 * v).collect();
        let x = upwind_solve(&rhs, v, dz, exact[199]);
        for (a, b) in x.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
        let (a, b) = upwind_weights(v, dz).unwrap();
        assert!(a > 0.0 && b > 0.0 && 1.0 - a - b > 0.0);
        assert_eq!(upwind_weights(0.0, dz), None);
    }

    #[test]
    fn grid_validation() {
        assert_eq!(GridConfig::default().points().unwrap(), 1025);
        let bad = GridConfig {
            dz: 0.3,
            ..GridConfig::default()
        };
        assert!(bad.points().is_err());
        let bad = GridConfig {
            z_min: 1.0,
            ..GridConfig::default()
        };
        assert!(bad.points().is_err());
    }
}

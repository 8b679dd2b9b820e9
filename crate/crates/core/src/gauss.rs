//! Gaussian approximation for (ℓ, r)-regular ensembles on the BIAWGN
//! channel.
//!
//! Every message density is replaced by the symmetric Gaussian with the same
//! entropy, so a message is tracked by a single number: its entropy `p`, or
//! equivalently its mean `ψ⁻¹(p)`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use libm::{exp, floor, log, log1p, sqrt};

use crate::ensemble::Ensemble;
use crate::error::{invalid, Error, Result};
use crate::front::{self, GridConfig, RunOptions, ScalarDe, ScalarWave, Trajectory, WaveSolution};
use crate::numeric::bisect;

/// Means at or above this are treated as infinite: `ψ(m) = 0`.
pub const M_MAX: f64 = 1e4;
/// Entropies at or below this invert to [`M_MAX`].
pub const H_SATURATE: f64 = 1e-12;

/// Above this mean the leading tail asymptotics replace quadrature.
const M_TAIL: f64 = 160.0;
const M_SPLIT: f64 = 16.0;
const FINE: f64 = 256.0;
const COARSE: f64 = 32.0;

// ---------------------------------------------------------------------------
// exact evaluation

/// `f(z) = log2(1 + e^{-z})` and its first six derivatives.
fn kernel(z: f64) -> [f64; 7] {
    let (s, q) = if z >= 0.0 {
        let e = exp(-z);
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = exp(z);
        (e / (1.0 + e), 1.0 / (1.0 + e))
    };
    let f0 = if z >= 0.0 {
        log1p(exp(-z))
    } else {
        -z + log1p(exp(z))
    };
    let sq = s * q;
    let u = 1.0 - 2.0 * s;
    // f^(k) = s q P_k(s) for k >= 2 with P_{k+1} = (1-2s) P_k + s q P_k'
    let p2 = 1.0;
    let p3 = u;
    let p4 = 1.0 - 6.0 * sq;
    let p5 = u * (1.0 - 12.0 * sq);
    let p6 = 1.0 - 30.0 * sq + 120.0 * sq * sq;
    [f0, -q, sq * p2, sq * p3, sq * p4, sq * p5, sq * p6].map(|v| v / LN_2)
}

/// `ψ(m)` and its first three derivatives by trapezoid quadrature in the
/// standardised variable. The integrand is entire in `t` up to poles at
/// distance `π/σ`, so the rule converges geometrically.
fn moments(m: f64) -> [f64; 4] {
    let sigma = sqrt(2.0 * m);
    let h = if sigma > 1.0 { 0.5 / sigma } else { 0.5 };
    let lo = (-9.0f64).min(-sqrt(0.5 * m) - 6.0);
    let hi = 9.0;
    let k0 = floor(lo / h) as i64;
    let k1 = -floor(-hi / h) as i64;
    let mut acc = [0.0f64; 7];
    for k in k0..=k1 {
        let t = k as f64 * h;
        let g = exp(-0.5 * t * t);
        let d = kernel(m + sigma * t);
        for (a, v) in acc.iter_mut().zip(d) {
            *a += g * v;
        }
    }
    let norm = h / sqrt(2.0 * PI);
    let e = acc.map(|v| v * norm);
    // d/dm E f(Z) = E (f' + f''), Z ~ N(m, 2m)
    [
        e[0],
        e[1] + e[2],
        e[2] + 2.0 * e[3] + e[4],
        e[3] + 3.0 * e[4] + 3.0 * e[5] + e[6],
    ]
}

/// Leading tail behaviour `ψ ~ √(π/m) e^{-m/4} / ln 2`.
fn tail(m: f64) -> [f64; 4] {
    let v = sqrt(PI / m) * exp(-0.25 * m) / LN_2;
    let c1 = -0.25 - 0.5 / m;
    let c2 = c1 * c1 + 0.5 / (m * m);
    let c3 = c1 * c1 * c1 + 1.5 * c1 / (m * m) - 1.0 / (m * m * m);
    [v, v * c1, v * c2, v * c3]
}

/// `ln ψ(m)` from the tail asymptotics.
fn ln_tail(m: f64) -> f64 {
    0.5 * log(PI / m) - 0.25 * m - log(LN_2)
}

fn exact(m: f64) -> [f64; 4] {
    if m >= M_MAX {
        [0.0; 4]
    } else if m > M_TAIL {
        tail(m)
    } else {
        moments(m)
    }
}

fn check_mean(m: f64) -> Result<()> {
    if m >= 0.0 && !m.is_nan() {
        Ok(())
    } else {
        Err(invalid(format!("mean {m} must be nonnegative")))
    }
}

/// Entropy of the symmetric Gaussian LLR density with mean `m`.
pub fn psi(m: f64) -> Result<f64> {
    check_mean(m)?;
    Ok(exact(m)[0])
}

/// `d^k ψ / dm^k` for `k ≤ 3`, by differentiation under the integral.
pub fn psi_derivative(m: f64, k: usize) -> Result<f64> {
    check_mean(m)?;
    if k > 3 {
        return Err(invalid("derivative order above 3"));
    }
    Ok(exact(m)[k])
}

/// Mean `m` with `ψ(m) = h`, by Newton with bisection safeguard.
pub fn psi_inv(h: f64) -> Result<f64> {
    check_entropy(h)?;
    Ok(invert(h, 0.0, M_TAIL, |m| {
        let e = exact(m);
        (e[0], e[1])
    }))
}

fn check_entropy(h: f64) -> Result<()> {
    if h > 0.0 && h <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("entropy {h} outside (0, 1]")))
    }
}

/// Safeguarded Newton on a decreasing function bracketed by `[lo, hi]`.
fn invert(h: f64, mut lo: f64, mut hi: f64, f: impl Fn(f64) -> (f64, f64)) -> f64 {
    if h >= 1.0 {
        return 0.0;
    }
    if h <= H_SATURATE {
        return M_MAX;
    }
    let mut m = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (v, d) = f(m);
        if v > h {
            lo = m;
        } else {
            hi = m;
        }
        let mut next = m - (v - h) / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - m).abs() <= 1e-14 * (1.0 + m) || hi - lo <= 1e-14 * (1.0 + m) {
            return next;
        }
        m = next;
    }
    m
}

// ---------------------------------------------------------------------------
// cached evaluation

/// Cubic Hermite tables of `ψ`, `ψ'` and `ψ''`, built once and read-only
/// afterwards.
#[derive(Debug, Clone)]
pub struct Psi {
    // node k holds ψ..ψ''' at its mean
    fine: Vec<[f64; 4]>,
    coarse: Vec<[f64; 4]>,
}

impl Default for Psi {
    fn default() -> Self {
        Self::new()
    }
}

impl Psi {
    pub fn new() -> Self {
        let fine = (0..=(M_SPLIT * FINE) as usize)
            .map(|k| moments(k as f64 / FINE))
            .collect();
        let coarse = (0..=((M_TAIL - M_SPLIT) * COARSE) as usize)
            .map(|k| moments(M_SPLIT + k as f64 / COARSE))
            .collect();
        Self { fine, coarse }
    }

    /// `ψ^(k)(m)` for `k ≤ 2`; `m` must be nonnegative.
    fn eval(&self, m: f64, k: usize) -> f64 {
        if m >= M_MAX {
            return 0.0;
        }
        if m > M_TAIL {
            return tail(m)[k];
        }
        let (nodes, origin, step) = if m < M_SPLIT {
            (&self.fine, 0.0, 1.0 / FINE)
        } else {
            (&self.coarse, M_SPLIT, 1.0 / COARSE)
        };
        let x = (m - origin) / step;
        let i = (floor(x) as usize).min(nodes.len() - 2);
        let t = x - i as f64;
        let (a, b) = (&nodes[i], &nodes[i + 1]);
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        h00 * a[k] + h10 * step * a[k + 1] + h01 * b[k] + h11 * step * b[k + 1]
    }

    pub fn value(&self, m: f64) -> f64 {
        self.eval(m.max(0.0), 0)
    }

    pub fn d1(&self, m: f64) -> f64 {
        self.eval(m.max(0.0), 1)
    }

    pub fn d2(&self, m: f64) -> f64 {
        self.eval(m.max(0.0), 2)
    }

    /// `ψ⁻¹(h)`, saturating to [`M_MAX`] at `h ≤` [`H_SATURATE`] and to 0 at
    /// `h ≥ 1`.
    pub fn inverse(&self, h: f64) -> f64 {
        if h >= 1.0 {
            return 0.0;
        }
        if h <= H_SATURATE {
            return M_MAX;
        }
        // bracket on the table nodes, which are decreasing in both segments
        let (lo, hi) = if h > self.coarse[0][0] {
            let i = self.fine.partition_point(|n| n[0] > h);
            ((i - 1) as f64 / FINE, i as f64 / FINE)
        } else {
            let i = self.coarse.partition_point(|n| n[0] > h);
            if i == self.coarse.len() {
                (M_TAIL, M_MAX)
            } else {
                (
                    M_SPLIT + (i.max(1) - 1) as f64 / COARSE,
                    M_SPLIT + i as f64 / COARSE,
                )
            }
        };
        invert(h, lo, hi, |m| (self.value(m), self.d1(m)))
    }

    /// Checked [`Psi::inverse`].
    pub fn checked_inverse(&self, h: f64) -> Result<f64> {
        check_entropy(h)?;
        Ok(self.inverse(h))
    }

    /// `ln |ψ^(k)(m)|` for `k ≤ 2`, finite far into the tail.
    fn ln_abs(&self, m: f64, k: usize) -> f64 {
        if m > M_TAIL {
            let c1 = -0.25 - 0.5 / m;
            let ck = match k {
                0 => 1.0,
                1 => -c1,
                _ => c1 * c1 + 0.5 / (m * m),
            };
            ln_tail(m) + log(ck)
        } else {
            log(self.eval(m, k).abs())
        }
    }
}

// ---------------------------------------------------------------------------
// model

/// BIAWGN channel described by its LLR mean `2/σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussChannel {
    mean: f64,
    entropy: f64,
}

impl GaussChannel {
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(invalid(format!("channel mean {mean} must be positive")));
        }
        Ok(Self {
            mean,
            entropy: psi(mean)?,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn entropy(&self) -> f64 {
        self.entropy
    }
}

/// Which argument multiplies `ψ⁻¹(1-p)` inside `ψ''` in the velocity
/// denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenominatorVariant {
    /// `ψ''((r-2) ψ⁻¹(1-p))`.
    #[default]
    RMinusTwo,
    /// `ψ''((r-1) ψ⁻¹(1-p))`.
    RMinusOne,
}

impl DenominatorVariant {
    fn offset(self) -> f64 {
        match self {
            DenominatorVariant::RMinusTwo => 2.0,
            DenominatorVariant::RMinusOne => 1.0,
        }
    }
}

/// The GA recursion in the entropy domain for a regular ensemble.
#[derive(Debug, Clone, Copy)]
pub struct GaModel<'a> {
    pub psi: &'a Psi,
    pub mean: f64,
    pub ell: usize,
    pub r: usize,
}

impl<'a> GaModel<'a> {
    /// Rejects irregular ensembles.
    pub fn new(psi: &'a Psi, ch: GaussChannel, ens: &Ensemble) -> Result<Self> {
        let (ell, r) = ens.regular_degrees().ok_or_else(|| {
            Error::Unsupported(format!(
                "Gaussian approximation needs a regular ensemble, got {ens}"
            ))
        })?;
        Ok(Self::regular(psi, ch.mean, ell, r))
    }

    pub fn regular(psi: &'a Psi, mean: f64, ell: usize, r: usize) -> Self {
        Self { psi, mean, ell, r }
    }

    /// Uncoupled potential
    /// `(1-1/r)ψ(r a) - ψ((r-1)a) + 1/r - ψ(m_c + ℓ ψ⁻¹(1 - ψ((r-1)a)))/ℓ`
    /// with `a = ψ⁻¹(1-p)`.
    pub fn potential(&self, p: f64) -> f64 {
        let ps = self.psi;
        let (l, r) = (self.ell as f64, self.r as f64);
        let a = ps.inverse(1.0 - p);
        let inner = ps.value((r - 1.0) * a);
        (1.0 - 1.0 / r) * ps.value(r * a) - inner + 1.0 / r
            - ps.value(self.mean + l * ps.inverse(1.0 - inner)) / l
    }

    /// Fixed point reached from `p = 1`; 0 when the recursion decodes.
    pub fn fixed_point(&self) -> Result<f64> {
        let mut p = 1.0;
        for _ in 0..super::bec::FIXED_POINT_CAP {
            let next = self.step(p);
            let done = (next - p).abs() < 1e-13;
            p = next;
            if done {
                return Ok(if p < super::bec::TRIVIAL_LEVEL {
                    0.0
                } else {
                    p
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: super::bec::FIXED_POINT_CAP,
            residual: (self.step(p) - p).abs(),
        })
    }
}

impl ScalarDe for GaModel<'_> {
    fn check_map(&self, p: f64) -> f64 {
        let a = self.psi.inverse(1.0 - p);
        1.0 - self.psi.value((self.r - 1) as f64 * a)
    }

    fn variable_map(&self, y: f64) -> f64 {
        self.psi
            .value(self.mean + (self.ell - 1) as f64 * self.psi.inverse(y))
    }
}

/// GA model with its fixed point, gap and denominator variant.
#[derive(Debug, Clone, Copy)]
pub struct GaWave<'a> {
    pub model: GaModel<'a>,
    pub p_bp: f64,
    pub gap: f64,
    pub variant: DenominatorVariant,
}

impl<'a> GaWave<'a> {
    pub fn new(model: GaModel<'a>, variant: DenominatorVariant) -> Result<Self> {
        let p_bp = model.fixed_point()?;
        if p_bp == 0.0 {
            return Err(Error::BelowBpThreshold);
        }
        let gap = model.potential(p_bp) - model.potential(0.0);
        if gap <= 0.0 {
            return Err(Error::AboveMapThreshold { gap });
        }
        Ok(Self {
            model,
            p_bp,
            gap,
            variant,
        })
    }
}

impl ScalarDe for GaWave<'_> {
    fn check_map(&self, p: f64) -> f64 {
        self.model.check_map(p)
    }

    fn variable_map(&self, y: f64) -> f64 {
        self.model.variable_map(y)
    }
}

impl ScalarWave for GaWave<'_> {
    fn plateau(&self) -> f64 {
        self.p_bp
    }

    fn gap(&self) -> f64 {
        self.gap
    }

    /// `(r-1) ψ''(k a) / ψ'(a)²` with `a = ψ⁻¹(1-p)`; positive because
    /// `ψ'' > 0`.
    fn weight(&self, p: f64) -> f64 {
        let ps = self.model.psi;
        let r = self.model.r as f64;
        let a = ps.inverse(1.0 - p);
        let b = (r - self.variant.offset()) * a;
        let w = if a > M_TAIL || b > M_TAIL {
            exp(ps.ln_abs(b, 2) - 2.0 * ps.ln_abs(a, 1))
        } else {
            let d = ps.d1(a);
            ps.d2(b) / (d * d)
        };
        let w = (r - 1.0) * w;
        if w.is_finite() {
            w
        } else {
            f64::MAX
        }
    }
}

/// `W_GA(p; c)`.
pub fn potential_ga(psi: &Psi, p: f64, ch: GaussChannel, ell: usize, r: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("entropy {p} outside [0, 1]")));
    }
    Ok(GaModel::regular(psi, ch.mean, ell, r).potential(p))
}

/// One synchronous update of the coupled GA chain.
pub fn de_step_ga(
    psi: &Psi,
    state: &front::CoupledState,
    ch: GaussChannel,
    ell: usize,
    r: usize,
) -> front::CoupledState {
    front::coupled_step(&GaModel::regular(psi, ch.mean, ell, r), state)
}

/// Largest mean at which the GA recursion has a nontrivial fixed point.
pub fn ga_bp_threshold(psi: &Psi, ell: usize, r: usize) -> f64 {
    let trivial = |m: f64| {
        GaModel::regular(psi, m, ell, r)
            .fixed_point()
            .map(|p| p == 0.0)
            .unwrap_or(false)
    };
    bisect(1e-3, 50.0, 1e-9, trivial)
}

/// Mean at which the GA energy gap vanishes.
pub fn ga_map_threshold(psi: &Psi, ell: usize, r: usize) -> f64 {
    let open = |m: f64| {
        let model = GaModel::regular(psi, m, ell, r);
        match model.fixed_point() {
            Ok(0.0) | Err(_) => true,
            Ok(p) => model.potential(p) - model.potential(0.0) > 0.0,
        }
    };
    bisect(1e-3, ga_bp_threshold(psi, ell, r), 1e-9, open)
}

/// Continuum GA wave shape and velocity.
pub fn solve_wave_ga(
    psi: &Psi,
    ch: GaussChannel,
    ens: &Ensemble,
    grid: &GridConfig,
    variant: DenominatorVariant,
) -> Result<WaveSolution> {
    let wave = GaWave::new(GaModel::new(psi, ch, ens)?, variant)?;
    front::solve_wave(&wave, grid)
}

/// Coupled GA chain from the undecoded state, kink tracked at `p_BP/2`.
pub fn coupled_run_ga(
    psi: &Psi,
    ch: GaussChannel,
    ens: &Ensemble,
    width: usize,
    length: usize,
    opts: &RunOptions,
) -> Result<(f64, Trajectory)> {
    let model = GaModel::new(psi, ch, ens)?;
    let p_bp = model.fixed_point()?;
    if p_bp == 0.0 {
        return Err(Error::BelowBpThreshold);
    }
    let traj = front::run_front(&model, width, length, 0.5 * p_bp, opts)?;
    Ok((p_bp, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::CoupledState;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn table() -> &'static Psi {
        static T: OnceLock<Psi> = OnceLock::new();
        T.get_or_init(Psi::new)
    }

    /// Brute-force oracle: fine trapezoid directly in z.
    fn brute(m: f64) -> f64 {
        let s = sqrt(2.0 * m);
        let n = 400_000;
        let (a, b) = (m - 40.0 * s - 5.0, m + 40.0 * s);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let z = a + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let g = exp(-(z - m) * (z - m) / (4.0 * m)) / sqrt(4.0 * PI * m);
            acc += w * g * kernel(z)[0];
        }
        acc * h
    }

    #[test]
    fn psi_matches_brute_force() {
        for m in [0.01, 0.5, 2.33, 10.0, 40.0] {
            let got = psi(m).unwrap();
            assert!((got - brute(m)).abs() < 1e-10, "{m}: {got} vs {}", brute(m));
        }
        assert_eq!(psi(0.0).unwrap(), 1.0);
        assert_eq!(psi(2e4).unwrap(), 0.0);
        assert!(psi(-1.0).is_err());
    }

    #[test]
    fn derivatives_match_differences() {
        for m in [0.3, 2.33, 9.0, 30.0] {
            let h = 1e-4;
            for k in 0..3 {
                let fd = (psi_derivative(m + h, k).unwrap() - psi_derivative(m - h, k).unwrap())
                    / (2.0 * h);
                let an = psi_derivative(m, k + 1).unwrap();
                assert!(
                    (fd - an).abs() < 1e-7 * (1.0 + an.abs()),
                    "{m} {k}: {fd} {an}"
                );
            }
        }
        assert!(psi_derivative(2.0, 2).unwrap() > 0.0);
        assert!(psi_derivative(2.0, 1).unwrap() < 0.0);
    }

    #[test]
    fn tail_asymptotics_agree_with_quadrature() {
        let q = moments(M_TAIL);
        let t = tail(M_TAIL);
        for k in 0..3 {
            assert!(
                ((q[k] - t[k]) / q[k]).abs() < 0.05,
                "{k}: {} {}",
                q[k],
                t[k]
            );
        }
    }

    #[test]
    fn table_matches_exact() {
        let ps = table();
        for i in 0..400 {
            let m = 0.003 + i as f64 * 0.41;
            let e = exact(m);
            assert!((ps.value(m) - e[0]).abs() < 1e-11, "{m}");
            assert!((ps.d1(m) - e[1]).abs() < 1e-9, "{m}");
            assert!((ps.d2(m) - e[2]).abs() < 1e-8, "{m}");
        }
    }

    #[test]
    fn inversion() {
        let ps = table();
        assert_eq!(psi_inv(1.0).unwrap(), 0.0);
        assert!(psi_inv(0.0).is_err());
        assert!(psi_inv(1.1).is_err());
        let back = psi_inv(psi(3.7).unwrap()).unwrap();
        assert!((back - 3.7).abs() < 1e-8);
        let h = GaussChannel::new(2.38).unwrap().entropy();
        assert!((psi_inv(h).unwrap() - 2.38).abs() < 1e-8);
        assert!((ps.inverse(h) - 2.38).abs() < 1e-8);
        let h = psi(2.33).unwrap();
        assert!((ps.inverse(h) - 2.33).abs() < 1e-9);
        assert_eq!(ps.inverse(1e-13), M_MAX);
    }

    #[test]
    fn potential_is_zero_at_zero() {
        let ps = table();
        for (l, r) in [(3, 6), (4, 8), (3, 4)] {
            for m in [1.0, 2.33, 2.4, 5.0] {
                let ch = GaussChannel::new(m).unwrap();
                assert!(potential_ga(ps, 0.0, ch, l, r).unwrap().abs() < 1e-9);
                assert!(potential_ga(ps, 1.0, ch, l, r).unwrap().is_finite());
            }
        }
    }

    #[test]
    fn fixed_points_and_gaps() {
        let ps = table();
        let model = GaModel::regular(ps, 2.33, 3, 6);
        let p = model.fixed_point().unwrap();
        assert!((p - 0.36733).abs() < 1e-4, "{p}");
        let wave = GaWave::new(model, DenominatorVariant::RMinusTwo).unwrap();
        assert!((wave.gap - 0.003550).abs() < 1e-5, "{}", wave.gap);
        let model = GaModel::regular(ps, 2.40, 4, 8);
        let wave = GaWave::new(model, DenominatorVariant::RMinusTwo).unwrap();
        assert!((wave.p_bp - 0.41043).abs() < 1e-4);
        assert!((wave.gap - 0.009385).abs() < 1e-5);
    }

    #[test]
    fn gap_changes_sign_once() {
        let ps = table();
        let map = ga_map_threshold(ps, 3, 6);
        let bp = ga_bp_threshold(ps, 3, 6);
        assert!(map < 2.33 && bp > 2.40, "{map} {bp}");
        let mut signs = Vec::new();
        for i in 0..40 {
            let m = 1.5 + i as f64 * 0.05;
            let model = GaModel::regular(ps, m, 3, 6);
            if let Ok(p) = model.fixed_point() {
                if p > 0.0 {
                    signs.push(model.potential(p) > 0.0);
                }
            }
        }
        let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
    }

    #[test]
    fn continuum_velocity_3_6() {
        let ps = table();
        let ens = Ensemble::regular(3, 6).unwrap();
        let ch = GaussChannel::new(2.33).unwrap();
        let sol = solve_wave_ga(ps, ch, &ens, &GridConfig::default(), Default::default()).unwrap();
        assert!((sol.velocity - 0.0183).abs() < 1.5e-3, "{}", sol.velocity);
        assert!(sol.profile.is_nondecreasing(1e-12));
    }

    #[test]
    fn irregular_is_rejected() {
        let ps = table();
        let ens: Ensemble = "lambda:0.5x1+0.5x2;rho:x5".parse().unwrap();
        let ch = GaussChannel::new(2.33).unwrap();
        assert!(matches!(
            GaModel::new(ps, ch, &ens),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn decoded_state_is_fixed() {
        let ps = table();
        let ch = GaussChannel::new(2.33).unwrap();
        let s = CoupledState::from_interior(3, alloc::vec![0.0; 31]).unwrap();
        let t = de_step_ga(ps, &s, ch, 3, 6);
        assert!(t.values().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn psi_strictly_decreasing(a in 0.0f64..60.0, d in 1e-3f64..5.0) {
            let ps = table();
            prop_assert!(ps.value(a) > ps.value(a + d));
        }

        #[test]
        fn round_trip(h in 1e-10f64..=1.0) {
            let ps = table();
            let back = ps.value(ps.inverse(h));
            prop_assert!((back - h).abs() < 1e-8 * h.max(1e-2));
        }

        #[test]
        fn de_step_is_order_preserving(
            a in prop::collection::vec(0.0f64..=1.0, 21),
            d in prop::collection::vec(0.0f64..=1.0, 21),
            m in 1.5f64..3.0,
        ) {
            let ps = table();
            let ch = GaussChannel::new(m).unwrap();
            let hi: Vec<f64> = a.iter().zip(&d).map(|(x, y)| (x + y).min(1.0)).collect();
            let s = de_step_ga(ps, &CoupledState::from_interior(3, a).unwrap(), ch, 3, 6);
            let t = de_step_ga(ps, &CoupledState::from_interior(3, hi).unwrap(), ch, 3, 6);
            for (x, y) in s.values().iter().zip(t.values()) {
                prop_assert!(*x <= y + 1e-12);
                prop_assert!((0.0..=1.0).contains(x));
            }
        }
    }
}

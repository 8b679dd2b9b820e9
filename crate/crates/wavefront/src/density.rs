//! Quantized LLR densities and their convolution algebra.
//!
//! A density lives on the uniform grid `α_k = (k - n)·δ`, `k = 0..=2n`,
//! plus a point mass at `α = +∞`. Mass below `-A` is folded into the `-A`
//! bucket (it is `e^{-A}`-suppressed for symmetric densities); mass above
//! `+A` joins the `+∞` bucket.
//!
//! Variable-node convolution (⊛) adds LLRs and is an index-additive
//! convolution on the grid. Check-node convolution (⊠) runs in the
//! magnitude domain `y = -ln tanh(|α|/2)`, where it is additive in `y` and
//! multiplicative in the sign; see [`GDensity`].

use std::f64::consts::{LN_2, SQRT_2};

use libm::{erfc, exp, log1p};
use wavefront_core::{DegreePolynomial, Error, Result};

use crate::fft::{nonzeros, Convolver};

/// Uniform LLR grid `[-A, A]` with spacing `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrGrid {
    half: usize,
    delta: f64,
}

impl Default for LlrGrid {
    fn default() -> Self {
        Self {
            half: 2048,
            delta: 30.0 / 2048.0,
        }
    }
}

impl LlrGrid {
    /// `A / delta` must be (close to) an integer.
    pub fn new(a: f64, delta: f64) -> Result<Self> {
        if !(a > 0.0 && delta > 0.0 && delta < a) {
            return Err(Error::InvalidArgument(format!(
                "LLR grid needs 0 < delta < A, got A = {a}, delta = {delta}"
            )));
        }
        let half = (a / delta).round();
        if (half * delta - a).abs() > 1e-9 * a {
            return Err(Error::InvalidArgument(format!(
                "A = {a} is not a multiple of delta = {delta}"
            )));
        }
        Ok(Self {
            half: half as usize,
            delta,
        })
    }

    /// Same range, half the spacing.
    pub fn refined(&self) -> Self {
        Self {
            half: 2 * self.half,
            delta: 0.5 * self.delta,
        }
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn a_max(&self) -> f64 {
        self.half as f64 * self.delta
    }

    pub fn points(&self) -> usize {
        2 * self.half + 1
    }

    pub fn alpha(&self, k: usize) -> f64 {
        (k as f64 - self.half as f64) * self.delta
    }
}

/// A (possibly signed) measure on the LLR grid plus its `+∞` mass.
///
/// Probability densities and signed measures (profile derivatives) share
/// the representation; see [`QuantizedDensity`] and [`SignedDensity`].
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: LlrGrid,
    weights: Vec<f64>,
    inf: f64,
}

/// A symmetric probability density.
pub type QuantizedDensity = Density;
/// A signed measure on the same grid.
pub type SignedDensity = Density;

impl Density {
    pub fn from_parts(grid: LlrGrid, weights: Vec<f64>, inf: f64) -> Result<Self> {
        if weights.len() != grid.points() {
            return Err(Error::GridMismatch);
        }
        if weights.iter().any(|w| !w.is_finite()) || !inf.is_finite() {
            return Err(Error::InvalidArgument("non-finite density weight".into()));
        }
        Ok(Self { grid, weights, inf })
    }

    /// The zero measure.
    pub fn zero(grid: LlrGrid) -> Self {
        Self {
            grid,
            weights: vec![0.0; grid.points()],
            inf: 0.0,
        }
    }

    /// `Δ₀`: unit mass at `α = 0`.
    pub fn delta_zero(grid: LlrGrid) -> Self {
        let mut d = Self::zero(grid);
        d.weights[grid.half] = 1.0;
        d
    }

    /// `Δ∞`: unit mass at `α = +∞`.
    pub fn delta_inf(grid: LlrGrid) -> Self {
        let mut d = Self::zero(grid);
        d.inf = 1.0;
        d
    }

    /// Erasure channel `ε Δ₀ + (1-ε) Δ∞`.
    pub fn bec(grid: LlrGrid, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!(
                "erasure probability {eps} outside [0, 1]"
            )));
        }
        let mut d = Self::zero(grid);
        d.weights[grid.half] = eps;
        d.inf = 1.0 - eps;
        Ok(d)
    }

    /// BIAWGN channel with LLR mean `mean` (variance `2·mean`), integrated
    /// over grid cells and projected onto the symmetric cone.
    pub fn biawgn(grid: LlrGrid, mean: f64) -> Result<Self> {
        if !(mean > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "channel mean {mean} must be positive"
            )));
        }
        if mean >= wavefront_core::gauss::M_MAX {
            return Ok(Self::delta_inf(grid));
        }
        let scale = 1.0 / ((2.0 * mean).sqrt() * SQRT_2);
        // mass of N(mean, 2 mean) on [a, b], from the nearer tail
        let cell = |a: f64, b: f64| {
            if a >= mean {
                0.5 * (erfc((a - mean) * scale) - erfc((b - mean) * scale))
            } else if b <= mean {
                0.5 * (erfc((mean - b) * scale) - erfc((mean - a) * scale))
            } else {
                1.0 - 0.5 * (erfc((mean - a) * scale) + erfc((b - mean) * scale))
            }
        };
        let h = 0.5 * grid.delta;
        let last = grid.points() - 1;
        let weights: Vec<f64> = (0..=last)
            .map(|k| {
                let a = if k == 0 {
                    f64::NEG_INFINITY
                } else {
                    grid.alpha(k) - h
                };
                let b = grid.alpha(k) + h;
                if k == 0 {
                    0.5 * erfc((mean - b) * scale)
                } else {
                    cell(a, b)
                }
            })
            .collect();
        let inf = 0.5 * erfc((grid.alpha(last) + h - mean) * scale);
        Ok(Self { grid, weights, inf }.symmetrized())
    }

    pub fn grid(&self) -> LlrGrid {
        self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass_inf(&self) -> f64 {
        self.inf
    }

    /// Mass on the finite grid.
    pub fn finite_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.finite_mass() + self.inf
    }

    pub fn is_delta_inf(&self) -> bool {
        self.inf == 1.0 && self.weights.iter().all(|&w| w == 0.0)
    }

    fn check(&self, other: &Density) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Density, b: f64) -> Result<Density> {
        self.check(other)?;
        Ok(Density {
            grid: self.grid,
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            inf: a * self.inf + b * other.inf,
        })
    }

    pub fn scaled(&self, c: f64) -> Density {
        Density {
            grid: self.grid,
            weights: self.weights.iter().map(|w| c * w).collect(),
            inf: c * self.inf,
        }
    }

    /// `Σ c_i d_i` over densities on a common grid.
    pub fn mix<'a>(terms: impl IntoIterator<Item = (f64, &'a Density)>) -> Result<Density> {
        let mut it = terms.into_iter();
        let (c0, d0) = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let mut out = d0.scaled(c0);
        for (c, d) in it {
            out.check(d)?;
            for (o, w) in out.weights.iter_mut().zip(&d.weights) {
                *o += c * w;
            }
            out.inf += c * d.inf;
        }
        Ok(out)
    }

    /// Largest absolute weight difference, including the `+∞` bucket.
    pub fn max_diff(&self, other: &Density) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold((self.inf - other.inf).abs(), f64::max)
    }

    /// Largest relative violation of `x(α) = e^α x(-α)` over weights above
    /// `1e-12`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.half;
        let mut worst: f64 = 0.0;
        for i in 1..=n {
            let pos = self.weights[n + i];
            let neg = self.weights[n - i];
            if pos.max(neg) <= 1e-12 {
                continue;
            }
            let expect = exp(self.grid.alpha(n + i)) * neg;
            worst = worst.max((pos - expect).abs() / pos.max(expect));
        }
        worst
    }

    /// Projection onto the symmetric cone: each pair `(α, -α)` keeps its
    /// sum `s` and is replaced by `(s e^α, s)/(1 + e^α)`. Negative roundoff
    /// is dropped.
    pub fn symmetrized(mut self) -> Density {
        self.fold_pairs(true);
        self.weights[self.grid.half] = self.weights[self.grid.half].max(0.0);
        self.inf = self.inf.max(0.0);
        self
    }

    /// The pair redistribution of [`Density::symmetrized`], linear unless
    /// `clamp` is set.
    fn fold_pairs(&mut self, clamp: bool) {
        let n = self.grid.half;
        for i in 1..=n {
            let mut s = self.weights[n + i] + self.weights[n - i];
            if clamp {
                s = s.max(0.0);
            }
            let e = exp(-self.grid.alpha(n + i));
            self.weights[n + i] = s / (1.0 + e);
            self.weights[n - i] = s * e / (1.0 + e);
        }
    }

    /// Rescales to unit total mass. Total mass is an unstable direction of
    /// density evolution, so roundoff is removed after every step.
    pub fn normalized(mut self) -> Density {
        let t = self.total_mass();
        if t > 0.0 && t != 1.0 {
            let c = 1.0 / t;
            self.weights.iter_mut().for_each(|w| *w *= c);
            self.inf *= c;
        }
        self
    }

    /// Moves finite mass into `+∞` once it is below `tol` in total.
    pub fn flushed(mut self, tol: f64) -> Density {
        let fin: f64 = self.weights.iter().map(|w| w.abs()).sum();
        if fin > 0.0 && fin < tol {
            self.inf += self.weights.iter().sum::<f64>();
            self.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        self
    }
}

/// `log2(1 + e^{-α})`.
fn entropy_kernel(alpha: f64) -> f64 {
    ((-alpha).max(0.0) + log1p(exp(-alpha.abs()))) / LN_2
}

/// `ln coth(x/2)`, the involution between `|α|` and `y`.
fn coth_log(x: f64) -> f64 {
    let e = exp(-x);
    log1p(e) - log1p(-e)
}

/// Magnitude-domain form of a measure: sign-sum `s = P⁺ + P⁻` and
/// sign-difference `d = P⁺ - P⁻` on the `y` grid, and the mass `z` at
/// `α = 0` (`y = ∞`), which is absorbing under ⊠.
#[derive(Debug, Clone, PartialEq)]
pub struct GDensity {
    pub s: Vec<f64>,
    pub d: Vec<f64>,
    pub z: f64,
}

impl GDensity {
    pub fn total_mass(&self) -> f64 {
        self.s.iter().sum::<f64>() + self.z
    }

    pub fn combine(&self, a: f64, other: &GDensity, b: f64) -> GDensity {
        GDensity {
            s: self
                .s
                .iter()
                .zip(&other.s)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            d: self
                .d
                .iter()
                .zip(&other.d)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            z: a * self.z + b * other.z,
        }
    }
}

/// Linear split of one unit of mass.
#[derive(Debug, Clone, Copy)]
struct Split {
    lo: usize,
    frac: f64,
}

/// Targets of one magnitude-grid point when moved back to the LLR grid.
#[derive(Debug, Clone, Copy)]
enum Back {
    Inf,
    Bottom,
    Grid(Split),
}

/// Precomputed transforms for one grid; read-only after construction.
#[derive(Debug)]
struct GTables {
    dy: f64,
    len: usize,
    forward: Vec<Split>,
    back_pos: Vec<Back>,
    back_neg: Vec<Back>,
    ent_s: Vec<f64>,
    ent_d: Vec<f64>,
}

/// Default magnitude-grid spacing.
pub const DEFAULT_DY: f64 = 1e-3;

impl GTables {
    fn new(grid: LlrGrid, dy: f64) -> Self {
        let n = grid.half;
        let cap = coth_log(0.5 * grid.delta);
        let len = (cap / dy).ceil() as usize + 1;
        let forward = (0..=n)
            .map(|i| {
                if i == 0 {
                    return Split { lo: 0, frac: 0.0 };
                }
                let t = coth_log(i as f64 * grid.delta) / dy;
                let lo = (t.floor() as usize).min(len - 2);
                Split {
                    lo,
                    frac: t - lo as f64,
                }
            })
            .collect();
        let back = |j: usize, positive: bool| {
            if j == 0 {
                return if positive { Back::Inf } else { Back::Bottom };
            }
            let a = coth_log(j as f64 * dy);
            if a >= grid.a_max() {
                return if positive { Back::Inf } else { Back::Bottom };
            }
            let t = a / grid.delta;
            let i = (t.floor() as usize).min(n - 1);
            let frac = t - i as f64;
            if positive {
                Split { lo: n + i, frac }.into()
            } else {
                // -α splits between n - i - 1 and n - i
                Split {
                    lo: n - i - 1,
                    frac: 1.0 - frac,
                }
                .into()
            }
        };
        let back_pos: Vec<Back> = (0..len).map(|j| back(j, true)).collect();
        let back_neg: Vec<Back> = (0..len).map(|j| back(j, false)).collect();
        // entropy of unit mass at |α| after the pair redistribution
        let sym = |k: usize| {
            let a = grid.alpha(k).abs();
            let e = exp(-a);
            (entropy_kernel(a) + e * entropy_kernel(-a)) / (1.0 + e)
        };
        let h = |b: &Back| match *b {
            Back::Inf => 0.0,
            Back::Bottom => sym(0),
            Back::Grid(Split { lo, frac }) => (1.0 - frac) * sym(lo) + frac * sym(lo + 1),
        };
        let (ent_s, ent_d) = back_pos
            .iter()
            .zip(&back_neg)
            .map(|(p, m)| {
                let (hp, hm) = (h(p), h(m));
                (0.5 * (hp + hm), 0.5 * (hp - hm))
            })
            .unzip();
        Self {
            dy,
            len,
            forward,
            back_pos,
            back_neg,
            ent_s,
            ent_d,
        }
    }
}

impl From<Split> for Back {
    fn from(s: Split) -> Self {
        Back::Grid(s)
    }
}

/// Convolution algebra for one grid: FFT plans, the magnitude-domain
/// tables and the entropy kernel. Shareable across threads.
#[derive(Debug)]
pub struct Algebra {
    grid: LlrGrid,
    conv: Convolver,
    g: GTables,
    ent: Vec<f64>,
}

impl Algebra {
    pub fn new(grid: LlrGrid) -> Self {
        Self::with_dy(grid, DEFAULT_DY)
    }

    /// Custom magnitude-grid spacing.
    pub fn with_dy(grid: LlrGrid, dy: f64) -> Self {
        Self {
            grid,
            conv: Convolver::new(),
            g: GTables::new(grid, dy),
            ent: (0..grid.points())
                .map(|k| entropy_kernel(grid.alpha(k)))
                .collect(),
        }
    }

    pub fn grid(&self) -> LlrGrid {
        self.grid
    }

    pub fn g_len(&self) -> usize {
        self.g.len
    }

    pub fn dy(&self) -> f64 {
        self.g.dy
    }

    fn check(&self, x: &Density) -> Result<()> {
        if x.grid == self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `H(x) = Σ x(α) log2(1 + e^{-α})`; linear, the `+∞` bucket has
    /// entropy 0.
    pub fn entropy(&self, x: &Density) -> Result<f64> {
        self.check(x)?;
        Ok(self.ent.iter().zip(&x.weights).map(|(h, w)| h * w).sum())
    }

    // -- variable side -----------------------------------------------------

    /// `pre ⊛ Σ_k c_k x^{⊛k}` with `x^{⊛0} = Δ₀` (`pre` defaults to `Δ₀`).
    fn var_poly(&self, coeffs: &[f64], x: &Density, pre: Option<&Density>) -> Density {
        let n = self.grid.half;
        let kmax = coeffs.len().saturating_sub(1);
        let factors = kmax + usize::from(pre.is_some());
        let fx = x.finite_mass();
        let tx = fx + x.inf;
        let horner = |v: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * v + c);
        let (mut fin, mut tot) = (horner(fx), horner(tx));
        if let Some(p) = pre {
            let fp = p.finite_mass();
            fin *= fp;
            tot *= fp + p.inf;
        }
        // finite part on a buffer whose α = 0 sits at `origin`
        let (buf, origin) = self.var_poly_finite(coeffs, x, pre, factors);
        let mut out = Density::zero(self.grid);
        let mut overflow = 0.0;
        for (u, &w) in buf.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let a = u as isize - origin as isize;
            if a < -(n as isize) {
                out.weights[0] += w;
            } else if a > n as isize {
                overflow += w;
            } else {
                out.weights[(a + n as isize) as usize] += w;
            }
        }
        // the mirror of a folded tail went to +∞ and FFT roundoff swamps the
        // small side of far pairs; the projection undoes both
        out.fold_pairs(false);
        // the +∞ bucket takes whatever the finite part does not carry
        out.inf = tot - out.finite_mass();
        debug_assert!((out.inf - (tot - fin + overflow)).abs() < 1e-9);
        out
    }

    fn var_poly_finite(
        &self,
        coeffs: &[f64],
        x: &Density,
        pre: Option<&Density>,
        factors: usize,
    ) -> (Vec<f64>, usize) {
        let n = self.grid.half;
        let nx = nonzeros(&x.weights);
        let np = pre.map(|p| nonzeros(&p.weights));
        let kmax = coeffs.len().saturating_sub(1);
        let sparse = nx
            .len()
            .checked_pow(kmax.max(1) as u32)
            .map(|v| v.saturating_mul(np.as_ref().map_or(1, Vec::len)))
            .is_some_and(|v| v <= 1 << 14);
        if sparse {
            // powers as offset sequences, aligned on a common origin
            let origin = factors * n;
            let mut buf = vec![0.0; 2 * origin + 1];
            let pre_terms: Vec<(isize, f64)> = match &np {
                Some(v) => v
                    .iter()
                    .map(|&(i, w)| (i as isize - n as isize, w))
                    .collect(),
                None => vec![(0, 1.0)],
            };
            let mut power: Vec<(isize, f64)> = vec![(0, 1.0)];
            for (k, &c) in coeffs.iter().enumerate() {
                if k > 0 {
                    let mut acc = std::collections::BTreeMap::new();
                    for &(a, u) in &power {
                        for &(i, v) in &nx {
                            *acc.entry(a + i as isize - n as isize).or_insert(0.0) += u * v;
                        }
                    }
                    power = acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
                }
                if c == 0.0 {
                    continue;
                }
                for &(a, u) in &power {
                    for &(b, v) in &pre_terms {
                        buf[(origin as isize + a + b) as usize] += c * u * v;
                    }
                }
            }
            return (buf, origin);
        }
        // centred circular layout: α index a sits at a mod size
        let size = (2 * factors * n + 1).next_power_of_two();
        let place = |d: &Density| {
            let mut v = vec![0.0; size];
            for (k, &w) in d.weights.iter().enumerate() {
                let a = k as isize - n as isize;
                v[a.rem_euclid(size as isize) as usize] = w;
            }
            v
        };
        let xs = place(x);
        let ps = pre.map(place);
        let raw = self
            .conv
            .circular_poly(&xs, coeffs, ps.as_deref(), size, size);
        // unwrap to a linear buffer with origin `size/2`
        let origin = size / 2;
        let mut buf = vec![0.0; size];
        for (u, w) in raw.into_iter().enumerate() {
            buf[(u + origin) % size] = w;
        }
        (buf, origin)
    }

    /// `a ⊛ b`.
    pub fn var_conv(&self, a: &Density, b: &Density) -> Result<Density> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.var_poly(&[0.0, 1.0], a, Some(b)))
    }

    /// `Σ_k c_k x^{⊛k}` for coefficients indexed by power.
    pub fn var_lift(
        &self,
        coeffs: &[f64],
        x: &Density,
        channel: Option<&Density>,
    ) -> Result<Density> {
        self.check(x)?;
        if let Some(c) = channel {
            self.check(c)?;
        }
        Ok(self.var_poly(coeffs, x, channel))
    }

    /// `λ^⊛(x) = Σ_d λ_d x^{⊛(d-1)}`.
    pub fn poly_var(&self, p: &DegreePolynomial, x: &Density) -> Result<Density> {
        self.var_lift(&p.by_power(), x, None)
    }

    // -- check side --------------------------------------------------------

    /// Magnitude-domain transform.
    pub fn to_g(&self, x: &Density) -> Result<GDensity> {
        self.check(x)?;
        let n = self.grid.half;
        let len = self.g.len;
        let mut pos = vec![0.0; len];
        let mut neg = vec![0.0; len];
        pos[0] += x.inf;
        for i in 1..=n {
            let Split { lo, frac } = self.g.forward[i];
            for (w, side) in [(x.weights[n + i], &mut pos), (x.weights[n - i], &mut neg)] {
                if w != 0.0 {
                    side[lo] += (1.0 - frac) * w;
                    side[lo + 1] += frac * w;
                }
            }
        }
        Ok(GDensity {
            s: pos.iter().zip(&neg).map(|(p, m)| p + m).collect(),
            d: pos.iter().zip(&neg).map(|(p, m)| p - m).collect(),
            z: x.weights[n],
        })
    }

    /// Back to the LLR grid, splitting each point linearly in `α`, then
    /// restoring the symmetry lost to the split. Linear, so it also serves
    /// signed measures in the symmetric span.
    pub fn from_g(&self, g: &GDensity) -> Density {
        let mut out = Density::zero(self.grid);
        out.weights[self.grid.half] += g.z;
        for j in 0..self.g.len {
            let p = 0.5 * (g.s[j] + g.d[j]);
            let m = 0.5 * (g.s[j] - g.d[j]);
            for (w, b) in [(p, self.g.back_pos[j]), (m, self.g.back_neg[j])] {
                if w == 0.0 {
                    continue;
                }
                match b {
                    Back::Inf => out.inf += w,
                    Back::Bottom => out.weights[0] += w,
                    Back::Grid(Split { lo, frac }) => {
                        out.weights[lo] += (1.0 - frac) * w;
                        out.weights[lo + 1] += frac * w;
                    }
                }
            }
        }
        out.fold_pairs(false);
        out
    }

    /// Entropy of a magnitude-domain measure (equal to the entropy of its
    /// back-transform).
    pub fn g_entropy(&self, g: &GDensity) -> f64 {
        let s: f64 = self.g.ent_s.iter().zip(&g.s).map(|(h, v)| h * v).sum();
        let d: f64 = self.g.ent_d.iter().zip(&g.d).map(|(h, v)| h * v).sum();
        s + d + g.z
    }

    /// `a ⊠ b` in the magnitude domain; mass pushed past the grid joins
    /// `z`.
    pub fn g_conv(&self, a: &GDensity, b: &GDensity) -> GDensity {
        let (s, d) = self.conv.conv_pair((&a.s, &a.d), (&b.s, &b.d), self.g.len);
        let z = a.total_mass() * b.total_mass() - s.iter().sum::<f64>();
        GDensity { s, d, z }
    }

    /// `Σ_k c_k x^{⊠k}` in the magnitude domain, `x^{⊠0} = Δ∞`.
    pub fn g_lift(&self, coeffs: &[f64], x: &GDensity) -> GDensity {
        let (s, d) = self.conv.poly_pair(&x.s, &x.d, coeffs, self.g.len);
        let t = x.total_mass();
        let total = coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let z = total - s.iter().sum::<f64>();
        GDensity { s, d, z }
    }

    /// `a ⊠ b`.
    pub fn chk_conv(&self, a: &Density, b: &Density) -> Result<Density> {
        let g = self.g_conv(&self.to_g(a)?, &self.to_g(b)?);
        Ok(self.from_g(&g))
    }

    /// `Σ_k c_k x^{⊠k}` for coefficients indexed by power.
    pub fn chk_lift(&self, coeffs: &[f64], x: &Density) -> Result<Density> {
        Ok(self.from_g(&self.g_lift(coeffs, &self.to_g(x)?)))
    }

    /// `ρ^⊠(x) = Σ_d ρ_d x^{⊠(d-1)}`.
    pub fn poly_chk(&self, p: &DegreePolynomial, x: &Density) -> Result<Density> {
        self.chk_lift(&p.by_power(), x)
    }
}

/// `(next - prev) / (2 dz)` as a signed measure.
pub fn deriv_lift(prev: &Density, next: &Density, dz: f64) -> Result<SignedDensity> {
    if !(dz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dz = {dz} must be positive"
        )));
    }
    let c = 0.5 / dz;
    next.combine(c, prev, -c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn alg() -> &'static Algebra {
        static A: OnceLock<Algebra> = OnceLock::new();
        A.get_or_init(|| Algebra::new(LlrGrid::default()))
    }

    fn g() -> LlrGrid {
        LlrGrid::default()
    }

    fn close(a: &Density, b: &Density, tol: f64) -> bool {
        a.max_diff(b) < tol
    }

    #[test]
    fn grid_shape() {
        let g = g();
        assert_eq!(g.points(), 4097);
        assert_eq!(g.alpha(2048), 0.0);
        assert!((g.a_max() - 30.0).abs() < 1e-12);
        assert!(LlrGrid::new(30.0, 0.7).is_err());
        assert_eq!(g.refined().points(), 8193);
    }

    #[test]
    fn dirac_masses() {
        let a = alg();
        assert_eq!(a.entropy(&Density::delta_zero(g())).unwrap(), 1.0);
        assert_eq!(a.entropy(&Density::delta_inf(g())).unwrap(), 0.0);
        assert_eq!(Density::delta_zero(g()).symmetry_defect(), 0.0);
        assert_eq!(Density::bec(g(), 0.0).unwrap(), Density::delta_inf(g()));
        assert_eq!(Density::bec(g(), 1.0).unwrap(), Density::delta_zero(g()));
        assert_eq!(a.entropy(&Density::bec(g(), 0.46).unwrap()).unwrap(), 0.46);
        let z = Density::bec(g(), 0.3).unwrap();
        assert_eq!(a.entropy(&z.combine(1.0, &z, -1.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn biawgn_entropy_matches_psi() {
        let a = alg();
        for m in [0.5, 2.33, 6.0] {
            let d = Density::biawgn(g(), m).unwrap();
            assert!((d.total_mass() - 1.0).abs() < 1e-12);
            assert!(d.symmetry_defect() < 1e-9);
            let h = a.entropy(&d).unwrap();
            let psi = wavefront_core::gauss::psi(m).unwrap();
            assert!((h - psi).abs() < 1e-4, "{m}: {h} vs {psi}");
        }
        let tiny = Density::biawgn(g(), 1e-6).unwrap();
        assert!(a.entropy(&tiny).unwrap() > 0.999);
        let big = Density::biawgn(g(), 1e4).unwrap();
        assert!(a.entropy(&big).unwrap() < 1e-6);
    }

    #[test]
    fn identities_of_both_convolutions() {
        let a = alg();
        let x = Density::biawgn(g(), 2.0).unwrap();
        let zero = Density::delta_zero(g());
        let inf = Density::delta_inf(g());
        assert!(close(&a.var_conv(&x, &inf).unwrap(), &inf, 1e-12));
        assert!(close(&a.var_conv(&x, &zero).unwrap(), &x, 1e-12));
        assert!(close(&a.chk_conv(&x, &zero).unwrap(), &zero, 1e-12));
        let back = a.chk_conv(&x, &inf).unwrap();
        // Δ∞ is neutral up to the magnitude-grid round trip
        let (hx, hb) = (a.entropy(&x).unwrap(), a.entropy(&back).unwrap());
        assert!((hx - hb).abs() < 2e-4, "{hx} {hb}");
        assert!((back.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bec_closure_is_exact() {
        let a = alg();
        let (e1, e2) = (0.3, 0.55);
        let (b1, b2) = (
            Density::bec(g(), e1).unwrap(),
            Density::bec(g(), e2).unwrap(),
        );
        assert_eq!(
            a.var_conv(&b1, &b2).unwrap(),
            Density::bec(g(), e1 * e2).unwrap()
        );
        let want = Density::bec(g(), 1.0 - (1.0 - e1) * (1.0 - e2)).unwrap();
        assert!(close(&a.chk_conv(&b1, &b2).unwrap(), &want, 1e-15));
        let rho = DegreePolynomial::monomial(6).unwrap();
        let lam = DegreePolynomial::monomial(3).unwrap();
        let want = Density::bec(g(), 1.0 - (1.0 - e1).powi(5)).unwrap();
        assert!(close(&a.poly_chk(&rho, &b1).unwrap(), &want, 1e-15));
        let want = Density::bec(g(), e1 * e1).unwrap();
        assert!(close(&a.poly_var(&lam, &b1).unwrap(), &want, 1e-15));
        let inf = Density::delta_inf(g());
        assert!(close(&a.poly_chk(&rho, &inf).unwrap(), &inf, 1e-15));
        assert!(close(&a.poly_var(&lam, &inf).unwrap(), &inf, 1e-15));
    }

    #[test]
    fn mass_and_symmetry_are_preserved() {
        let a = alg();
        let x = Density::biawgn(g(), 1.5).unwrap();
        let y = Density::biawgn(g(), 3.0)
            .unwrap()
            .combine(0.7, &Density::bec(g(), 0.4).unwrap(), 0.3)
            .unwrap();
        for out in [a.var_conv(&x, &y).unwrap(), a.chk_conv(&x, &y).unwrap()] {
            assert!((out.total_mass() - 1.0).abs() < 1e-9);
            assert!(out.weights().iter().all(|&w| w >= 0.0));
            let sym = out.clone().symmetrized();
            let ha = a.entropy(&out).unwrap();
            let hb = a.entropy(&sym).unwrap();
            assert!((ha - hb).abs() < 1e-3, "{ha} {hb}");
        }
    }

    #[test]
    fn duality_on_gaussians() {
        let a = alg();
        let x = Density::biawgn(g(), 1.2).unwrap();
        let y = Density::biawgn(g(), 3.4).unwrap();
        let lhs = a.entropy(&a.var_conv(&x, &y).unwrap()).unwrap()
            + a.entropy(&a.chk_conv(&x, &y).unwrap()).unwrap();
        let rhs = a.entropy(&x).unwrap() + a.entropy(&y).unwrap();
        assert!((lhs - rhs).abs() < 2e-3, "{lhs} {rhs}");
    }

    #[test]
    fn derivative_lift() {
        let x = Density::bec(g(), 0.4).unwrap();
        let y = Density::bec(g(), 0.5).unwrap();
        let d = deriv_lift(&x, &y, 0.25).unwrap();
        assert!(d.total_mass().abs() < 1e-15);
        assert!((d.weights()[2048] - 0.2).abs() < 1e-15);
        assert!((d.mass_inf() + 0.2).abs() < 1e-15);
        assert_eq!(
            deriv_lift(&x, &x, 0.1).unwrap(),
            Density::zero(g())
                .combine(1.0, &Density::zero(g()), 0.0)
                .unwrap()
        );
        assert!(deriv_lift(&x, &y, 0.0).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = alg();
        let other = Density::delta_zero(g().refined());
        assert_eq!(a.entropy(&other), Err(Error::GridMismatch));
        assert!(a.var_conv(&other, &other).is_err());
    }
}

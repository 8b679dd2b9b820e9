//! Degree distributions of LDPC(λ, ρ) ensembles.
//!
//! Edge-perspective polynomials are stored densely by degree: `coeffs[d]` is
//! the fraction of edges attached to degree-`d` nodes, so that
//! `p(y) = Σ_d coeffs[d] · y^(d-1)`. Node-perspective polynomials follow from
//! `L'(y) = L'(1) λ(y)` and `R'(y) = R'(1) ρ(y)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::numeric;

/// Largest degree accepted by [`DegreePolynomial::new`].
pub const MAX_DEGREE: usize = 100;

/// Absolute tolerance of [`DegreePolynomial::invert`].
pub const INVERT_TOL: f64 = 1e-12;

/// Edge-perspective degree distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreePolynomial {
    coeffs: Vec<f64>,
}

impl DegreePolynomial {
    /// Builds a polynomial from coefficients indexed by degree (`coeffs[0]`
    /// must be zero). Coefficient sums within 1e-6 of one are renormalised;
    /// sums within rounding of one are kept as given so printed
    /// coefficients read back unchanged.
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() > MAX_DEGREE + 1 {
            return Err(invalid(format!("degree above {MAX_DEGREE}")));
        }
        if coeffs.first().is_some_and(|&c| c != 0.0) {
            return Err(invalid("degree-0 coefficient must be zero"));
        }
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(invalid("coefficients must be finite and nonnegative"));
        }
        let sum: f64 = coeffs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(invalid(format!("coefficients sum to {sum}, expected 1")));
        }
        if (sum - 1.0).abs() > 1e-12 {
            coeffs.iter_mut().for_each(|c| *c /= sum);
        }
        if !coeffs.iter().skip(2).any(|&c| c > 0.0) {
            return Err(invalid("at least one degree >= 2 is required"));
        }
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Ok(Self { coeffs })
    }

    /// Single-degree polynomial `y^(d-1)`.
    pub fn monomial(degree: usize) -> Result<Self> {
        let mut coeffs = vec![0.0; degree + 1];
        if degree == 0 {
            return Err(invalid("degree must be positive"));
        }
        coeffs[degree] = 1.0;
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Nonzero `(degree, coefficient)` pairs.
    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0.0)
            .map(|(d, c)| (d, *c))
    }

    /// `p(y)`, checked.
    pub fn eval(&self, y: f64) -> Result<f64> {
        check_unit(y, "y")?;
        Ok(self.value(y))
    }

    /// `p'(y)`, checked.
    pub fn eval_derivative(&self, y: f64) -> Result<f64> {
        check_unit(y, "y")?;
        Ok(self.derivative(y))
    }

    /// The unique `y` with `p(y) = t`, by bisection to [`INVERT_TOL`].
    pub fn invert(&self, t: f64) -> Result<f64> {
        check_unit(t, "t")?;
        let floor = self.value(0.0);
        if t < floor {
            return Err(invalid(format!("{t} is below p(0) = {floor}")));
        }
        Ok(self.inverse(t))
    }

    /// Unchecked evaluation (Horner).
    pub fn value(&self, y: f64) -> f64 {
        self.coeffs[1..]
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * y + c)
    }

    /// Unchecked derivative.
    pub fn derivative(&self, y: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (d, &c)| acc * y + (d - 1) as f64 * c)
    }

    /// Unchecked inverse; `t` is clamped to `[p(0), 1]`.
    pub fn inverse(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return 1.0;
        }
        if t <= self.value(0.0) {
            return 0.0;
        }
        numeric::bisect(0.0, 1.0, INVERT_TOL, |y| self.value(y) >= t)
    }

    /// `∫₀¹ p(y) dy = Σ c_d / d`.
    pub fn integral(&self) -> f64 {
        self.terms().map(|(d, c)| c / d as f64).sum()
    }

    /// Coefficients by power for the node-perspective polynomial
    /// `P(y) = ∫₀^y p / ∫₀^1 p`; `out[k]` multiplies `y^k`.
    pub fn node_perspective(&self) -> Vec<f64> {
        let norm = self.integral();
        let mut out = vec![0.0; self.coeffs.len()];
        for (d, c) in self.terms() {
            out[d] = c / d as f64 / norm;
        }
        out
    }

    /// Coefficients by power of `p` itself; `out[k]` multiplies `y^k`.
    pub fn by_power(&self) -> Vec<f64> {
        self.coeffs[1..].to_vec()
    }

    /// Coefficients by power of the formal derivative `p'`.
    pub fn derivative_by_power(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .map(|(d, &c)| (d - 1) as f64 * c)
            .collect()
    }

    fn single_degree(&self) -> Option<usize> {
        let mut terms = self.terms();
        match (terms.next(), terms.next()) {
            (Some((d, _)), None) => Some(d),
            _ => None,
        }
    }
}

fn check_unit(v: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} outside [0, 1]")))
    }
}

/// An LDPC(λ, ρ) ensemble with its node-perspective companions.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    lambda: DegreePolynomial,
    rho: DegreePolynomial,
    var_node: Vec<f64>,
    chk_node: Vec<f64>,
}

impl Ensemble {
    pub fn new(lambda: DegreePolynomial, rho: DegreePolynomial) -> Self {
        let var_node = lambda.node_perspective();
        let chk_node = rho.node_perspective();
        Self {
            lambda,
            rho,
            var_node,
            chk_node,
        }
    }

    /// The (ℓ, r)-regular ensemble: λ(y) = y^(ℓ-1), ρ(y) = y^(r-1).
    pub fn regular(ell: usize, r: usize) -> Result<Self> {
        if ell < 2 || r < 2 {
            return Err(invalid(format!(
                "regular degrees must be >= 2, got ({ell}, {r})"
            )));
        }
        Ok(Self::new(
            DegreePolynomial::monomial(ell)?,
            DegreePolynomial::monomial(r)?,
        ))
    }

    pub fn lambda(&self) -> &DegreePolynomial {
        &self.lambda
    }

    pub fn rho(&self) -> &DegreePolynomial {
        &self.rho
    }

    /// `L(y)`.
    pub fn node_var(&self, y: f64) -> f64 {
        horner(&self.var_node, y)
    }

    /// `R(y)`.
    pub fn node_chk(&self, y: f64) -> f64 {
        horner(&self.chk_node, y)
    }

    pub fn node_var_coeffs(&self) -> &[f64] {
        &self.var_node
    }

    pub fn node_chk_coeffs(&self) -> &[f64] {
        &self.chk_node
    }

    /// `L'(1)`, the average variable-node degree.
    pub fn var_degree(&self) -> f64 {
        1.0 / self.lambda.integral()
    }

    /// `R'(1)`, the average check-node degree.
    pub fn chk_degree(&self) -> f64 {
        1.0 / self.rho.integral()
    }

    /// `(ℓ, r)` when both distributions are single-degree.
    pub fn regular_degrees(&self) -> Option<(usize, usize)> {
        Some((self.lambda.single_degree()?, self.rho.single_degree()?))
    }

    /// Design rate `1 - L'(1)/R'(1)`.
    pub fn design_rate(&self) -> f64 {
        1.0 - self.var_degree() / self.chk_degree()
    }
}

fn horner(by_power: &[f64], y: f64) -> f64 {
    by_power.iter().rev().fold(0.0, |acc, &c| acc * y + c)
}

/// Grammar: `regular:<l>,<r>` or `lambda:<terms>;rho:<terms>` where
/// `<terms>` is `+`-separated `[coef]x<exp>` (edge perspective, exponent =
/// degree − 1; a bare coefficient is exponent 0).
impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("regular:") {
            let (l, r) = rest
                .split_once(',')
                .ok_or_else(|| invalid(format!("expected regular:<l>,<r>, got {s:?}")))?;
            let l = l
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad variable degree {l:?}")))?;
            let r = r
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad check degree {r:?}")))?;
            return Ensemble::regular(l, r);
        }
        let (lam, rho) = s
            .split_once(';')
            .ok_or_else(|| invalid(format!("expected lambda:...;rho:..., got {s:?}")))?;
        let lam = lam
            .trim()
            .strip_prefix("lambda:")
            .ok_or_else(|| invalid("missing lambda: prefix"))?;
        let rho = rho
            .trim()
            .strip_prefix("rho:")
            .ok_or_else(|| invalid("missing rho: prefix"))?;
        Ok(Ensemble::new(parse_terms(lam)?, parse_terms(rho)?))
    }
}

fn parse_terms(s: &str) -> Result<DegreePolynomial> {
    let mut coeffs: Vec<f64> = Vec::new();
    for term in s.split('+') {
        let term = term.trim();
        let (coef, exp) = match term.split_once('x') {
            Some((c, e)) => (c.trim(), e.trim()),
            None => (term, "0"),
        };
        let coef: f64 = if coef.is_empty() {
            1.0
        } else {
            coef.parse()
                .map_err(|_| invalid(format!("bad coefficient in term {term:?}")))?
        };
        let exp: usize = exp
            .parse()
            .map_err(|_| invalid(format!("bad exponent in term {term:?}")))?;
        let degree = exp + 1;
        if degree > MAX_DEGREE {
            return Err(invalid(format!("degree above {MAX_DEGREE}")));
        }
        if coeffs.len() <= degree {
            coeffs.resize(degree + 1, 0.0);
        }
        coeffs[degree] += coef;
    }
    DegreePolynomial::new(coeffs)
}

fn write_terms(f: &mut fmt::Formatter<'_>, p: &DegreePolynomial) -> fmt::Result {
    for (i, (d, c)) in p.terms().enumerate() {
        if i > 0 {
            f.write_str("+")?;
        }
        write!(f, "{c}x{}", d - 1)?;
    }
    Ok(())
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((l, r)) = self.regular_degrees() {
            return write!(f, "regular:{l},{r}");
        }
        f.write_str("lambda:")?;
        write_terms(f, &self.lambda)?;
        f.write_str(";rho:")?;
        write_terms(f, &self.rho)
    }
}

impl Ensemble {
    /// Canonical textual form; parses back to an equal ensemble.
    pub fn spec_string(&self) -> String {
        format!("{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn regular_3_6_values() {
        let e = Ensemble::regular(3, 6).unwrap();
        assert_eq!(e.lambda().eval(0.5).unwrap(), 0.25);
        assert_eq!(e.rho().eval(0.5).unwrap(), 0.03125);
        assert_eq!(e.var_degree(), 3.0);
        assert_eq!(e.chk_degree(), 6.0);
        assert!((e.node_var(0.5) - 0.125).abs() < 1e-15);
        assert!((e.node_chk(0.5) - 0.015625).abs() < 1e-15);
        assert_eq!(e.regular_degrees(), Some((3, 6)));
    }

    #[test]
    fn regular_rejects_degree_one() {
        assert!(Ensemble::regular(1, 6).is_err());
        assert!(Ensemble::regular(3, 1).is_err());
        let e = Ensemble::regular(2, 2).unwrap();
        assert_eq!(e.lambda().eval(0.3).unwrap(), 0.3);
        assert_eq!(e.rho().eval(0.3).unwrap(), 0.3);
    }

    #[test]
    fn eval_and_derivative() {
        let lam = DegreePolynomial::monomial(3).unwrap();
        assert_eq!(lam.eval(0.0).unwrap(), 0.0);
        assert_eq!(lam.eval(1.0).unwrap(), 1.0);
        assert!((lam.eval(0.7).unwrap() - 0.49).abs() < 1e-15);
        assert!(lam.eval(1.5).is_err());
        assert!(lam.eval(-0.1).is_err());

        let rho = DegreePolynomial::monomial(6).unwrap();
        assert_eq!(rho.eval_derivative(1.0).unwrap(), 5.0);
        assert_eq!(rho.eval_derivative(0.0).unwrap(), 0.0);
        let expect = 5.0 * 0.535f64 * 0.535 * 0.535 * 0.535;
        assert!((rho.eval_derivative(0.535).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 0.4097).abs() < 1e-4);
    }

    #[test]
    fn inversion() {
        let lam = DegreePolynomial::monomial(3).unwrap();
        assert!((lam.invert(0.25).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(lam.invert(1.0).unwrap(), 1.0);
        let rho = DegreePolynomial::monomial(6).unwrap();
        let expect = libm::pow(0.5, 0.2);
        assert!((rho.invert(0.5).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.87055).abs() < 1e-5);
        assert!(rho.invert(1.2).is_err());
    }

    #[test]
    fn node_perspective_identities() {
        let e: Ensemble = "lambda:0.3x1+0.7x3;rho:0.4x4+0.6x6".parse().unwrap();
        assert!((e.node_var(1.0) - 1.0).abs() < 1e-12);
        assert!((e.node_chk(1.0) - 1.0).abs() < 1e-12);
        let (lp, rp) = (e.var_degree(), e.chk_degree());
        for i in 0..=20 {
            let y = i as f64 / 20.0;
            let dl = horner(
                &e.node_var_coeffs()
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| k as f64 * c)
                    .collect::<Vec<_>>(),
                y,
            );
            assert!((dl - lp * e.lambda().value(y)).abs() < 1e-12);
            let dr = horner(
                &e.node_chk_coeffs()
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| k as f64 * c)
                    .collect::<Vec<_>>(),
                y,
            );
            assert!((dr - rp * e.rho().value(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_and_display() {
        let e: Ensemble = "regular:3,6".parse().unwrap();
        assert_eq!(e, Ensemble::regular(3, 6).unwrap());
        assert_eq!(e.to_string(), "regular:3,6");
        let e: Ensemble = "lambda:0.5x1+0.5x2;rho:x5".parse().unwrap();
        assert_eq!(e.lambda().coeffs(), &[0.0, 0.0, 0.5, 0.5]);
        assert_eq!(e.rho().max_degree(), 6);
        let back: Ensemble = e.to_string().parse().unwrap();
        assert_eq!(back, e);
        assert!("lambda:0.5x1;rho:x5".parse::<Ensemble>().is_err());
        assert!("regular:3".parse::<Ensemble>().is_err());
        assert!("lambda:x0;rho:x5".parse::<Ensemble>().is_err());
        assert!("bogus".parse::<Ensemble>().is_err());
    }

    fn admissible() -> impl Strategy<Value = DegreePolynomial> {
        prop::collection::vec(0.0f64..1.0, 2..12).prop_filter_map("degenerate", |raw| {
            let mut coeffs = vec![0.0];
            coeffs.extend(raw);
            let s: f64 = coeffs.iter().sum();
            if coeffs[2..].iter().sum::<f64>() < 1e-3 {
                return None;
            }
            coeffs.iter_mut().for_each(|c| *c /= s);
            DegreePolynomial::new(coeffs).ok()
        })
    }

    proptest! {
        #[test]
        fn bounded_and_monotone(p in admissible()) {
            let mut prev = p.value(0.0);
            for i in 0..=1000 {
                let v = p.value(i as f64 / 1000.0);
                prop_assert!((-1e-15..=1.0 + 1e-12).contains(&v));
                prop_assert!(v >= prev - 1e-15);
                prev = v;
            }
        }

        #[test]
        fn invert_round_trip(p in admissible(), y in 0.0f64..=1.0) {
            let t = p.value(y);
            let back = p.invert(t).unwrap();
            prop_assert!((back - y).abs() < 1e-10 || (p.value(back) - t).abs() < 1e-12);
        }
    }
}

//! Small numerical kernels shared by the scalar pipelines.

use alloc::vec::Vec;

/// Bisection for the boundary of a monotone predicate on `[lo, hi]`.
///
/// `above(x)` must be false near `lo` and true near `hi`; the returned point
/// is within `tol` of the switch.
pub fn bisect(mut lo: f64, mut hi: f64, tol: f64, above: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Trapezoid rule for samples with uniform spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            h * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Central differences, one-sided at both ends.
pub fn gradient(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return alloc::vec![0.0; n];
    }
    (0..n)
        .map(|i| match i {
            0 => (values[1] - values[0]) / h,
            i if i == n - 1 => (values[n - 1] - values[n - 2]) / h,
            i => (values[i + 1] - values[i - 1]) / (2.0 * h),
        })
        .collect()
}

/// Trapezoid-weighted mean over windows of `n` intervals:
/// `out[k] = mean(values[k..=k+n])` with half weight at both ends.
pub fn window_mean(values: &[f64], n: usize) -> Vec<f64> {
    if values.len() <= n {
        return Vec::new();
    }
    if n == 0 {
        return values.to_vec();
    }
    let count = values.len() - n;
    let mut out = Vec::with_capacity(count);
    let mut inner: f64 = values[1..n].iter().sum();
    for k in 0..count {
        if k > 0 {
            inner += values[k + n - 1] - values[k];
        }
        out.push((inner + 0.5 * (values[k] + values[k + n])) / n as f64);
    }
    out
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Fractional index of the first upward crossing of `level`, scanning from
/// the left: the smallest `i + t` with `values[i] < level <= values[i+1]`.
pub fn level_crossing(values: &[f64], level: f64) -> Option<f64> {
    values.windows(2).enumerate().find_map(|(i, w)| {
        (w[0] < level && w[1] >= level).then(|| i as f64 + (level - w[0]) / (w[1] - w[0]))
    })
}

/// Samples `values` at fractional index `pos` by linear interpolation,
/// clamping to the end values.
pub fn sample(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    if pos <= 0.0 {
        return values[0];
    }
    if pos >= last as f64 {
        return values[last];
    }
    let i = pos as usize;
    let t = pos - i as f64;
    values[i] + t * (values[i + 1] - values[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_root() {
        let r = bisect(0.0, 2.0, 1e-13, |x| x * x >= 2.0);
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_is_exact_on_lines() {
        let v: Vec<f64> = (0..=10).map(|i| 3.0 * i as f64 * 0.1 + 1.0).collect();
        assert!((trapezoid(&v, 0.1) - 2.5).abs() < 1e-14);
        assert_eq!(trapezoid(&[1.0], 0.1), 0.0);
    }

    #[test]
    fn gradient_of_quadratic() {
        let v: Vec<f64> = (0..5).map(|i| (i * i) as f64).collect();
        assert_eq!(gradient(&v, 1.0), [1.0, 2.0, 4.0, 6.0, 7.0]);
    }

    #[test]
    fn window_mean_matches_direct() {
        let v: Vec<f64> = (0..20).map(|i| libm::sin(i as f64)).collect();
        let n = 4;
        let w = window_mean(&v, n);
        assert_eq!(w.len(), 16);
        for (k, got) in w.iter().enumerate() {
            let direct = (0.5 * v[k] + v[k + 1] + v[k + 2] + v[k + 3] + 0.5 * v[k + 4]) / 4.0;
            assert!((got - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let r = integrate(&|x: f64| libm::exp(x), 0.0, 1.0, 1e-12);
        assert!((r - (core::f64::consts::E - 1.0)).abs() < 1e-11);
        let r = integrate(&|x: f64| libm::sqrt(x), 0.0, 1.0, 1e-10);
        assert!((r - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_and_sampling() {
        let v = [0.0, 0.1, 0.3, 0.6, 0.6];
        let c = level_crossing(&v, 0.2).unwrap();
        assert!((c - 1.5).abs() < 1e-14);
        assert!((sample(&v, c) - 0.2).abs() < 1e-14);
        assert_eq!(level_crossing(&v, 0.7), None);
        assert_eq!(sample(&v, -3.0), 0.0);
        assert_eq!(sample(&v, 9.0), 0.6);
    }
}

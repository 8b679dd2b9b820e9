//! Linear convolution of real sequences, direct for sparse inputs and by
//! FFT otherwise.

use std::cell::RefCell;
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64 as C;
use rustfft::{Fft, FftPlanner};

/// Inputs whose nonzero counts multiply to at most this are convolved
/// directly (exact arithmetic for the two-point BEC family).
const SPARSE_LIMIT: usize = 1 << 14;

/// FFT outputs below this magnitude are roundoff and set to zero.
const CLEAN: f64 = 1e-15;

pub(crate) struct Convolver {
    planner: Mutex<FftPlanner<f64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Convolver")
    }
}

thread_local! {
    // transform buffers and scratch, reused to avoid fresh page faults on
    // every call
    static POOL: RefCell<Vec<Vec<C>>> = const { RefCell::new(Vec::new()) };
}

fn take(n: usize) -> Vec<C> {
    let mut v = POOL.with(|p| p.borrow_mut().pop()).unwrap_or_default();
    v.clear();
    v.resize(n, C::new(0.0, 0.0));
    v
}

fn give(v: Vec<C>) {
    POOL.with(|p| {
        let mut p = p.borrow_mut();
        if p.len() < 8 {
            p.push(v);
        }
    });
}

pub(crate) fn nonzeros(a: &[f64]) -> Vec<(usize, f64)> {
    a.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect()
}

fn sparse_conv(a: &[(usize, f64)], b: &[(usize, f64)], out: &mut [f64]) {
    for &(i, x) in a {
        for &(j, y) in b {
            out[i + j] += x * y;
        }
    }
}

/// `Σ_k c_k f^k` by Horner.
fn horner(f: C, coeffs: &[f64]) -> C {
    let mut acc = C::new(*coeffs.last().unwrap_or(&0.0), 0.0);
    for &c in coeffs.iter().rev().skip(1) {
        acc = acc * f + c;
    }
    acc
}

/// Replaces the packed spectrum `z` of `a + i b` (with `a`, `b` real) by
/// `f(A_k, B_k)` at every frequency.
fn map_split(z: &mut [C], f: impl Fn(C, C) -> C) {
    let n = z.len();
    let half_i = C::new(0.0, -0.5);
    for k in 0..=n / 2 {
        let j = (n - k) % n;
        let (x, y) = (z[k], z[j]);
        let (a, b) = ((x + y.conj()) * 0.5, (x - y.conj()) * half_i);
        z[k] = f(a, b);
        if j != k {
            let (a, b) = ((y + x.conj()) * 0.5, (y - x.conj()) * half_i);
            z[j] = f(a, b);
        }
    }
}

fn clean(v: &mut [f64]) {
    for x in v {
        if x.abs() < CLEAN {
            *x = 0.0;
        }
    }
}

impl Convolver {
    pub fn new() -> Self {
        Self {
            planner: Mutex::new(FftPlanner::new()),
        }
    }

    fn plan(&self, n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
        let mut p = self.planner.lock().unwrap_or_else(|e| e.into_inner());
        if forward {
            p.plan_fft_forward(n)
        } else {
            p.plan_fft_inverse(n)
        }
    }

    fn run(&self, buf: &mut [C], forward: bool) {
        let fft = self.plan(buf.len(), forward);
        let mut scratch = take(fft.get_inplace_scratch_len());
        fft.process_with_scratch(buf, &mut scratch);
        give(scratch);
    }

    /// Transform of `a + i b` zero-padded to `n`.
    fn packed(&self, a: &[f64], b: &[f64], n: usize) -> Vec<C> {
        let mut buf = take(n);
        for (x, v) in buf.iter_mut().zip(a) {
            x.re = *v;
        }
        for (x, v) in buf.iter_mut().zip(b) {
            x.im = *v;
        }
        self.run(&mut buf, true);
        buf
    }

    /// Inverse transform; real and imaginary parts truncated to `keep`.
    fn unpack(&self, mut buf: Vec<C>, keep: usize) -> (Vec<f64>, Vec<f64>) {
        self.run(&mut buf, false);
        let scale = 1.0 / buf.len() as f64;
        let keep = keep.min(buf.len());
        let mut a: Vec<f64> = buf[..keep].iter().map(|c| c.re * scale).collect();
        let mut b: Vec<f64> = buf[..keep].iter().map(|c| c.im * scale).collect();
        give(buf);
        clean(&mut a);
        clean(&mut b);
        (a, b)
    }

    /// Full linear convolution.
    #[cfg(test)]
    pub fn conv(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let len = a.len() + b.len() - 1;
        let z: Vec<f64> = vec![0.0; a.len()];
        self.conv_pair((a, &z), (b, &z), len).0
    }

    /// Two convolutions at once: `(a1 * b1, a2 * b2)`, truncated to `keep`.
    pub fn conv_pair(
        &self,
        a: (&[f64], &[f64]),
        b: (&[f64], &[f64]),
        keep: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let len = a.0.len() + b.0.len() - 1;
        let keep = keep.min(len);
        let dense = [a.0, a.1, b.0, b.1].map(nonzeros);
        if dense[0].len() * dense[2].len() + dense[1].len() * dense[3].len() <= SPARSE_LIMIT {
            let mut x = vec![0.0; len];
            let mut y = vec![0.0; len];
            sparse_conv(&dense[0], &dense[2], &mut x);
            sparse_conv(&dense[1], &dense[3], &mut y);
            x.truncate(keep);
            y.truncate(keep);
            return (x, y);
        }
        let n = len.next_power_of_two();
        let mut za = self.packed(a.0, a.1, n);
        let zb = self.packed(b.0, b.1, n);
        let half_i = C::new(0.0, -0.5);
        let i = C::new(0.0, 1.0);
        for k in 0..=n / 2 {
            let j = (n - k) % n;
            let (xa, ya, xb, yb) = (za[k], za[j], zb[k], zb[j]);
            let split = |x: C, y: C| ((x + y.conj()) * 0.5, (x - y.conj()) * half_i);
            let (a1, a2) = split(xa, ya);
            let (b1, b2) = split(xb, yb);
            za[k] = a1 * b1 + i * a2 * b2;
            if j != k {
                let (a1, a2) = split(ya, xa);
                let (b1, b2) = split(yb, xb);
                za[j] = a1 * b1 + i * a2 * b2;
            }
        }
        give(zb);
        self.unpack(za, keep)
    }

    /// `pre * Σ_k c_k a^{*k}` over full support (`a^{*0}` is the unit
    /// impulse at index 0; `pre` defaults to the same impulse).
    pub fn poly(&self, a: &[f64], coeffs: &[f64], pre: Option<&[f64]>) -> Vec<f64> {
        let k = coeffs.len().saturating_sub(1);
        let pre_len = pre.map_or(1, <[f64]>::len);
        let len = k * (a.len() - 1) + pre_len;
        let sa = nonzeros(a);
        let sp = pre.map(nonzeros).unwrap_or_else(|| vec![(0, 1.0)]);
        if sa
            .len()
            .checked_pow(k.max(1) as u32)
            .is_some_and(|v| v.saturating_mul(sp.len()) <= SPARSE_LIMIT)
        {
            let mut out = vec![0.0; len];
            let mut power = vec![(0usize, 1.0)];
            for (deg, &c) in coeffs.iter().enumerate() {
                if deg > 0 {
                    let mut next = vec![0.0; deg * (a.len() - 1) + 1];
                    sparse_conv(&power, &sa, &mut next);
                    power = nonzeros(&next);
                }
                if c != 0.0 {
                    for &(i, x) in &power {
                        for &(j, y) in &sp {
                            out[i + j] += c * x * y;
                        }
                    }
                }
            }
            return out;
        }
        self.circular_poly(a, coeffs, pre, len.next_power_of_two(), len)
    }

    /// `pre ⊛ Σ_k c_k a^{⊛k}` as a circular convolution of length `n`,
    /// truncated to `keep`.
    pub fn circular_poly(
        &self,
        a: &[f64],
        coeffs: &[f64],
        pre: Option<&[f64]>,
        n: usize,
        keep: usize,
    ) -> Vec<f64> {
        let mut z = self.packed(a, pre.unwrap_or(&[]), n);
        match pre {
            Some(_) => map_split(&mut z, |x, p| horner(x, coeffs) * p),
            None => map_split(&mut z, |x, _| horner(x, coeffs)),
        }
        self.unpack(z, keep).0
    }

    /// `(Σ c_k s^{*k}, Σ c_k d^{*k})` truncated to `keep`.
    pub fn poly_pair(
        &self,
        s: &[f64],
        d: &[f64],
        coeffs: &[f64],
        keep: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let k = coeffs.len().saturating_sub(1);
        let len = k * (s.len() - 1) + 1;
        let keep = keep.min(len);
        let (ss, sd) = (nonzeros(s), nonzeros(d));
        if ss
            .len()
            .max(sd.len())
            .checked_pow(k.max(1) as u32)
            .is_some_and(|v| v <= SPARSE_LIMIT)
        {
            let a = self.poly(s, coeffs, None);
            let b = self.poly(d, coeffs, None);
            return (a[..keep].to_vec(), b[..keep].to_vec());
        }
        let n = len.next_power_of_two();
        let mut z = self.packed(s, d, n);
        let i = C::new(0.0, 1.0);
        map_split(&mut z, |a, b| horner(a, coeffs) + i * horner(b, coeffs));
        self.unpack(z, keep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    fn wave(n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (i as f64 * 0.37 + phase).sin().abs() * 1e-3)
            .collect()
    }

    #[test]
    fn fft_conv_matches_direct() {
        let c = Convolver::new();
        let a = wave(300, 0.1);
        let b = wave(257, 1.3);
        let got = c.conv(&a, &b);
        let want = direct(&a, &b);
        assert_eq!(got.len(), want.len());
        for (x, y) in got.iter().zip(&want) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn sparse_conv_is_exact() {
        let c = Convolver::new();
        let a = [0.0, 0.3, 0.0, 0.7];
        let b = [0.5, 0.0, 0.5];
        assert_eq!(c.conv(&a, &b), direct(&a, &b));
    }

    #[test]
    fn poly_matches_repeated_conv() {
        let c = Convolver::new();
        let a = wave(200, 0.4);
        let pre = wave(200, 2.0);
        let coeffs = [0.1, 0.0, 0.5, 0.4];
        let a2 = direct(&a, &a);
        let a3 = direct(&a2, &a);
        let mut want = vec![0.0; a3.len()];
        want[0] += 0.1;
        for (i, v) in a2.iter().enumerate() {
            want[i] += 0.5 * v;
        }
        for (i, v) in a3.iter().enumerate() {
            want[i] += 0.4 * v;
        }
        let want = direct(&want, &pre);
        let got = c.poly(&a, &coeffs, Some(&pre));
        assert_eq!(got.len(), want.len());
        for (x, y) in got.iter().zip(&want) {
            assert!((x - y).abs() < 1e-14);
        }
        let (s, d) = c.poly_pair(&a, &pre, &coeffs, 50);
        let ws = c.poly(&a, &coeffs, None);
        let wd = c.poly(&pre, &coeffs, None);
        for i in 0..50 {
            assert!((s[i] - ws[i]).abs() < 1e-14);
            assert!((d[i] - wd[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn pair_conv_matches_direct() {
        let c = Convolver::new();
        let (a1, a2, b1, b2) = (
            wave(300, 0.0),
            wave(300, 1.0),
            wave(300, 2.0),
            wave(300, 3.0),
        );
        let (x, y) = c.conv_pair((&a1, &a2), (&b1, &b2), 400);
        let (wx, wy) = (direct(&a1, &b1), direct(&a2, &b2));
        for i in 0..400 {
            assert!((x[i] - wx[i]).abs() < 1e-14);
            assert!((y[i] - wy[i]).abs() < 1e-14);
        }
    }
}

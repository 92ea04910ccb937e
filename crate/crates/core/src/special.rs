//! Bessel and Hankel functions of integer order and real argument, and the
//! 2D Helmholtz fundamental solution built on them.
//!
//! Evaluation strategy:
//!
//! * `x < 25`: Miller's backward recurrence for `J_n`, normalized with
//!   `J_0 + 2 Σ J_2k = 1`; `Y_0` and `Y_1` from their Neumann series in the
//!   same `J` values.
//! * `x ≥ 25`: Hankel's asymptotic expansion for orders 0 and 1, forward
//!   recurrence for `J_n` while `n ≤ x` and a backward sweep beyond.
//! * `Y_n`, `n ≥ 2`: forward recurrence (always stable).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Largest order accepted by the public evaluators.
pub const MAX_ORDER: u32 = 60;
/// Largest argument accepted by the public evaluators.
pub const MAX_ARGUMENT: f64 = 1.0e4;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const ASYMPTOTIC_THRESHOLD: f64 = 25.0;
const RESCALE_LIMIT: f64 = 1.0e250;

fn check_domain(order: u32, x: f64, strictly_positive: bool) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::Domain(format!(
            "order {order} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    if !x.is_finite() || x < 0.0 || x > MAX_ARGUMENT {
        return Err(Error::Domain(format!(
            "argument {x} outside [0, {MAX_ARGUMENT}]"
        )));
    }
    if strictly_positive && x == 0.0 {
        return Err(Error::Domain(
            "second-kind functions are singular at x = 0".into(),
        ));
    }
    Ok(())
}

/// `J_order(x)`.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    check_domain(order, x, false)?;
    Ok(bessel_j_seq(order as usize, x)[order as usize])
}

/// `Y_order(x)`, `x > 0`.
pub fn bessel_y(order: u32, x: f64) -> Result<f64> {
    check_domain(order, x, true)?;
    Ok(bessel_y_seq(order as usize, x)[order as usize])
}

/// `H^(1)_order(x) = J_order(x) + i Y_order(x)`, `x > 0`.
pub fn hankel1(order: u32, x: f64) -> Result<Complex64> {
    check_domain(order, x, true)?;
    Ok(hankel1_seq(order as usize, x)[order as usize])
}

/// The 2D fundamental solution `Φ(x, y) = (i/4) H^(1)_0(k|x − y|)`.
pub fn fundamental_solution(k: f64, x: Point, y: Point) -> Result<Complex64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
    }
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::Singular(
            "fundamental solution evaluated at its source point".into(),
        ));
    }
    Ok(Complex64::new(0.0, 0.25) * hankel1_0(k * r))
}

/// Normalization of the 2D far field of `Φ(·, y)`: `Φ(x, y) ≈ γ e^{ik|x|}/√|x| · e^{−ik x̂·y}`.
pub fn farfield_constant(k: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (8.0 * PI * k).sqrt(), PI / 4.0)
}

/// `(J_0, J_1, Y_0, Y_1)` at `x > 0` with no domain checks.
pub(crate) fn bessel01(x: f64) -> (f64, f64, f64, f64) {
    if x >= ASYMPTOTIC_THRESHOLD {
        let (j0, y0) = hankel_asymptotic(0, x);
        let (j1, y1) = hankel_asymptotic(1, x);
        (j0, j1, y0, y1)
    } else {
        let js = miller_j(1, x);
        let (y0, y1) = neumann_y01(&js, x);
        (js[0], js[1], y0, y1)
    }
}

pub(crate) fn hankel1_0(x: f64) -> Complex64 {
    let (j0, _, y0, _) = bessel01(x);
    Complex64::new(j0, y0)
}

/// `J_0(x) .. J_nmax(x)` for `x ≥ 0`.
pub(crate) fn bessel_j_seq(nmax: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; nmax + 1];
        out[0] = 1.0;
        return out;
    }
    if x < ASYMPTOTIC_THRESHOLD {
        let mut js = miller_j(nmax, x);
        js.truncate(nmax + 1);
        return js;
    }
    let (j0, _) = hankel_asymptotic(0, x);
    let (j1, _) = hankel_asymptotic(1, x);
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(j0);
    if nmax == 0 {
        return out;
    }
    out.push(j1);
    // Forward recurrence is stable while the order stays below the argument.
    let forward_top = nmax.min(x.floor() as usize);
    for n in 1..forward_top {
        let next = 2.0 * n as f64 / x * out[n] - out[n - 1];
        out.push(next);
    }
    if forward_top >= nmax {
        return out;
    }
    // Orders above x: backward sweep matched to the forward values at the
    // two highest forward orders.
    let start = miller_start(nmax, x);
    let mut tail = vec![0.0; start + 2];
    tail[start] = 1.0;
    for n in (1..=start).rev() {
        tail[n - 1] = 2.0 * n as f64 / x * tail[n] - tail[n + 1];
        if tail[n - 1].abs() > RESCALE_LIMIT {
            for v in tail[n - 1..].iter_mut() {
                *v /= RESCALE_LIMIT;
            }
        }
        if n - 1 == forward_top - 1 {
            break;
        }
    }
    let a = forward_top - 1;
    let b = forward_top;
    let num = out[a] * tail[a] + out[b] * tail[b];
    let den = tail[a] * tail[a] + tail[b] * tail[b];
    let scale = num / den;
    for n in forward_top + 1..=nmax {
        out.push(tail[n] * scale);
    }
    out
}

/// `Y_0(x) .. Y_nmax(x)` for `x > 0`.
pub(crate) fn bessel_y_seq(nmax: usize, x: f64) -> Vec<f64> {
    let (y0, y1) = if x >= ASYMPTOTIC_THRESHOLD {
        (hankel_asymptotic(0, x).1, hankel_asymptotic(1, x).1)
    } else {
        neumann_y01(&miller_j(1, x), x)
    };
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(y0);
    if nmax >= 1 {
        out.push(y1);
    }
    for n in 1..nmax {
        let next = 2.0 * n as f64 / x * out[n] - out[n - 1];
        out.push(next);
    }
    out
}

/// `H^(1)_0(x) .. H^(1)_nmax(x)` for `x > 0`.
pub(crate) fn hankel1_seq(nmax: usize, x: f64) -> Vec<Complex64> {
    let js = bessel_j_seq(nmax, x);
    let ys = bessel_y_seq(nmax, x);
    js.into_iter()
        .zip(ys)
        .map(|(j, y)| Complex64::new(j, y))
        .collect()
}

fn miller_start(nmax: usize, x: f64) -> usize {
    let top = (nmax as f64).max(x.ceil());
    let m = top as usize + 25 + (40.0 * top).sqrt().ceil() as usize;
    m + (m % 2)
}

/// Miller's algorithm; returns `J_0 .. J_m` for the internal start order `m ≥ nmax`.
fn miller_j(nmax: usize, x: f64) -> Vec<f64> {
    let m = miller_start(nmax, x);
    let mut f = vec![0.0; m + 2];
    f[m] = 1.0e-30;
    for n in (1..=m).rev() {
        f[n - 1] = 2.0 * n as f64 / x * f[n] - f[n + 1];
        if f[n - 1].abs() > RESCALE_LIMIT {
            for v in f[n - 1..].iter_mut() {
                *v /= RESCALE_LIMIT;
            }
        }
    }
    let sum: f64 = f[0] + 2.0 * f[2..=m].iter().step_by(2).sum::<f64>();
    f.truncate(m + 1);
    for v in f.iter_mut() {
        *v /= sum;
    }
    f
}

/// Neumann series for `Y_0`, `Y_1` given `J_0 .. J_m` at the same argument.
fn neumann_y01(js: &[f64], x: f64) -> (f64, f64) {
    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let m = js.len() - 1;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k < m {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * js[2 * k] / k as f64;
        s1 += sign * (js[2 * k - 1] - js[2 * k + 1]) / k as f64;
        k += 1;
    }
    let y0 = 2.0 / PI * (log_term * js[0] - 2.0 * s0);
    let y1 = 2.0 / PI * (-js[0] / x + log_term * js[1] + s1);
    (y0, y1)
}

/// Hankel's large-argument expansion for orders 0 and 1: returns `(J, Y)`.
fn hankel_asymptotic(order: u32, x: f64) -> (f64, f64) {
    let mu = 4.0 * (order * order) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() >= prev || term == 0.0 {
            break;
        }
        prev = term.abs();
        // k odd contributes to Q, k even to P, with alternating signs.
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let (s, c) = x.sin_cos();
    let (cos_w, sin_w) = if order == 0 {
        ((c + s) * FRAC_1_SQRT_2, (s - c) * FRAC_1_SQRT_2)
    } else {
        ((s - c) * FRAC_1_SQRT_2, -(s + c) * FRAC_1_SQRT_2)
    };
    let amp = (2.0 / (PI * x)).sqrt();
    (amp * (p * cos_w - q * sin_w), amp * (p * sin_w + q * cos_w))
}

//! Independent reference values for integration tests.
//!
//! Bessel functions here come from their integral representations evaluated
//! with plain quadrature, so they share no code with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use phaseless_core::Complex64;

/// `J_n(x) = (1/π) ∫_0^π cos(nθ − x sin θ) dθ`, trapezoidal rule on the
/// periodic extension.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let m = 400;
    let h = 2.0 * PI / m as f64;
    let mut s = 0.0;
    for j in 0..m {
        let th = j as f64 * h;
        s += (n as f64 * th - x * th.sin()).cos();
    }
    s / m as f64
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `Y_n(x)` from the Schläfli-type integral.
pub fn bessel_y(n: i32, x: f64) -> f64 {
    let nf = n as f64;
    let first = simpson(|t| (x * t.sin() - nf * t).sin(), 0.0, PI, 20000) / PI;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let g = |t: f64| ((nf * t - x * t.sinh()).exp()) + sign * ((-nf * t - x * t.sinh()).exp());
    let mut upper = 1.0;
    while nf * upper - x * upper.sinh() > -45.0 {
        upper += 0.5;
    }
    let second = simpson(g, 0.0, upper, 100000) / PI;
    first - second
}

pub fn hankel(n: i32, x: f64) -> Complex64 {
    Complex64::new(bessel_j(n, x), bessel_y(n, x))
}

/// `H_0 … H_n` at `x`, with `Y_n` by upward recurrence from the integrals.
pub fn hankel_seq(n: i32, x: f64) -> Vec<Complex64> {
    let mut y = vec![bessel_y(0, x), bessel_y(1, x)];
    for m in 1..n {
        let next = 2.0 * m as f64 / x * y[m as usize] - y[m as usize - 1];
        y.push(next);
    }
    (0..=n)
        .map(|m| Complex64::new(bessel_j(m, x), y[m as usize]))
        .collect()
}

/// Derivative via `C_n' = (C_{n−1} − C_{n+1})/2`.
pub fn bessel_j_prime(n: i32, x: f64) -> f64 {
    0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
}

pub fn hankel_prime(n: i32, x: f64) -> Complex64 {
    0.5 * (hankel(n - 1, x) - hankel(n + 1, x))
}

/// Separable disk coefficients `a_n` of `u^s = Σ a_n iⁿ H_n(kr) e^{in(φ−θ_d)}`
/// for a disk of radius `a` centered at the origin.
pub enum DiskKind {
    Soft,
    /// `∂_ν u + η u = 0` with constant `η`.
    Impedance(Complex64),
    /// Penetrable disk with constant refractive index.
    Transmission(f64),
}

pub struct DiskSeries {
    pub k: f64,
    pub radius: f64,
    pub center: [f64; 2],
    pub coeffs: Vec<Complex64>, // index n + order
    pub order: i32,
}

impl DiskSeries {
    pub fn new(kind: DiskKind, k: f64, radius: f64, center: [f64; 2]) -> Self {
        let order = (k * radius).ceil() as i32 + 25;
        let ka = k * radius;
        let hs = hankel_seq(order + 1, ka);
        let coeffs = (-order..=order)
            .map(|n| {
                let m = n.abs();
                let j = bessel_j(m, ka);
                let h = hs[m as usize];
                let jp = bessel_j_prime(m, ka);
                let below = if m == 0 { -hs[1] } else { hs[m as usize - 1] };
                let hp = 0.5 * (below - hs[m as usize + 1]);
                match kind {
                    DiskKind::Soft => Complex64::new(-j, 0.0) / h,
                    DiskKind::Impedance(eta) => -(eta * j + k * jp) / (eta * h + k * hp),
                    DiskKind::Transmission(n0) => {
                        let k1 = k * n0.sqrt();
                        let j1 = bessel_j(m, k1 * radius);
                        let j1p = bessel_j_prime(m, k1 * radius);
                        let num = k1 * j1p * j - k * j1 * jp;
                        let den = k * j1 * hp - k1 * j1p * h;
                        num / den
                    }
                }
            })
            .collect();
        Self {
            k,
            radius,
            center,
            coeffs,
            order,
        }
    }

    fn phase(&self, d: f64) -> Complex64 {
        let k = self.k;
        Complex64::from_polar(1.0, k * (self.center[0] * d.cos() + self.center[1] * d.sin()))
    }

    /// Scattered field for incidence angle `d` at point `x`.
    pub fn scattered(&self, d: f64, x: [f64; 2]) -> Complex64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let r = dx.hypot(dy);
        let phi = dy.atan2(dx);
        let hs = hankel_seq(self.order, self.k * r);
        let mut s = Complex64::new(0.0, 0.0);
        for n in -self.order..=self.order {
            let c = self.coeffs[(n + self.order) as usize];
            let h = hs[n.unsigned_abs() as usize];
            let i_n = Complex64::new(0.0, 1.0).powi(n.abs());
            s += c * i_n * h * Complex64::from_polar(1.0, n as f64 * (phi - d));
        }
        s * self.phase(d)
    }

    /// Scattered field at `count` equispaced points on the circle of
    /// radius `r` about the disk center, sharing one Hankel sequence.
    pub fn scattered_on_ring(&self, d: f64, r: f64, count: usize) -> Vec<Complex64> {
        let hs = hankel_seq(self.order, self.k * r);
        (0..count)
            .map(|l| {
                let phi = 2.0 * PI * l as f64 / count as f64;
                let mut s = Complex64::new(0.0, 0.0);
                for n in -self.order..=self.order {
                    let c = self.coeffs[(n + self.order) as usize];
                    let i_n = Complex64::new(0.0, 1.0).powi(n.abs());
                    s += c * i_n * hs[n.unsigned_abs() as usize] * Complex64::from_polar(1.0, n as f64 * (phi - d));
                }
                s * self.phase(d)
            })
            .collect()
    }

    /// Far field for incidence angle `d` at observation angle `t`.
    pub fn farfield(&self, d: f64, t: f64) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for n in -self.order..=self.order {
            let c = self.coeffs[(n + self.order) as usize];
            s += c * Complex64::from_polar(1.0, n as f64 * (t - d));
        }
        let k = self.k;
        let shift = Complex64::from_polar(
            1.0,
            -k * (self.center[0] * t.cos() + self.center[1] * t.sin()),
        );
        (2.0 / (PI * k)).sqrt() * Complex64::from_polar(1.0, -PI / 4.0) * s * self.phase(d) * shift
    }
}

pub fn plane(k: f64, d: f64, x: [f64; 2]) -> Complex64 {
    Complex64::from_polar(1.0, k * (x[0] * d.cos() + x[1] * d.sin()))
}

/// Relative max-norm discrepancy.
pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    let den = b.iter().map(|y| y.norm()).fold(0.0, f64::max);
    num / den
}

/// Zero of a continuous function by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-15 * m.abs().max(1.0) {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

//! Lippmann–Schwinger solver for scattering by an inhomogeneous medium.
//!
//! The total field solves `u = u^i + k² ∫ Φ(·, y) (n(y) − 1) u(y) dy` on the
//! cell centers of the index grid. The discrete volume potential is a
//! two-level Toeplitz matrix applied by zero-padded FFT convolution, and the
//! system is solved by restarted GMRES.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::FarField;
use crate::obstacle::{FieldSamples, FieldTag};
use crate::quadrature::gauss_legendre;
use crate::scene::{Incidence, IncidentField, MediumIndex, Scatterer, Scene};
use crate::special::{bessel01, farfield_constant};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative residual the iterative solve has to reach.
pub const GMRES_TOLERANCE: f64 = 1e-10;
const RESTART: usize = 60;
const MAX_ITERATIONS: usize = 3000;
/// Cell offsets (in the max norm) whose kernel integrals are computed by
/// quadrature rather than by the midpoint rule.
const NEAR_OFFSETS: i64 = 3;

/// Total field on the cell centers of a medium grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeField {
    pub grid: MediumIndex,
    pub k: f64,
    pub values: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Discretized volume potential for one grid and wavenumber.
pub struct MediumSolver {
    index: MediumIndex,
    k: f64,
    contrast: Vec<Complex64>,
    kernel_hat: Vec<Complex64>,
    padded: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl MediumSolver {
    pub fn new(index: &MediumIndex, k: f64) -> Result<Self> {
        index.validate()?;
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Invalid(format!("wavenumber must be positive, got {k}")));
        }
        let m = index.cells;
        let p = 2 * m;
        let h = index.cell_size();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(p);
        let inverse = planner.plan_fft_inverse(p);
        let near = near_cell_integrals(k, h);
        let far_factor = h * h * (1.0 - k * k * h * h / 24.0);
        let mut kernel = vec![ZERO; p * p];
        kernel.par_chunks_mut(p).enumerate().for_each(|(r, row)| {
            let a = if r < m { r as i64 } else { r as i64 - p as i64 };
            if r == m {
                return;
            }
            for (c, slot) in row.iter_mut().enumerate() {
                if c == m {
                    continue;
                }
                let b = if c < m { c as i64 } else { c as i64 - p as i64 };
                *slot = if a.abs() <= NEAR_OFFSETS && b.abs() <= NEAR_OFFSETS {
                    near[((a + NEAR_OFFSETS) * (2 * NEAR_OFFSETS + 1) + b + NEAR_OFFSETS) as usize]
                } else {
                    let r = h * ((a * a + b * b) as f64).sqrt();
                    let (j0, _, y0, _) = bessel01(k * r);
                    I * 0.25 * Complex64::new(j0, y0) * far_factor
                };
            }
        });
        let mut solver = Self {
            index: index.clone(),
            k,
            contrast: index.values.iter().map(|v| v - 1.0).collect(),
            kernel_hat: Vec::new(),
            padded: p,
            forward,
            inverse,
        };
        solver.fft2(&mut kernel, false);
        solver.kernel_hat = kernel;
        Ok(solver)
    }

    pub fn for_scene(scene: &Scene) -> Result<Self> {
        match &scene.scatterer {
            Scatterer::Medium(index) => Self::new(index, scene.wavenumber),
            _ => Err(Error::Invalid("scene does not contain a medium".into())),
        }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn index(&self) -> &MediumIndex {
        &self.index
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let p = self.padded;
        let plan = if inverse { &self.inverse } else { &self.forward };
        data.par_chunks_mut(p).for_each(|row| plan.process(row));
        let mut t = transpose(data, p);
        t.par_chunks_mut(p).for_each(|row| plan.process(row));
        let back = transpose(&t, p);
        data.copy_from_slice(&back);
    }

    /// `∫ Φ(x_i, y) w(y) dy` on the cell centers for cellwise constant `w`.
    fn volume_potential(&self, w: &[Complex64]) -> Vec<Complex64> {
        let m = self.index.cells;
        let p = self.padded;
        let mut buf = vec![ZERO; p * p];
        for r in 0..m {
            buf[r * p..r * p + m].copy_from_slice(&w[r * m..(r + 1) * m]);
        }
        self.fft2(&mut buf, false);
        buf.par_iter_mut()
            .zip(self.kernel_hat.par_iter())
            .for_each(|(b, k)| *b *= k);
        self.fft2(&mut buf, true);
        let scale = 1.0 / (p * p) as f64;
        let mut out = Vec::with_capacity(m * m);
        for r in 0..m {
            out.extend(buf[r * p..r * p + m].iter().map(|v| v * scale));
        }
        out
    }

    fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let w: Vec<Complex64> = u.iter().zip(&self.contrast).map(|(a, c)| a * c).collect();
        let v = self.volume_potential(&w);
        let k2 = self.k * self.k;
        u.iter().zip(v).map(|(a, b)| a - b * k2).collect()
    }

    fn check_incident(&self, incident: &IncidentField) -> Result<()> {
        if (incident.k - self.k).abs() > 1e-14 * self.k {
            return Err(Error::Invalid(format!(
                "incident wavenumber {} differs from solver wavenumber {}",
                incident.k, self.k
            )));
        }
        if let Incidence::PointSource(y) = incident.kind {
            let b = self.index.grid_box();
            if y.x >= b.min.x && y.x <= b.max.x && y.y >= b.min.y && y.y <= b.max.y {
                return Err(Error::Geometry(
                    "point sources inside the medium grid are not supported".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn solve(&self, incident: &IncidentField) -> Result<VolumeField> {
        self.check_incident(incident)?;
        let m = self.index.cells;
        let mut rhs = Vec::with_capacity(m * m);
        for r in 0..m {
            for c in 0..m {
                rhs.push(incident.eval(self.index.cell_center(r, c))?);
            }
        }
        let (values, iterations, residual) = if self.contrast.iter().all(|c| *c == ZERO) {
            (rhs, 0, 0.0)
        } else {
            gmres(|x| self.apply(x), &rhs, GMRES_TOLERANCE)?
        };
        Ok(VolumeField {
            grid: self.index.clone(),
            k: self.k,
            values,
            iterations,
            residual,
        })
    }

    pub fn solve_many(&self, incidents: &[IncidentField]) -> Result<Vec<VolumeField>> {
        incidents.iter().map(|inc| self.solve(inc)).collect()
    }

    /// Scattered field `k² ∫ Φ(x, y)(n − 1)u dy` at points outside the
    /// support of the contrast.
    pub fn eval_scattered(&self, field: &VolumeField, points: &[Point]) -> Result<FieldSamples> {
        eval_scattered(field, points)
    }

    pub fn farfield(&self, field: &VolumeField, angles: &[f64]) -> FarField {
        medium_farfield(field, angles)
    }
}

/// Solves the medium problem of `scene` for one incident field.
pub fn solve_medium(scene: &Scene, incident: &IncidentField) -> Result<VolumeField> {
    MediumSolver::for_scene(scene)?.solve(incident)
}

/// `u∞(x̂) = γ k² ∫ e^{−ik x̂·y}(n(y) − 1) u(y) dy`, with the exponential
/// integrated exactly over each cell.
pub fn medium_farfield(field: &VolumeField, angles: &[f64]) -> FarField {
    let grid = &field.grid;
    let m = grid.cells;
    let h = grid.cell_size();
    let k = field.k;
    let gamma = farfield_constant(k);
    let sinc = |x: f64| if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    let values = angles
        .par_iter()
        .map(|&a| {
            let xh = Point::from_angle(a);
            let weight = h * h * sinc(0.5 * k * h * xh.x) * sinc(0.5 * k * h * xh.y);
            let mut acc = ZERO;
            for r in 0..m {
                for c in 0..m {
                    let i = r * m + c;
                    let contrast = grid.values[i] - 1.0;
                    if contrast == ZERO {
                        continue;
                    }
                    let y = grid.cell_center(r, c);
                    acc += contrast * field.values[i] * Complex64::from_polar(1.0, -k * xh.dot(y));
                }
            }
            gamma * k * k * weight * acc
        })
        .collect();
    FarField {
        k,
        angles: angles.to_vec(),
        values,
    }
}

/// Scattered field at points outside the contrast support.
pub fn eval_scattered(field: &VolumeField, points: &[Point]) -> Result<FieldSamples> {
    let grid = &field.grid;
    let h = grid.cell_size();
    if let Some(b) = grid.support_box() {
        for p in points {
            if p.x > b.min.x - h && p.x < b.max.x + h && p.y > b.min.y - h && p.y < b.max.y + h {
                return Err(Error::Geometry(format!(
                    "point ({}, {}) lies within one cell of the medium support",
                    p.x, p.y
                )));
            }
        }
    }
    let k = field.k;
    let m = grid.cells;
    let factor = k * k * h * h * (1.0 - k * k * h * h / 24.0);
    let values = points
        .par_iter()
        .map(|&x| {
            let mut acc = ZERO;
            for r in 0..m {
                for c in 0..m {
                    let i = r * m + c;
                    let contrast = grid.values[i] - 1.0;
                    if contrast == ZERO {
                        continue;
                    }
                    let d = (x - grid.cell_center(r, c)).norm();
                    let (j0, _, y0, _) = bessel01(k * d);
                    acc += contrast * field.values[i] * I * 0.25 * Complex64::new(j0, y0);
                }
            }
            acc * factor
        })
        .collect();
    Ok(FieldSamples {
        points: points.to_vec(),
        values,
        tag: FieldTag::Scattered,
    })
}

fn transpose(data: &[Complex64], p: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; p * p];
    out.par_chunks_mut(p).enumerate().for_each(|(c, col)| {
        for (r, v) in col.iter_mut().enumerate() {
            *v = data[r * p + c];
        }
    });
    out
}

/// `∫_cell Φ(0, y) dy` for the cells at offsets `|a|, |b| ≤ NEAR_OFFSETS`,
/// row-major in `(a, b)`.
fn near_cell_integrals(k: f64, h: f64) -> Vec<Complex64> {
    let (gx, gw) = gauss_legendre(12);
    let sub = 4;
    let width = 2 * NEAR_OFFSETS + 1;
    let mut out = Vec::with_capacity((width * width) as usize);
    for a in -NEAR_OFFSETS..=NEAR_OFFSETS {
        for b in -NEAR_OFFSETS..=NEAR_OFFSETS {
            if a == 0 && b == 0 {
                out.push(self_cell_integral(k, h));
                continue;
            }
            let (cy, cx) = (a as f64 * h, b as f64 * h);
            let hs = h / sub as f64;
            let mut acc = ZERO;
            for si in 0..sub {
                for sj in 0..sub {
                    let y0 = cy - h / 2.0 + (si as f64 + 0.5) * hs;
                    let x0 = cx - h / 2.0 + (sj as f64 + 0.5) * hs;
                    for (u, wu) in gx.iter().zip(&gw) {
                        for (v, wv) in gx.iter().zip(&gw) {
                            let r = (x0 + 0.5 * hs * u).hypot(y0 + 0.5 * hs * v);
                            let (j0, _, y0v, _) = bessel01(k * r);
                            acc += Complex64::new(j0, y0v) * (wu * wv);
                        }
                    }
                }
            }
            out.push(I * 0.25 * acc * (0.25 * hs * hs));
        }
    }
    out
}

/// `∫_{[−h/2, h/2]²} Φ(0, y) dy` through the radial antiderivative
/// `∫_0^R H₀(kr) r dr = R H₁(kR)/k + 2i/(πk²)`.
fn self_cell_integral(k: f64, h: f64) -> Complex64 {
    let (gx, gw) = gauss_legendre(32);
    let mut acc = ZERO;
    for (x, w) in gx.iter().zip(&gw) {
        let theta = FRAC_PI_4 * 0.5 * (x + 1.0);
        let r = 0.5 * h / theta.cos();
        let (_, j1, _, y1) = bessel01(k * r);
        acc += Complex64::new(j1, y1) * (r / k) * (w * FRAC_PI_4 * 0.5);
    }
    // Eight congruent triangles; constant term integrates over 2π.
    I * 0.25 * (acc * 8.0 + I * 2.0 / (PI * k * k) * (2.0 * PI))
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES with modified Gram–Schmidt and Givens rotations; returns
/// the solution, the iteration count and the final relative residual.
fn gmres(
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    b: &[Complex64],
    tol: f64,
) -> Result<(Vec<Complex64>, usize, f64)> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![ZERO; n], 0, 0.0));
    }
    let mut x = vec![ZERO; n];
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < MAX_ITERATIONS {
        let ax = apply(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            return Ok((x, iterations, rel));
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<Complex64>> = Vec::new();
        let mut cs: Vec<(f64, Complex64)> = Vec::new();
        let mut g = vec![Complex64::new(beta, 0.0)];
        for j in 0..RESTART {
            iterations += 1;
            let mut w = apply(&basis[j]);
            let mut col = Vec::with_capacity(j + 2);
            for v in &basis {
                let hij = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hij * vi;
                }
                col.push(hij);
            }
            let wn = norm(&w);
            col.push(Complex64::new(wn, 0.0));
            for (i, &(c, s)) in cs.iter().enumerate() {
                let t = c * col[i] + s * col[i + 1];
                col[i + 1] = -s.conj() * col[i] + c * col[i + 1];
                col[i] = t;
            }
            let (a, bb) = (col[j], col[j + 1]);
            let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if a.norm() == 0.0 {
                (0.0, Complex64::new(1.0, 0.0))
            } else {
                let c = a.norm() / denom;
                (c, a / a.norm() * bb.conj() / denom)
            };
            col[j] = c * a + s * bb;
            col[j + 1] = ZERO;
            cs.push((c, s));
            let gj = g[j];
            g.push(-s.conj() * gj);
            g[j] = c * gj;
            hess.push(col);
            rel = g[j + 1].norm() / bnorm;
            if rel <= tol || wn == 0.0 || iterations >= MAX_ITERATIONS {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let kdim = hess.len();
        let mut y = vec![ZERO; kdim];
        for i in (0..kdim).rev() {
            let mut s = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                s -= hess[l][i] * yl;
            }
            y[i] = s / hess[i][i];
        }
        for (l, yl) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[l]) {
                *xi += yl * vi;
            }
        }
    }
    let ax = apply(&x);
    let r: Vec<Complex64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    rel = rel.max(norm(&r) / bnorm);
    Err(Error::Convergence {
        iterations,
        residual: rel,
    })
}

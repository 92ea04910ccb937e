//! Nyström solver for exterior scattering by sound-soft and impedance
//! obstacles.
//!
//! The scattered field is sought as a combined potential
//! `u^s = (D − iκ S) φ` with coupling `κ = k`, which is uniquely solvable at
//! every wavenumber. Weakly singular kernels are split as
//! `K(t, τ) = K₁(t, τ) ln(4 sin²((t − τ)/2)) + K₂(t, τ)` and integrated with
//! the periodic logarithmic quadrature; smooth parts use the trapezoidal rule.
//! The hypersingular operator of the impedance problem goes through Maue's
//! formula `T = d/ds S d/ds + k² ν·S ν` with spectral differentiation.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::FarField;
use crate::quadrature::Adaptive;
use crate::scene::{BoundaryCondition, IncidentField, Obstacle, Scatterer, Scene};
use crate::special::{bessel01, farfield_constant};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Smallest supported number of boundary nodes.
pub const MIN_NODES: usize = 32;
/// Largest supported number of boundary nodes.
pub const MAX_NODES: usize = 2048;

/// Values of the layer density at the nodes `t_j = 2πj/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDensity {
    pub values: Vec<Complex64>,
}

/// Which part of the field a [`FieldSamples`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldTag {
    Total,
    Scattered,
    Incident,
}

/// Field values at a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    pub points: Vec<Point>,
    pub values: Vec<Complex64>,
    pub tag: FieldTag,
}

/// Boundary nodes of an obstacle and the potentials that live on them.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    obstacle: Obstacle,
    k: f64,
    coupling: f64,
    t: Vec<f64>,
    z: Vec<Point>,
    dz: Vec<Point>,
    ddz: Vec<Point>,
    speed: Vec<f64>,
    normal: Vec<Point>,
    spacing: f64,
}

impl BoundaryMesh {
    pub fn new(obstacle: &Obstacle, k: f64, nodes: usize) -> Result<Self> {
        if nodes % 2 != 0 || !(MIN_NODES..=MAX_NODES).contains(&nodes) {
            return Err(Error::Invalid(format!(
                "node count must be even and in [{MIN_NODES}, {MAX_NODES}], got {nodes}"
            )));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Invalid(format!("wavenumber must be positive, got {k}")));
        }
        obstacle.validate()?;
        let curve = &obstacle.curve;
        let t: Vec<f64> = (0..nodes).map(|j| TAU * j as f64 / nodes as f64).collect();
        let z: Vec<Point> = t.iter().map(|&s| curve.point(s)).collect();
        let dz: Vec<Point> = t.iter().map(|&s| curve.derivative(s)).collect();
        let ddz: Vec<Point> = t.iter().map(|&s| curve.second_derivative(s)).collect();
        let speed: Vec<f64> = dz.iter().map(|d| d.norm()).collect();
        if speed.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Geometry("curve has a vanishing tangent".into()));
        }
        let normal = dz
            .iter()
            .zip(&speed)
            .map(|(d, s)| Point::new(d.y / s, -d.x / s))
            .collect();
        let spacing = speed.iter().cloned().fold(0.0, f64::max) * TAU / nodes as f64;
        Ok(Self {
            obstacle: obstacle.clone(),
            k,
            coupling: k,
            t,
            z,
            dz,
            ddz,
            speed,
            normal,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn obstacle(&self) -> &Obstacle {
        &self.obstacle
    }

    pub fn nodes(&self) -> &[Point] {
        &self.z
    }

    fn check_exterior(&self, x: Point) -> Result<()> {
        let (_, dist, inside) = self.obstacle.curve.locate(x);
        if inside || dist <= 1e-12 * (1.0 + x.norm()) {
            return Err(Error::Geometry(format!(
                "point ({}, {}) is not strictly outside the obstacle",
                x.x, x.y
            )));
        }
        Ok(())
    }

    /// Combined-potential kernel at target `x` from the source at parameter
    /// `τ`, including the arc-length factor: value and gradient in `x`.
    fn potential_kernel(&self, x: Point, tau: f64) -> [Complex64; 3] {
        let curve = &self.obstacle.curve;
        let y = curve.point(tau);
        let dz = curve.derivative(tau);
        self.kernel_at(x, y, dz)
    }

    fn kernel_at(&self, x: Point, y: Point, dz: Point) -> [Complex64; 3] {
        let k = self.k;
        let speed = dz.norm();
        let nun = Point::new(dz.y, -dz.x);
        let diff = x - y;
        let r = diff.norm();
        let (j0, j1, y0, y1) = bessel01(k * r);
        let h0 = Complex64::new(j0, y0);
        let h1 = Complex64::new(j1, y1);
        let nd = nun.dot(diff);
        // double layer: ∂_{ν(y)}Φ ds = (ik/4) H₁(kr)/r (ν·(x−y)) ds
        let g = I * (k / 4.0) * h1 / r;
        let dg = I * (k / 4.0) * (h0 * (k / r) - h1 * (2.0 / (r * r)));
        let phi = I * 0.25 * h0;
        let grad_phi = -I * (k / 4.0) * h1 / r;
        let c = -I * self.coupling;
        let value = g * nd + c * phi * speed;
        let gx = g * nun.x + dg * nd * diff.x / r + c * speed * grad_phi * diff.x;
        let gy = g * nun.y + dg * nd * diff.y / r + c * speed * grad_phi * diff.y;
        [value, gx, gy]
    }

    /// Trigonometric interpolant of nodal values (barycentric form, even N).
    fn interpolate(&self, values: &[Complex64], tau: f64) -> Complex64 {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for (j, (&tj, &v)) in self.t.iter().zip(values).enumerate() {
            let half = 0.5 * (tau - tj);
            let s = half.sin();
            if s.abs() < 1e-15 {
                return v;
            }
            let w = if j % 2 == 0 { 1.0 } else { -1.0 } * half.cos() / s;
            num += v * w;
            den += w;
        }
        num / den
    }

    fn potential(&self, density: &BoundaryDensity, x: Point, gradient: bool) -> [Complex64; 3] {
        let (t_star, dist, _) = self.obstacle.curve.locate(x);
        let n = self.len();
        if dist > 6.0 * self.spacing {
            let w = TAU / n as f64;
            let mut acc = [Complex64::new(0.0, 0.0); 3];
            for j in 0..n {
                let kern = self.kernel_at(x, self.z[j], self.dz[j]);
                for (a, kv) in acc.iter_mut().zip(kern) {
                    *a += kv * density.values[j] * w;
                }
            }
            return acc;
        }
        let scale = density
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
            .max(1e-300);
        let quad = Adaptive::new(16, 1e-13);
        // Panels aligned with the nearest boundary point.
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        let panels = 16;
        for p in 0..panels {
            let a = t_star - PI + TAU * p as f64 / panels as f64;
            let b = a + TAU / panels as f64;
            let integrand = |tau: f64| {
                let psi = self.interpolate(&density.values, tau);
                let kern = self.potential_kernel(x, tau);
                [kern[0] * psi, kern[1] * psi, kern[2] * psi]
            };
            if gradient {
                let part = quad.integrate(integrand, a, b, scale);
                for (s, v) in acc.iter_mut().zip(part) {
                    *s += v;
                }
            } else {
                acc[0] += quad.integrate(|tau| [integrand(tau)[0]], a, b, scale)[0];
            }
        }
        acc
    }

    /// `u^s` at exterior points.
    pub fn eval_scattered(&self, density: &BoundaryDensity, points: &[Point]) -> Result<FieldSamples> {
        self.check_density(density)?;
        for p in points {
            self.check_exterior(*p)?;
        }
        let values = points
            .par_iter()
            .map(|&x| self.potential(density, x, false)[0])
            .collect();
        Ok(FieldSamples {
            points: points.to_vec(),
            values,
            tag: FieldTag::Scattered,
        })
    }

    /// `u^s` and `∇u^s` at exterior points.
    pub fn eval_scattered_with_gradient(
        &self,
        density: &BoundaryDensity,
        points: &[Point],
    ) -> Result<Vec<[Complex64; 3]>> {
        self.check_density(density)?;
        for p in points {
            self.check_exterior(*p)?;
        }
        Ok(points
            .par_iter()
            .map(|&x| self.potential(density, x, true))
            .collect())
    }

    /// `u = u^i + u^s` at exterior points.
    pub fn eval_total(
        &self,
        density: &BoundaryDensity,
        incident: &IncidentField,
        points: &[Point],
    ) -> Result<FieldSamples> {
        let mut out = self.eval_scattered(density, points)?;
        for (v, p) in out.values.iter_mut().zip(points) {
            *v += incident.eval(*p)?;
        }
        out.tag = FieldTag::Total;
        Ok(out)
    }

    /// Far-field pattern of the scattered field at the observation angles.
    pub fn eval_farfield(&self, density: &BoundaryDensity, angles: &[f64]) -> Result<FarField> {
        self.check_density(density)?;
        let k = self.k;
        let gamma = farfield_constant(k);
        let w = TAU / self.len() as f64;
        let values = angles
            .iter()
            .map(|&a| {
                let xh = Point::from_angle(a);
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..self.len() {
                    let nun = Point::new(self.dz[j].y, -self.dz[j].x);
                    let kern = -I * k * xh.dot(nun) - I * self.coupling * self.speed[j];
                    acc += kern * Complex64::from_polar(1.0, -k * xh.dot(self.z[j])) * density.values[j];
                }
                gamma * acc * w
            })
            .collect();
        Ok(FarField {
            k,
            angles: angles.to_vec(),
            values,
        })
    }

    fn check_density(&self, density: &BoundaryDensity) -> Result<()> {
        if density.values.len() != self.len() {
            return Err(Error::Invalid(format!(
                "density has {} values, mesh has {} nodes",
                density.values.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn log_weights(&self) -> Vec<f64> {
        let n2 = self.len();
        let n = n2 / 2;
        (0..n2)
            .map(|d| {
                let t = PI * d as f64 / n as f64;
                let mut s = 0.0;
                for m in 1..n {
                    s += (m as f64 * t).cos() / m as f64;
                }
                -TAU / n as f64 * s - PI / (n * n) as f64 * (n as f64 * t).cos()
            })
            .collect()
    }

    /// Quadrature matrices of `2S`, `2K`, `2K'` and `2Φ` (no arc length).
    fn operator_matrices(&self) -> Operators {
        let n2 = self.len();
        let n = n2 / 2;
        let k = self.k;
        let rw = self.log_weights();
        let smooth_w = PI / n as f64;
        let rows: Vec<[Vec<Complex64>; 3]> = (0..n2)
            .into_par_iter()
            .map(|i| {
                let mut s = vec![Complex64::new(0.0, 0.0); n2];
                let mut kd = vec![Complex64::new(0.0, 0.0); n2];
                let mut ka = vec![Complex64::new(0.0, 0.0); n2];
                for j in 0..n2 {
                    let r_w = rw[(i + n2 - j) % n2];
                    let (l1, l2, m1, m2, a1, a2);
                    if i == j {
                        let d1 = self.dz[i];
                        let d2 = self.ddz[i];
                        let sp = self.speed[i];
                        let curv = (d1.x * d2.y - d1.y * d2.x) / (sp * sp);
                        l1 = Complex64::new(0.0, 0.0);
                        l2 = Complex64::new(curv / TAU, 0.0);
                        m1 = Complex64::new(-sp / TAU, 0.0);
                        m2 = (Complex64::new(0.0, 0.5)
                            - EULER_GAMMA / PI
                            - (k * sp / 2.0).ln() / PI)
                            * sp;
                        a1 = Complex64::new(0.0, 0.0);
                        a2 = Complex64::new(-curv / TAU, 0.0);
                    } else {
                        let diff = self.z[i] - self.z[j];
                        let r = diff.norm();
                        let (j0, j1, y0, y1) = bessel01(k * r);
                        let h0 = Complex64::new(j0, y0);
                        let h1 = Complex64::new(j1, y1);
                        let half = 0.5 * (self.t[i] - self.t[j]);
                        let ell = (4.0 * half.sin().powi(2)).ln();
                        let nun = Point::new(self.dz[j].y, -self.dz[j].x);
                        let stuff = -nun.dot(diff);
                        let l = I * (k / 2.0) * stuff * h1 / r;
                        l1 = Complex64::new(-k / TAU * stuff * j1 / r, 0.0);
                        l2 = l - l1 * ell;
                        let sp = self.speed[j];
                        let m = I * 0.5 * h0 * sp;
                        m1 = Complex64::new(-j0 * sp / TAU, 0.0);
                        m2 = m - m1 * ell;
                        let nd = self.normal[i].dot(diff);
                        let a = -I * (k / 2.0) * h1 / r * nd * sp;
                        a1 = Complex64::new(k / TAU * j1 / r * nd * sp, 0.0);
                        a2 = a - a1 * ell;
                    }
                    s[j] = m1 * r_w + m2 * smooth_w;
                    kd[j] = -(l1 * r_w + l2 * smooth_w);
                    ka[j] = a1 * r_w + a2 * smooth_w;
                }
                [s, kd, ka]
            })
            .collect();
        let s2 = DMatrix::from_fn(n2, n2, |i, j| rows[i][0][j]);
        let k2 = DMatrix::from_fn(n2, n2, |i, j| rows[i][1][j]);
        let k2p = DMatrix::from_fn(n2, n2, |i, j| rows[i][2][j]);
        Operators { s2, k2, k2p }
    }

    /// Trigonometric differentiation matrix on the nodes.
    fn differentiation_matrix(&self) -> DMatrix<Complex64> {
        let n2 = self.len();
        DMatrix::from_fn(n2, n2, |i, j| {
            if i == j {
                Complex64::new(0.0, 0.0)
            } else {
                let sign = if (i + n2 - j) % 2 == 0 { 1.0 } else { -1.0 };
                let half = 0.5 * (self.t[i] - self.t[j]);
                Complex64::new(0.5 * sign * half.cos() / half.sin(), 0.0)
            }
        })
    }

    fn impedance_values(&self) -> Option<Vec<Complex64>> {
        match &self.obstacle.bc {
            BoundaryCondition::SoundSoft => None,
            BoundaryCondition::Impedance { eta } => {
                Some(self.t.iter().map(|&t| eta.eval(t)).collect())
            }
        }
    }

    fn system_matrix(&self) -> DMatrix<Complex64> {
        let n2 = self.len();
        let ops = self.operator_matrices();
        let ic = I * self.coupling;
        let id = DMatrix::<Complex64>::identity(n2, n2);
        match self.impedance_values() {
            None => &id + &ops.k2 - &ops.s2 * ic,
            Some(eta) => {
                let k = self.k;
                // 2Φ kernel without arc length.
                let v = DMatrix::from_fn(n2, n2, |i, j| ops.s2[(i, j)] / self.speed[j]);
                let d = self.differentiation_matrix();
                let mut t2 = &d * &v * &d;
                for i in 0..n2 {
                    for j in 0..n2 {
                        t2[(i, j)] = t2[(i, j)] / self.speed[i]
                            + v[(i, j)] * (k * k * self.normal[i].dot(self.normal[j]) * self.speed[j]);
                    }
                }
                let mut b = t2 - (&ops.k2p - &id) * ic;
                let soft_part = &id + &ops.k2 - &ops.s2 * ic;
                for i in 0..n2 {
                    for j in 0..n2 {
                        b[(i, j)] += eta[i] * soft_part[(i, j)];
                    }
                }
                b
            }
        }
    }

    fn rhs(&self, incident: &IncidentField) -> Result<DVector<Complex64>> {
        let n2 = self.len();
        let eta = self.impedance_values();
        let mut out = DVector::zeros(n2);
        for i in 0..n2 {
            let u = incident.eval(self.z[i])?;
            out[i] = match &eta {
                None => -2.0 * u,
                Some(eta) => {
                    let (gx, gy) = incident.gradient(self.z[i])?;
                    let dn = gx * self.normal[i].x + gy * self.normal[i].y;
                    -2.0 * (dn + eta[i] * u)
                }
            };
        }
        Ok(out)
    }
}

struct Operators {
    s2: DMatrix<Complex64>,
    k2: DMatrix<Complex64>,
    k2p: DMatrix<Complex64>,
}

/// Assembled and factorized boundary system for one obstacle and wavenumber.
/// Solves for different incident fields reuse the factorization.
pub struct ObstacleSolver {
    mesh: BoundaryMesh,
    lu: LU<Complex64, Dyn, Dyn>,
}

impl ObstacleSolver {
    pub fn new(obstacle: &Obstacle, k: f64, nodes: usize) -> Result<Self> {
        let mesh = BoundaryMesh::new(obstacle, k, nodes)?;
        let matrix = mesh.system_matrix();
        let lu = matrix.lu();
        let diag: Vec<f64> = (0..mesh.len()).map(|i| lu.u()[(i, i)].norm()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 1e-14 * max) {
            return Err(Error::Numerical(format!(
                "boundary system is numerically singular (pivot ratio {:.3e})",
                min / max
            )));
        }
        Ok(Self { mesh, lu })
    }

    /// Builds the solver for a scene whose scatterer is an obstacle.
    pub fn for_scene(scene: &Scene) -> Result<Self> {
        match &scene.scatterer {
            Scatterer::Obstacle(o) => Self::new(o, scene.wavenumber, scene.discretization.nodes),
            _ => Err(Error::Invalid("scene does not contain an obstacle".into())),
        }
    }

    pub fn mesh(&self) -> &BoundaryMesh {
        &self.mesh
    }

    pub fn k(&self) -> f64 {
        self.mesh.k
    }

    fn check_source(&self, incident: &IncidentField) -> Result<()> {
        if (incident.k - self.mesh.k).abs() > 1e-14 * self.mesh.k {
            return Err(Error::Invalid(format!(
                "incident wavenumber {} differs from solver wavenumber {}",
                incident.k, self.mesh.k
            )));
        }
        if let crate::scene::Incidence::PointSource(y) = incident.kind {
            self.mesh.check_exterior(y)?;
        }
        Ok(())
    }

    pub fn solve(&self, incident: &IncidentField) -> Result<BoundaryDensity> {
        self.check_source(incident)?;
        let rhs = self.mesh.rhs(incident)?;
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("back-substitution failed".into()))?;
        Ok(BoundaryDensity {
            values: sol.iter().cloned().collect(),
        })
    }

    /// Solves for several incident fields concurrently.
    pub fn solve_many(&self, incidents: &[IncidentField]) -> Result<Vec<BoundaryDensity>> {
        incidents.par_iter().map(|inc| self.solve(inc)).collect()
    }

    pub fn eval_scattered(&self, density: &BoundaryDensity, points: &[Point]) -> Result<FieldSamples> {
        self.mesh.eval_scattered(density, points)
    }

    pub fn eval_total(
        &self,
        density: &BoundaryDensity,
        incident: &IncidentField,
        points: &[Point],
    ) -> Result<FieldSamples> {
        self.mesh.eval_total(density, incident, points)
    }

    pub fn eval_farfield(&self, density: &BoundaryDensity, angles: &[f64]) -> Result<FarField> {
        self.mesh.eval_farfield(density, angles)
    }

    /// Far field `w∞(x̂, y)` of the total field `Φ(·, y) + w^s(·, y)`.
    pub fn solve_point_source(&self, y: Point, angles: &[f64]) -> Result<FarField> {
        let k = self.mesh.k;
        let density = self.solve(&IncidentField::point_source(k, y))?;
        let mut ff = self.eval_farfield(&density, angles)?;
        let gamma = farfield_constant(k);
        for (v, &a) in ff.values.iter_mut().zip(angles) {
            *v += gamma * Complex64::from_polar(1.0, -k * Point::from_angle(a).dot(y));
        }
        Ok(ff)
    }
}

/// Solves the obstacle problem of `scene` for one incident field.
pub fn solve_obstacle(scene: &Scene, incident: &IncidentField, nodes: usize) -> Result<BoundaryDensity> {
    match &scene.scatterer {
        Scatterer::Obstacle(o) => ObstacleSolver::new(o, scene.wavenumber, nodes)?.solve(incident),
        _ => Err(Error::Invalid("scene does not contain an obstacle".into())),
    }
}

/// Point-source far field for an obstacle scene; the empty scene gives the
/// free-space pattern `γ e^{−ik x̂·y}`.
pub fn solve_point_source(scene: &Scene, y: Point, angles: &[f64]) -> Result<FarField> {
    match &scene.scatterer {
        Scatterer::Obstacle(_) => ObstacleSolver::for_scene(scene)?.solve_point_source(y, angles),
        Scatterer::None => {
            let k = scene.wavenumber;
            let gamma = farfield_constant(k);
            Ok(FarField {
                k,
                angles: angles.to_vec(),
                values: angles
                    .iter()
                    .map(|&a| gamma * Complex64::from_polar(1.0, -k * Point::from_angle(a).dot(y)))
                    .collect(),
            })
        }
        Scatterer::Medium(_) => Err(Error::Invalid(
            "point-source responses are only implemented for obstacles".into(),
        )),
    }
}

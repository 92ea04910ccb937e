//! Scatterer geometry, incident fields, and measurement sets.
//!
//! A [`Scene`] is the single description every solver and synthesizer
//! consumes. It is immutable once built; [`translate_scene`] returns a new one.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point};
use crate::special;

/// Incident or observation direction on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Direction {
    angle: f64,
}

impl Direction {
    /// Wraps `angle` into `[0, 2π)`.
    pub fn new(angle: f64) -> Self {
        let mut a = angle.rem_euclid(TAU);
        if a >= TAU {
            a = 0.0;
        }
        Self { angle: a }
    }

    pub fn angle(self) -> f64 {
        self.angle
    }

    pub fn unit(self) -> Point {
        Point::from_angle(self.angle)
    }
}

impl From<f64> for Direction {
    fn from(a: f64) -> Self {
        Direction::new(a)
    }
}

impl From<Direction> for f64 {
    fn from(d: Direction) -> f64 {
        d.angle
    }
}

/// Smooth closed boundary curve, parametrized counterclockwise on `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCurve {
    Circle { center: Point, radius: f64 },
    Kite { center: Point },
    Ellipse { center: Point, semi_axes: [f64; 2] },
}

impl BoundaryCurve {
    pub fn circle(center: Point, radius: f64) -> Self {
        BoundaryCurve::Circle { center, radius }
    }

    pub fn ellipse(center: Point, a: f64, b: f64) -> Self {
        BoundaryCurve::Ellipse {
            center,
            semi_axes: [a, b],
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            BoundaryCurve::Circle { center, .. }
            | BoundaryCurve::Kite { center }
            | BoundaryCurve::Ellipse { center, .. } => center,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BoundaryCurve::Circle { radius, .. } => radius > 0.0 && radius.is_finite(),
            BoundaryCurve::Kite { .. } => true,
            BoundaryCurve::Ellipse { semi_axes, .. } => {
                semi_axes.iter().all(|s| *s > 0.0 && s.is_finite())
            }
        };
        let center = self.center();
        if !ok || !center.x.is_finite() || !center.y.is_finite() {
            return Err(Error::Geometry(format!("invalid curve parameters: {self:?}")));
        }
        Ok(())
    }

    /// `p(t)`.
    pub fn point(&self, t: f64) -> Point {
        let (s, c) = t.sin_cos();
        match *self {
            BoundaryCurve::Circle { center, radius } => center + Point::new(c, s) * radius,
            BoundaryCurve::Kite { center } => {
                center + Point::new(c + 0.65 * (2.0 * t).cos() - 0.65, 1.5 * s)
            }
            BoundaryCurve::Ellipse { center, semi_axes } => {
                center + Point::new(semi_axes[0] * c, semi_axes[1] * s)
            }
        }
    }

    /// `p'(t)`.
    pub fn derivative(&self, t: f64) -> Point {
        let (s, c) = t.sin_cos();
        match *self {
            BoundaryCurve::Circle { radius, .. } => Point::new(-s, c) * radius,
            BoundaryCurve::Kite { .. } => Point::new(-s - 1.3 * (2.0 * t).sin(), 1.5 * c),
            BoundaryCurve::Ellipse { semi_axes, .. } => {
                Point::new(-semi_axes[0] * s, semi_axes[1] * c)
            }
        }
    }

    /// `p''(t)`.
    pub fn second_derivative(&self, t: f64) -> Point {
        let (s, c) = t.sin_cos();
        match *self {
            BoundaryCurve::Circle { radius, .. } => Point::new(-c, -s) * radius,
            BoundaryCurve::Kite { .. } => Point::new(-c - 2.6 * (2.0 * t).cos(), -1.5 * s),
            BoundaryCurve::Ellipse { semi_axes, .. } => {
                Point::new(-semi_axes[0] * c, -semi_axes[1] * s)
            }
        }
    }

    /// Outward unit normal at `p(t)`.
    pub fn normal(&self, t: f64) -> Point {
        let d = self.derivative(t);
        Point::new(d.y, -d.x) * (1.0 / d.norm())
    }

    pub fn translate(&self, shift: Point) -> Self {
        let mut out = self.clone();
        match &mut out {
            BoundaryCurve::Circle { center, .. }
            | BoundaryCurve::Kite { center }
            | BoundaryCurve::Ellipse { center, .. } => *center += shift,
        }
        out
    }

    pub fn bounding_box(&self) -> BoundingBox {
        match *self {
            BoundaryCurve::Circle { center, radius } => BoundingBox {
                min: center - Point::new(radius, radius),
                max: center + Point::new(radius, radius),
            },
            BoundaryCurve::Ellipse { center, semi_axes } => {
                let h = Point::new(semi_axes[0], semi_axes[1]);
                BoundingBox {
                    min: center - h,
                    max: center + h,
                }
            }
            BoundaryCurve::Kite { .. } => {
                let mut min = Point::new(f64::INFINITY, f64::INFINITY);
                let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for j in 0..4096 {
                    let p = self.point(TAU * j as f64 / 4096.0);
                    min = Point::new(min.x.min(p.x), min.y.min(p.y));
                    max = Point::new(max.x.max(p.x), max.y.max(p.y));
                }
                // Sampling slack; the curve is smooth so 4096 samples are within 1e-6.
                let pad = Point::new(1e-6, 1e-6);
                BoundingBox {
                    min: min - pad,
                    max: max + pad,
                }
            }
        }
    }

    /// Closest parameter, distance to the curve, and whether `p` lies inside.
    pub fn locate(&self, p: Point) -> (f64, f64, bool) {
        const SAMPLES: usize = 512;
        let mut best_t = 0.0;
        let mut best_d = f64::INFINITY;
        for j in 0..SAMPLES {
            let t = TAU * j as f64 / SAMPLES as f64;
            let d = (self.point(t) - p).norm();
            if d < best_d {
                best_d = d;
                best_t = t;
            }
        }
        // Newton on g(t) = (p(t) − p)·p'(t).
        let mut t = best_t;
        for _ in 0..50 {
            let diff = self.point(t) - p;
            let d1 = self.derivative(t);
            let d2 = self.second_derivative(t);
            let g = diff.dot(d1);
            let dg = d1.dot(d1) + diff.dot(d2);
            if dg <= 0.0 {
                break;
            }
            let step = g / dg;
            let step = step.clamp(-0.05, 0.05);
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let t = t.rem_euclid(TAU);
        let foot = self.point(t);
        let dist = (p - foot).norm();
        let (t, dist) = if dist <= best_d { (t, dist) } else { (best_t, best_d) };
        let inside = (p - self.point(t)).dot(self.normal(t)) < 0.0;
        (t, dist, inside)
    }
}

/// The built-in non-convex benchmark shape
/// `p(t) = center + (cos t + 0.65 cos 2t − 0.65, 1.5 sin t)`.
pub fn builtin_kite(center: Point) -> BoundaryCurve {
    BoundaryCurve::Kite { center }
}

/// Impedance coefficient as a function of the curve parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImpedanceProfile {
    /// `η(t) = c`.
    Constant(Complex64),
    /// `η(t) = mean + Σ_m cos_m cos(mt) + sin_m sin(mt)`, `m = 1, 2, ...`.
    Fourier {
        mean: Complex64,
        #[serde(default)]
        cos: Vec<Complex64>,
        #[serde(default)]
        sin: Vec<Complex64>,
    },
}

impl ImpedanceProfile {
    pub fn eval(&self, t: f64) -> Complex64 {
        match self {
            ImpedanceProfile::Constant(c) => *c,
            ImpedanceProfile::Fourier { mean, cos, sin } => {
                let mut v = *mean;
                for (m, c) in cos.iter().enumerate() {
                    v += c * ((m + 1) as f64 * t).cos();
                }
                for (m, s) in sin.iter().enumerate() {
                    v += s * ((m + 1) as f64 * t).sin();
                }
                v
            }
        }
    }
}

/// Boundary operator of an impenetrable obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// `u = 0`.
    SoundSoft,
    /// `∂_ν u + η u = 0`; `η = 0` is the sound-hard (Neumann) case.
    Impedance { eta: ImpedanceProfile },
}

impl BoundaryCondition {
    pub fn sound_hard() -> Self {
        BoundaryCondition::Impedance {
            eta: ImpedanceProfile::Constant(Complex64::new(0.0, 0.0)),
        }
    }

    pub fn impedance(eta: Complex64) -> Self {
        BoundaryCondition::Impedance {
            eta: ImpedanceProfile::Constant(eta),
        }
    }
}

/// An impenetrable obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub curve: BoundaryCurve,
    pub bc: BoundaryCondition,
}

impl Obstacle {
    pub fn new(curve: BoundaryCurve, bc: BoundaryCondition) -> Result<Self> {
        let o = Self { curve, bc };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        if let BoundaryCondition::Impedance { eta } = &self.bc {
            for j in 0..256 {
                let t = TAU * j as f64 / 256.0;
                let v = eta.eval(t);
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::Invalid(format!("impedance not finite at t = {t}")));
                }
                if v.im < 0.0 {
                    return Err(Error::Invalid(format!(
                        "impedance must satisfy Im η ≥ 0, got {v} at t = {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Piecewise-constant refractive index on a uniform square grid, `1` outside.
///
/// `values[row * cells + col]` is the index in the cell whose center is
/// `origin + h (col + 1/2, row + 1/2)`, with `origin` the lower-left corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumIndex {
    pub center: Point,
    pub side: f64,
    pub cells: usize,
    pub values: Vec<Complex64>,
}

impl MediumIndex {
    pub fn new(center: Point, side: f64, cells: usize, values: Vec<Complex64>) -> Result<Self> {
        let m = Self {
            center,
            side,
            cells,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Homogeneous disk of index `n0`, cell values weighted by the exact
    /// area fraction of each cell covered by the disk.
    pub fn disk(
        grid_center: Point,
        side: f64,
        cells: usize,
        disk_center: Point,
        radius: f64,
        n0: Complex64,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Geometry("disk radius must be positive".into()));
        }
        let h = side / cells as f64;
        let origin = grid_center - Point::new(side / 2.0, side / 2.0);
        let mut values = Vec::with_capacity(cells * cells);
        for row in 0..cells {
            for col in 0..cells {
                let x0 = origin.x + col as f64 * h - disk_center.x;
                let y0 = origin.y + row as f64 * h - disk_center.y;
                let frac = disk_rect_area(radius, x0, x0 + h, y0, y0 + h) / (h * h);
                values.push(Complex64::new(1.0, 0.0) + (n0 - 1.0) * frac);
            }
        }
        Self::new(grid_center, side, cells, values)
    }

    /// Reads a raster of `cells` rows, each holding `cells` (re, im) pairs.
    pub fn from_csv_raster(path: &Path, center: Point, side: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        let mut rows = 0;
        let mut width = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if nums.len() % 2 != 0 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "row must hold (re, im) pairs".into(),
                });
            }
            let w = nums.len() / 2;
            if *width.get_or_insert(w) != w {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("row has {w} cells, expected {}", width.unwrap()),
                });
            }
            values.extend(nums.chunks(2).map(|c| Complex64::new(c[0], c[1])));
            rows += 1;
        }
        if width != Some(rows) {
            return Err(Error::Parse {
                line: rows,
                message: format!("raster must be square, got {rows} rows of {width:?} cells"),
            });
        }
        Self::new(center, side, rows, values)
    }

    pub fn cell_size(&self) -> f64 {
        self.side / self.cells as f64
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        let h = self.cell_size();
        self.center - Point::new(self.side / 2.0, self.side / 2.0)
            + Point::new((col as f64 + 0.5) * h, (row as f64 + 0.5) * h)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cells;
        if n < 4 || self.values.len() != n * n || !(self.side > 0.0) {
            return Err(Error::Geometry(format!(
                "medium grid needs ≥ 4 cells per side and {} values, got {}",
                n * n,
                self.values.len()
            )));
        }
        for (i, v) in self.values.iter().enumerate() {
            if !(v.re > 0.0) || v.im < 0.0 || !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Invalid(format!(
                    "refractive index {v} at cell {i} violates Re n > 0, Im n ≥ 0"
                )));
            }
            let (row, col) = (i / n, i % n);
            let edge = row == 0 || col == 0 || row == n - 1 || col == n - 1;
            if edge && *v != Complex64::new(1.0, 0.0) {
                return Err(Error::Geometry(format!(
                    "refractive index must equal 1 on the outer cell ring (cell {row},{col})"
                )));
            }
        }
        Ok(())
    }

    /// Bounding box of the cells where `n ≠ 1`.
    pub fn support_box(&self) -> Option<BoundingBox> {
        let h = self.cell_size();
        let mut bb: Option<BoundingBox> = None;
        for (i, v) in self.values.iter().enumerate() {
            if *v == Complex64::new(1.0, 0.0) {
                continue;
            }
            let c = self.cell_center(i / self.cells, i % self.cells);
            let lo = c - Point::new(h / 2.0, h / 2.0);
            let hi = c + Point::new(h / 2.0, h / 2.0);
            bb = Some(match bb {
                None => BoundingBox { min: lo, max: hi },
                Some(b) => BoundingBox {
                    min: Point::new(b.min.x.min(lo.x), b.min.y.min(lo.y)),
                    max: Point::new(b.max.x.max(hi.x), b.max.y.max(hi.y)),
                },
            });
        }
        bb
    }

    /// The whole computational square.
    pub fn grid_box(&self) -> BoundingBox {
        let half = Point::new(self.side / 2.0, self.side / 2.0);
        BoundingBox {
            min: self.center - half,
            max: self.center + half,
        }
    }

    pub fn translate(&self, shift: Point) -> Self {
        let mut out = self.clone();
        out.center += shift;
        out
    }
}

/// Area of `{x² + y² ≤ r²} ∩ [x0, x1] × [y0, y1]`.
pub(crate) fn disk_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let a = x0.max(-r);
    let b = x1.min(r);
    if a >= b || y0 >= y1 {
        return 0.0;
    }
    // Between breakpoints the overlap height is min(y1, s) − max(y0, −s)
    // with s(x) = √(r² − x²); integrate each piece with the antiderivative
    // of s.
    let s = |x: f64| (r * r - x * x).max(0.0).sqrt();
    let big_s = |x: f64| 0.5 * (x * s(x) + r * r * (x / r).clamp(-1.0, 1.0).asin());
    let mut cuts = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < r {
            let xc = (r * r - y * y).sqrt();
            for c in [-xc, xc] {
                if c > a && c < b {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (l, u) = (w[0], w[1]);
        if u <= l {
            continue;
        }
        let mid = 0.5 * (l + u);
        let sm = s(mid);
        // upper boundary: y1 (constant) or +s
        let upper = if y1 < sm {
            y1 * (u - l)
        } else {
            big_s(u) - big_s(l)
        };
        let lower = if y0 > -sm {
            y0 * (u - l)
        } else {
            -(big_s(u) - big_s(l))
        };
        let top_mid = y1.min(sm);
        let bot_mid = y0.max(-sm);
        if top_mid > bot_mid {
            area += upper - lower;
        }
    }
    area.max(0.0)
}

/// What is being illuminated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scatterer {
    None,
    Obstacle(Obstacle),
    Medium(MediumIndex),
}

impl Scatterer {
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        match self {
            Scatterer::None => None,
            Scatterer::Obstacle(o) => Some(o.curve.bounding_box()),
            Scatterer::Medium(m) => Some(m.grid_box()),
        }
    }

    pub fn translate(&self, shift: Point) -> Self {
        match self {
            Scatterer::None => Scatterer::None,
            Scatterer::Obstacle(o) => Scatterer::Obstacle(Obstacle {
                curve: o.curve.translate(shift),
                bc: o.bc.clone(),
            }),
            Scatterer::Medium(m) => Scatterer::Medium(m.translate(shift)),
        }
    }
}

/// Where the phaseless data are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MeasurementSet {
    /// `count` equispaced points on `{x2 = height, start ≤ x1 ≤ end}`.
    LineSegment {
        height: f64,
        start: f64,
        end: f64,
        count: usize,
    },
    /// `count` equispaced points on the circle, the first at angle 0.
    Circle {
        center: Point,
        radius: f64,
        count: usize,
    },
}

impl MeasurementSet {
    pub fn count(&self) -> usize {
        match *self {
            MeasurementSet::LineSegment { count, .. } | MeasurementSet::Circle { count, .. } => {
                count
            }
        }
    }

    pub fn points(&self) -> Vec<Point> {
        match *self {
            MeasurementSet::LineSegment {
                height,
                start,
                end,
                count,
            } => {
                if count == 1 {
                    return vec![Point::new(0.5 * (start + end), height)];
                }
                (0..count)
                    .map(|m| {
                        let s = m as f64 / (count - 1) as f64;
                        Point::new(start + s * (end - start), height)
                    })
                    .collect()
            }
            MeasurementSet::Circle {
                center,
                radius,
                count,
            } => (0..count)
                .map(|m| center + Point::from_angle(TAU * m as f64 / count as f64) * radius)
                .collect(),
        }
    }

    /// Checks the placement invariants against the scatterer's bounding box.
    pub fn validate(&self, scatterer_box: Option<BoundingBox>) -> Result<()> {
        match *self {
            MeasurementSet::LineSegment {
                height,
                start,
                end,
                count,
            } => {
                if count == 0 || !(end > start) || !height.is_finite() {
                    return Err(Error::Geometry(
                        "line segment needs count ≥ 1 and end > start".into(),
                    ));
                }
                if let Some(bb) = scatterer_box {
                    if height <= bb.max.y {
                        return Err(Error::Geometry(format!(
                            "measurement line x2 = {height} is not above the scatterer (top {})",
                            bb.max.y
                        )));
                    }
                }
            }
            MeasurementSet::Circle {
                center,
                radius,
                count,
            } => {
                if count == 0 || !(radius > 0.0) {
                    return Err(Error::Geometry(
                        "measurement circle needs count ≥ 1 and radius > 0".into(),
                    ));
                }
                if let Some(bb) = scatterer_box {
                    for c in bb.corners() {
                        if (c - center).norm() >= radius {
                            return Err(Error::Geometry(format!(
                                "measurement circle of radius {radius} does not enclose the scatterer"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Incident field kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Incidence {
    Plane(Direction),
    Superposition(Direction, Direction),
    PointSource(Point),
}

/// An incident field at wavenumber `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentField {
    pub k: f64,
    pub kind: Incidence,
}

impl IncidentField {
    pub fn plane(k: f64, d: Direction) -> Self {
        Self {
            k,
            kind: Incidence::Plane(d),
        }
    }

    pub fn superposition(k: f64, d1: Direction, d2: Direction) -> Self {
        Self {
            k,
            kind: Incidence::Superposition(d1, d2),
        }
    }

    pub fn point_source(k: f64, y: Point) -> Self {
        Self {
            k,
            kind: Incidence::PointSource(y),
        }
    }

    /// Value at `x`.
    pub fn eval(&self, x: Point) -> Result<Complex64> {
        let k = self.k;
        match self.kind {
            Incidence::Plane(d) => Ok(plane_wave(k, d, x)),
            Incidence::Superposition(d1, d2) => Ok(plane_wave(k, d1, x) + plane_wave(k, d2, x)),
            Incidence::PointSource(y) => special::fundamental_solution(k, x, y),
        }
    }

    /// Gradient at `x`, as `(∂₁u, ∂₂u)`.
    pub fn gradient(&self, x: Point) -> Result<(Complex64, Complex64)> {
        let k = self.k;
        let plane_grad = |d: Direction| {
            let u = plane_wave(k, d, x) * Complex64::new(0.0, k);
            let e = d.unit();
            (u * e.x, u * e.y)
        };
        match self.kind {
            Incidence::Plane(d) => Ok(plane_grad(d)),
            Incidence::Superposition(d1, d2) => {
                let (a, b) = plane_grad(d1);
                let (c, e) = plane_grad(d2);
                Ok((a + c, b + e))
            }
            Incidence::PointSource(y) => {
                let diff = x - y;
                let r = diff.norm();
                if r == 0.0 {
                    return Err(Error::Singular("point source gradient at the source".into()));
                }
                // ∇Φ = −(ik/4) H₁(kr) (x − y)/r
                let (j0, j1, y0, y1) = special::bessel01(k * r);
                let _ = (j0, y0);
                let h1 = Complex64::new(j1, y1);
                let g = Complex64::new(0.0, -k / 4.0) * h1 / r;
                Ok((g * diff.x, g * diff.y))
            }
        }
    }

    pub fn is_plane_like(&self) -> bool {
        !matches!(self.kind, Incidence::PointSource(_))
    }
}

fn plane_wave(k: f64, d: Direction, x: Point) -> Complex64 {
    Complex64::from_polar(1.0, k * x.dot(d.unit()))
}

/// Equispaced incident directions plus the fixed reference direction `d₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionGrid {
    pub count: usize,
    #[serde(default = "default_d0")]
    pub d0_angle: f64,
}

fn default_d0() -> f64 {
    1.5 * PI
}

impl Default for DirectionGrid {
    fn default() -> Self {
        Self {
            count: 64,
            d0_angle: default_d0(),
        }
    }
}

impl DirectionGrid {
    pub fn new(count: usize, d0_angle: f64) -> Self {
        Self { count, d0_angle }
    }

    pub fn directions(&self) -> Vec<Direction> {
        (0..self.count)
            .map(|j| Direction::new(TAU * j as f64 / self.count as f64))
            .collect()
    }

    pub fn d0(&self) -> Direction {
        Direction::new(self.d0_angle)
    }

    /// Index of `d₀` in the grid when it coincides with a grid direction.
    pub fn d0_index(&self) -> Option<usize> {
        index_of_angle(&self.directions(), self.d0_angle)
    }
}

pub fn index_of_angle(dirs: &[Direction], angle: f64) -> Option<usize> {
    let target = Direction::new(angle);
    dirs.iter().position(|d| {
        let diff = (d.angle() - target.angle()).rem_euclid(TAU);
        diff < 1e-12 || TAU - diff < 1e-12
    })
}

/// Discretization knobs that are not part of the physical description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    /// Nyström nodes on the obstacle boundary.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    128
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
        }
    }
}

/// Complete description of one scattering configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub wavenumber: f64,
    pub scatterer: Scatterer,
    pub measurement: MeasurementSet,
    pub directions: DirectionGrid,
    #[serde(default)]
    pub discretization: Discretization,
}

impl Scene {
    pub fn new(
        wavenumber: f64,
        scatterer: Scatterer,
        measurement: MeasurementSet,
        directions: DirectionGrid,
    ) -> Result<Self> {
        let s = Self {
            wavenumber,
            scatterer,
            measurement,
            directions,
            discretization: Discretization::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.discretization.nodes = nodes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavenumber > 0.0) || !self.wavenumber.is_finite() {
            return Err(Error::Invalid(format!(
                "wavenumber must be positive, got {}",
                self.wavenumber
            )));
        }
        if self.directions.count == 0 {
            return Err(Error::Invalid("direction grid must not be empty".into()));
        }
        match &self.scatterer {
            Scatterer::None => {}
            Scatterer::Obstacle(o) => o.validate()?,
            Scatterer::Medium(m) => m.validate()?,
        }
        self.measurement.validate(self.scatterer.bounding_box())
    }

    pub fn incident(&self, d: Direction) -> IncidentField {
        IncidentField::plane(self.wavenumber, d)
    }

    /// Short content hash used to tag reports.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scene serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Shifts the scatterer by `shift`, leaving the measurement set in place.
pub fn translate_scene(scene: &Scene, shift: Point) -> Result<Scene> {
    let out = Scene {
        scatterer: scene.scatterer.translate(shift),
        ..scene.clone()
    };
    out.validate()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scene description files

/// Scatterer entry of a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum ScattererSpec {
    None,
    Obstacle(Obstacle),
    Medium(MediumSpec),
}

/// Medium entry of a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediumSpec {
    Disk {
        grid_center: Point,
        side: f64,
        cells: usize,
        center: Point,
        radius: f64,
        index: Complex64,
    },
    /// CSV raster, path relative to the scene file.
    Raster {
        path: PathBuf,
        center: Point,
        side: f64,
    },
}

/// On-disk scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub wavenumber: f64,
    pub scatterer: ScattererSpec,
    pub measurement: MeasurementSet,
    #[serde(default)]
    pub directions: DirectionGrid,
    #[serde(default)]
    pub discretization: Discretization,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Resolves raster references relative to `base_dir` and validates.
    pub fn build(&self, base_dir: &Path) -> Result<Scene> {
        let scatterer = match &self.scatterer {
            ScattererSpec::None => Scatterer::None,
            ScattererSpec::Obstacle(o) => Scatterer::Obstacle(o.clone()),
            ScattererSpec::Medium(MediumSpec::Disk {
                grid_center,
                side,
                cells,
                center,
                radius,
                index,
            }) => Scatterer::Medium(MediumIndex::disk(
                *grid_center,
                *side,
                *cells,
                *center,
                *radius,
                *index,
            )?),
            ScattererSpec::Medium(MediumSpec::Raster { path, center, side }) => {
                Scatterer::Medium(MediumIndex::from_csv_raster(
                    &base_dir.join(path),
                    *center,
                    *side,
                )?)
            }
        };
        let scene = Scene {
            wavenumber: self.wavenumber,
            scatterer,
            measurement: self.measurement.clone(),
            directions: self.directions,
            discretization: self.discretization,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Loads and builds a scene file.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let file = SceneFile::load(path)?;
    file.build(path.parent().unwrap_or_else(|| Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_scene() -> Scene {
        let obstacle = Obstacle::new(
            BoundaryCurve::circle(Point::ORIGIN, 1.0),
            BoundaryCondition::SoundSoft,
        )
        .unwrap();
        Scene::new(
            1.0,
            Scatterer::Obstacle(obstacle),
            MeasurementSet::Circle {
                center: Point::ORIGIN,
                radius: 3.0,
                count: 64,
            },
            DirectionGrid::default(),
        )
        .unwrap()
    }

    #[test]
    fn incident_values() {
        let d = Direction::new(0.3);
        let plane = IncidentField::plane(5.0, d);
        assert_eq!(plane.eval(Point::ORIGIN).unwrap(), Complex64::new(1.0, 0.0));
        let m = plane.eval(Point::new(3.7, -2.1)).unwrap().norm();
        assert!((m - 1.0).abs() < 1e-15);
        let x = Point::new(0.4, 1.9);
        let sup = IncidentField::superposition(5.0, d, d).eval(x).unwrap();
        assert!((sup - plane.eval(x).unwrap() * 2.0).norm() < 1e-15);
        let src = IncidentField::point_source(1.0, x);
        assert!(matches!(src.eval(x), Err(Error::Singular(_))));
    }

    #[test]
    fn kite_parametrization() {
        let c = Point::new(0.5, -1.0);
        let kite = builtin_kite(c);
        let p0 = kite.point(0.0) - c;
        assert!((p0.x - 1.0).abs() < 1e-15 && p0.y.abs() < 1e-15);
        let pi = kite.point(PI) - c;
        assert!((pi.x + 1.0).abs() < 1e-15 && pi.y.abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let curves = [
            builtin_kite(Point::new(0.2, 0.1)),
            BoundaryCurve::ellipse(Point::ORIGIN, 1.5, 0.7),
            BoundaryCurve::circle(Point::new(1.0, 2.0), 0.8),
        ];
        for curve in &curves {
            let mut errs = Vec::new();
            for &h in &[1e-2, 5e-3] {
                let mut worst: f64 = 0.0;
                for j in 0..64 {
                    let t = TAU * j as f64 / 64.0;
                    let fd = (curve.point(t + h) - curve.point(t - h)) * (0.5 / h);
                    worst = worst.max((fd - curve.derivative(t)).norm());
                    let fd2 = (curve.derivative(t + h) - curve.derivative(t - h)) * (0.5 / h);
                    worst = worst.max((fd2 - curve.second_derivative(t)).norm());
                }
                errs.push(worst);
            }
            // Second order: halving h quarters the error.
            assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
            assert!(errs[0] < 1e-3);
        }
    }

    #[test]
    fn locate_inside_and_outside() {
        let kite = builtin_kite(Point::ORIGIN);
        assert!(kite.locate(Point::new(0.0, 0.0)).2);
        assert!(!kite.locate(Point::new(3.0, 0.0)).2);
        let (t, d, inside) = kite.locate(kite.point(1.0) + kite.normal(1.0) * 1e-4);
        assert!(!inside);
        assert!((d - 1e-4).abs() < 1e-10);
        assert!((t - 1.0).abs() < 1e-8);
        let (_, _, inside) = kite.locate(kite.point(2.0) - kite.normal(2.0) * 1e-4);
        assert!(inside);
    }

    #[test]
    fn translate_identity_and_inverse() {
        let scene = circle_scene();
        let same = translate_scene(&scene, Point::ORIGIN).unwrap();
        assert_eq!(same, scene);
        let moved = translate_scene(&scene, Point::new(1.0, 0.0)).unwrap();
        match &moved.scatterer {
            Scatterer::Obstacle(o) => assert_eq!(o.curve.center(), Point::new(1.0, 0.0)),
            _ => unreachable!(),
        }
        assert_eq!(moved.measurement, scene.measurement);
        let back = translate_scene(&moved, Point::new(-1.0, 0.0)).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn translate_rechecks_measurement() {
        let scene = circle_scene();
        assert!(matches!(
            translate_scene(&scene, Point::new(2.5, 0.0)),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn line_segment_must_be_above() {
        let bb = BoundaryCurve::circle(Point::ORIGIN, 1.0).bounding_box();
        let line = MeasurementSet::LineSegment {
            height: 0.5,
            start: -4.0,
            end: 4.0,
            count: 16,
        };
        assert!(line.validate(Some(bb)).is_err());
        let line = MeasurementSet::LineSegment {
            height: 2.0,
            start: -4.0,
            end: 4.0,
            count: 16,
        };
        line.validate(Some(bb)).unwrap();
        let pts = line.points();
        assert_eq!(pts.len(), 16);
        assert!(pts.iter().all(|p| p.y == 2.0));
    }

    #[test]
    fn impedance_sign_is_enforced() {
        let bad = Obstacle::new(
            BoundaryCurve::circle(Point::ORIGIN, 1.0),
            BoundaryCondition::impedance(Complex64::new(1.0, -0.1)),
        );
        assert!(matches!(bad, Err(Error::Invalid(_))));
    }

    #[test]
    fn disk_area_fractions() {
        // Whole disk inside one big rectangle.
        let a = disk_rect_area(1.0, -2.0, 2.0, -2.0, 2.0);
        assert!((a - PI).abs() < 1e-14);
        // Quarter disk.
        let a = disk_rect_area(1.0, 0.0, 2.0, 0.0, 2.0);
        assert!((a - PI / 4.0).abs() < 1e-14);
        // Fully inside square.
        let a = disk_rect_area(1.0, -0.1, 0.1, 0.2, 0.3);
        assert!((a - 0.02).abs() < 1e-15);
        // Cut by y = 0.5 strip: segment area above y = 0.5.
        let a = disk_rect_area(1.0, -2.0, 2.0, 0.5, 2.0);
        let theta = 2.0 * (0.5f64).acos();
        let seg = 0.5 * (theta - theta.sin());
        assert!((a - seg).abs() < 1e-14);
        // Sum over a fine grid of cells equals π.
        let n = 37;
        let h = 2.4 / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x0 = -1.2 + i as f64 * h;
                let y0 = -1.2 + j as f64 * h;
                sum += disk_rect_area(1.0, x0, x0 + h, y0, y0 + h);
            }
        }
        assert!((sum - PI).abs() < 1e-12);
    }

    #[test]
    fn medium_ring_must_be_background() {
        let mut values = vec![Complex64::new(1.0, 0.0); 16];
        values[0] = Complex64::new(1.1, 0.0);
        assert!(MediumIndex::new(Point::ORIGIN, 1.0, 4, values).is_err());
    }

    #[test]
    fn scene_file_round_trip() {
        let text = r#"{
            "wavenumber": 2.0,
            "scatterer": {"type": "obstacle", "params": {
                "curve": {"kind": "kite", "center": [0.0, 0.0]},
                "bc": {"kind": "impedance", "eta": [0.5, 1.0]}}},
            "measurement": {"kind": "circle", "params": {"center": [0.0, 0.0], "radius": 5.0, "count": 32}},
            "directions": {"count": 16, "d0_angle": 4.71238898038469}
        }"#;
        let file: SceneFile = serde_json::from_str(text).unwrap();
        let scene = file.build(Path::new(".")).unwrap();
        assert_eq!(scene.directions.count, 16);
        assert_eq!(scene.discretization.nodes, 128);
        let again: SceneFile =
            serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(again, file);
    }

    #[test]
    fn direction_wraps() {
        assert!((Direction::new(-PI / 2.0).angle() - 1.5 * PI).abs() < 1e-15);
        assert_eq!(Direction::new(TAU).angle(), 0.0);
        let grid = DirectionGrid::new(64, 1.5 * PI);
        assert_eq!(grid.d0_index(), Some(48));
        assert_eq!(DirectionGrid::new(10, 0.1).d0_index(), None);
    }
}

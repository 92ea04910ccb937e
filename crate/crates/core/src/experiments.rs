//! Numerical checks of the identities behind the uniqueness argument:
//! mixed reciprocity, Green's representation, the Dirichlet eigenvalue
//! guard, and separation of phaseless data for distinct scatterers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{synthesize, PhaselessDataset};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::geometry::Point;
use crate::scene::{Direction, IncidentField, Scene};
use crate::special::{bessel_j, farfield_constant, fundamental_solution, hankel1};

/// Whether a check passes when its value is below or above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassIf {
    Below,
    Above,
}

/// Machine-readable outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub passed: bool,
    pub error: f64,
    pub threshold: f64,
    pub pass_if: PassIf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_hash: Option<String>,
    #[serde(default)]
    pub detail: serde_json::Value,
}

impl CheckReport {
    pub fn new(check: &str, error: f64, threshold: f64, pass_if: PassIf) -> Self {
        let passed = match pass_if {
            PassIf::Below => error <= threshold,
            PassIf::Above => error > threshold,
        };
        Self {
            check: check.into(),
            passed,
            error,
            threshold,
            pass_if,
            scene_hash: None,
            detail: serde_json::Value::Null,
        }
    }

    fn with_scene(mut self, scene: &Scene) -> Self {
        self.scene_hash = Some(scene.hash());
        self
    }

    fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }
}

/// Largest relative error of `w∞(−d, z) = γ u(z, d)` over the pairs.
pub fn check_mixed_reciprocity(scene: &Scene, pairs: &[(Point, Direction)], threshold: f64) -> Result<CheckReport> {
    if pairs.is_empty() {
        return Err(Error::Invalid("reciprocity check needs at least one pair".into()));
    }
    let model = ForwardModel::new(scene)?;
    let k = scene.wavenumber;
    let gamma = farfield_constant(k);
    let mut errors = Vec::with_capacity(pairs.len());
    for &(z, d) in pairs {
        let w = model.point_source_farfield(z, &[d.angle() + std::f64::consts::PI])?.values[0];
        let u = model.total(&IncidentField::plane(k, d), &[z])?[0];
        errors.push((w - gamma * u).norm() / (gamma * u).norm());
    }
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    Ok(CheckReport::new("reciprocity", worst, threshold, PassIf::Below)
        .with_scene(scene)
        .with_detail(json!({ "pair_errors": errors })))
}

/// Circle carrying the Cauchy data for [`check_green_representation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenCircle {
    pub center: Point,
    pub radius: f64,
    pub nodes: usize,
}

/// Reconstructs `u^s` at exterior probes from its Cauchy data on a circle
/// enclosing the scatterer and reports the largest error relative to the
/// largest probe value.
pub fn check_green_representation(
    scene: &Scene,
    incident: &IncidentField,
    probes: &[Point],
    circle: GreenCircle,
    threshold: f64,
) -> Result<CheckReport> {
    let GreenCircle { center, radius, nodes } = circle;
    if !(radius > 0.0) || nodes < 3 {
        return Err(Error::Invalid("representation circle needs a positive radius and at least 3 nodes".into()));
    }
    if let Some(bbox) = scene.scatterer.bounding_box() {
        if bbox.corners().iter().any(|c| (*c - center).norm() >= radius) {
            return Err(Error::Geometry("representation circle does not enclose the scatterer".into()));
        }
    }
    if let Some(p) = probes.iter().find(|p| (**p - center).norm() <= radius * (1.0 + 1e-9)) {
        return Err(Error::Geometry(format!(
            "probe ({}, {}) is not outside the representation circle",
            p.x, p.y
        )));
    }
    let model = ForwardModel::new(scene)?;
    let k = scene.wavenumber;
    let normals: Vec<Point> = (0..nodes)
        .map(|l| Point::from_angle(std::f64::consts::TAU * l as f64 / nodes as f64))
        .collect();
    let ys: Vec<Point> = normals.iter().map(|nu| center + *nu * radius).collect();
    let cauchy = model.scattered_with_gradient(incident, &ys)?;
    let exact = model.scattered(incident, probes)?;
    let ds = std::f64::consts::TAU * radius / nodes as f64;
    let mut rebuilt = Vec::with_capacity(probes.len());
    for &x in probes {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((y, nu), [us, gx, gy]) in ys.iter().zip(&normals).zip(&cauchy) {
            let diff = x - *y;
            let r = diff.norm();
            let dphi = Complex64::new(0.0, k / 4.0) * hankel1(1, k * r)? * (diff.dot(*nu) / r);
            let dnu = gx * nu.x + gy * nu.y;
            acc += us * dphi - dnu * fundamental_solution(k, x, *y)?;
        }
        rebuilt.push(acc * ds);
    }
    let scale = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = rebuilt
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let error = if scale > 0.0 { diff / scale } else { diff };
    Ok(CheckReport::new("green", error, threshold, PassIf::Below)
        .with_scene(scene)
        .with_detail(json!({ "nodes": nodes, "radius": radius, "probes": probes.len() })))
}

/// Smallest `|J_n(kρ)|` over `0 ≤ n ≤ ⌊kρ⌋`; `k²` is a Dirichlet eigenvalue of
/// the disk of radius ρ exactly when one of these vanishes, since `J_n` has
/// no positive zero below `n`.
pub fn check_eigen_guard(k: f64, rho: f64, threshold: f64) -> Result<CheckReport> {
    let x = k * rho;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("k·ρ must be positive and finite, got {x}")));
    }
    let top = x.floor() as u32;
    let mut worst = (f64::INFINITY, 0u32);
    for n in 0..=top {
        let v = bessel_j(n, x)?.abs();
        if v < worst.0 {
            worst = (v, n);
        }
    }
    let report = CheckReport::new("eigenguard", worst.0, threshold, PassIf::Above);
    let offending = (!report.passed).then_some(worst.1);
    Ok(report.with_detail(json!({ "k": k, "rho": rho, "max_order": top, "argmin_order": worst.1, "offending_order": offending })))
}

/// Location of the largest difference between two data sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatingEntry {
    /// `"single"` or `"pair"`.
    pub kind: &'static str,
    pub point: usize,
    pub direction: usize,
}

/// Separation of the phaseless data of two scenes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub delta: f64,
    pub entry: Option<DiscriminatingEntry>,
    pub scene_hash_a: String,
    pub scene_hash_b: String,
}

impl UniquenessReport {
    /// Passes when the data sets are separated by more than `threshold`
    /// (`distinct`) or agree to within it (`!distinct`).
    pub fn check(&self, threshold: f64, distinct: bool) -> CheckReport {
        let pass_if = if distinct { PassIf::Above } else { PassIf::Below };
        let mut report = CheckReport::new("uniqueness", self.delta, threshold, pass_if)
            .with_detail(json!({ "entry": self.entry, "scene_hash_b": self.scene_hash_b }));
        report.scene_hash = Some(self.scene_hash_a.clone());
        report
    }
}

/// Largest entrywise difference of single and superposition moduli.
pub fn dataset_distance(a: &PhaselessDataset, b: &PhaselessDataset) -> Result<(f64, Option<DiscriminatingEntry>)> {
    if a.singles.len() != b.singles.len() || a.direction_count() != b.direction_count() {
        return Err(Error::Invalid("data sets have different shapes".into()));
    }
    let mut best = (0.0, None);
    for (kind, x, y) in [("single", &a.singles, &b.singles), ("pair", &a.pairs, &b.pairs)] {
        for (m, (rx, ry)) in x.iter().zip(y).enumerate() {
            for (j, (u, v)) in rx.iter().zip(ry).enumerate() {
                let d = (u - v).abs();
                if d > best.0 || best.1.is_none() {
                    best = (d, Some(DiscriminatingEntry { kind, point: m, direction: j }));
                }
            }
        }
    }
    Ok(best)
}

/// Synthesizes exact phaseless data for both scenes and measures their
/// separation.
pub fn uniqueness_demo(a: &Scene, b: &Scene) -> Result<UniquenessReport> {
    if a.wavenumber != b.wavenumber || a.measurement != b.measurement || a.directions != b.directions {
        return Err(Error::Invalid(
            "scenes must share wavenumber, measurement set and direction grid".into(),
        ));
    }
    let (da, db) = rayon::join(|| synthesize(a, 0.0, 0), || synthesize(b, 0.0, 0));
    let (delta, entry) = dataset_distance(&da?, &db?)?;
    Ok(UniquenessReport {
        delta,
        entry,
        scene_hash_a: a.hash(),
        scene_hash_b: b.hash(),
    })
}

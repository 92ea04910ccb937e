//! JSON-configured verification suites.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use phaseless_core::experiments::{
    check_eigen_guard, check_green_representation, check_mixed_reciprocity, uniqueness_demo, CheckReport,
    GreenCircle, PassIf, UniquenessReport,
};
use phaseless_core::imaging::{equispaced_angles, translation_invariance_report, InvarianceReport};
use phaseless_core::scene::load_scene;
use phaseless_core::{Direction, Error, IncidentField, Point, Result, Scene};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Suite {
    Reciprocity,
    Green,
    Eigenguard,
    Invariance,
    Uniqueness,
}

/// Written to `--out`: every check with its verdict, plus suite extras.
#[derive(Serialize)]
pub struct Outcome {
    pub suite: &'static str,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniqueness: Option<UniquenessReport>,
}

impl Outcome {
    fn new(suite: &'static str, checks: Vec<CheckReport>) -> Self {
        Self {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
            invariance: None,
            uniqueness: None,
        }
    }
}

fn default_tolerance() -> f64 {
    1e-6
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Pair {
    z: Point,
    /// Incident direction angle.
    d: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReciprocityConfig {
    scene: PathBuf,
    pairs: Vec<Pair>,
    #[serde(default = "default_tolerance")]
    threshold: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GreenConfig {
    scene: PathBuf,
    /// Plane-wave direction angle.
    incident: f64,
    probes: Vec<Point>,
    circle: GreenCircle,
    #[serde(default = "default_tolerance")]
    threshold: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EigenConfig {
    k: f64,
    rho: f64,
    #[serde(default = "default_tolerance")]
    threshold: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InvarianceConfig {
    scene: PathBuf,
    shift: Point,
    /// Incident directions; defaults to the scene's grid.
    directions: Option<usize>,
    #[serde(default = "default_angles")]
    angles: usize,
    #[serde(default = "default_single")]
    single_threshold: f64,
    #[serde(default = "default_superposition")]
    superposition_threshold: f64,
}

fn default_angles() -> usize {
    64
}

fn default_single() -> f64 {
    1e-8
}

fn default_superposition() -> f64 {
    1e-2
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UniquenessConfig {
    scene_a: PathBuf,
    scene_b: PathBuf,
    threshold: f64,
    /// Expect separated data (`true`) or identical data (`false`).
    #[serde(default = "default_distinct")]
    distinct: bool,
}

fn default_distinct() -> bool {
    true
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Scene paths in a config are relative to the config file.
fn scene_at(config: &Path, scene: &Path) -> Result<Scene> {
    load_scene(&config.parent().unwrap_or_else(|| Path::new(".")).join(scene))
}

pub fn run(suite: Suite, config: &Path) -> Result<Outcome> {
    Ok(match suite {
        Suite::Reciprocity => {
            let c: ReciprocityConfig = read_config(config)?;
            let pairs: Vec<(Point, Direction)> = c.pairs.iter().map(|p| (p.z, Direction::new(p.d))).collect();
            let scene = scene_at(config, &c.scene)?;
            Outcome::new("reciprocity", vec![check_mixed_reciprocity(&scene, &pairs, c.threshold)?])
        }
        Suite::Green => {
            let c: GreenConfig = read_config(config)?;
            let scene = scene_at(config, &c.scene)?;
            let inc = IncidentField::plane(scene.wavenumber, Direction::new(c.incident));
            Outcome::new(
                "green",
                vec![check_green_representation(&scene, &inc, &c.probes, c.circle, c.threshold)?],
            )
        }
        Suite::Eigenguard => {
            let c: EigenConfig = read_config(config)?;
            Outcome::new("eigenguard", vec![check_eigen_guard(c.k, c.rho, c.threshold)?])
        }
        Suite::Invariance => {
            let c: InvarianceConfig = read_config(config)?;
            if c.angles == 0 || c.directions == Some(0) {
                return Err(Error::Invalid("angles and directions must be positive".into()));
            }
            let scene = scene_at(config, &c.scene)?;
            let count = c.directions.unwrap_or(scene.directions.count);
            let dirs: Vec<Direction> = equispaced_angles(count).into_iter().map(Direction::new).collect();
            let report = translation_invariance_report(&scene, c.shift, &dirs, &equispaced_angles(c.angles))?;
            let tag = |mut r: CheckReport| {
                r.scene_hash = Some(report.scene_hash.clone());
                r
            };
            let checks = vec![
                tag(CheckReport::new("single_invariance", report.single_discrepancy, c.single_threshold, PassIf::Below)),
                tag(CheckReport::new(
                    "superposition_breaking",
                    report.superposition_discrepancy,
                    c.superposition_threshold,
                    PassIf::Above,
                )),
            ];
            Outcome {
                invariance: Some(report),
                ..Outcome::new("invariance", checks)
            }
        }
        Suite::Uniqueness => {
            let c: UniquenessConfig = read_config(config)?;
            let (a, b) = (scene_at(config, &c.scene_a)?, scene_at(config, &c.scene_b)?);
            let report = uniqueness_demo(&a, &b)?;
            Outcome {
                uniqueness: Some(report.clone()),
                ..Outcome::new("uniqueness", vec![report.check(c.threshold, c.distinct)])
            }
        }
    })
}

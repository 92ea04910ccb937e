//! One interface over the forward solvers: fields of a scene for any
//! incident field.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::FarField;
use crate::medium::{medium_farfield, MediumSolver};
use crate::special::farfield_constant;
use crate::obstacle::ObstacleSolver;
use crate::scene::{Direction, IncidentField, Scatterer, Scene};

/// Step of the numerical differentiation stencil, in wavelengths over 2π.
const STENCIL_STEP: f64 = 1e-3;

/// Forward solver for a scene, set up once and reused across incident fields.
pub enum ForwardModel {
    Free { k: f64 },
    Obstacle(ObstacleSolver),
    Medium(MediumSolver),
}

impl ForwardModel {
    pub fn new(scene: &Scene) -> Result<Self> {
        scene.validate()?;
        Ok(match &scene.scatterer {
            Scatterer::None => ForwardModel::Free {
                k: scene.wavenumber,
            },
            Scatterer::Obstacle(_) => ForwardModel::Obstacle(ObstacleSolver::for_scene(scene)?),
            Scatterer::Medium(_) => ForwardModel::Medium(MediumSolver::for_scene(scene)?),
        })
    }

    pub fn k(&self) -> f64 {
        match self {
            ForwardModel::Free { k } => *k,
            ForwardModel::Obstacle(s) => s.k(),
            ForwardModel::Medium(s) => s.k(),
        }
    }

    /// Scattered field at `points`.
    pub fn scattered(&self, incident: &IncidentField, points: &[Point]) -> Result<Vec<Complex64>> {
        match self {
            ForwardModel::Free { .. } => Ok(vec![Complex64::new(0.0, 0.0); points.len()]),
            ForwardModel::Obstacle(s) => {
                let dens = s.solve(incident)?;
                Ok(s.eval_scattered(&dens, points)?.values)
            }
            ForwardModel::Medium(s) => {
                let field = s.solve(incident)?;
                Ok(s.eval_scattered(&field, points)?.values)
            }
        }
    }

    /// Total field `u^i + u^s` at `points`.
    pub fn total(&self, incident: &IncidentField, points: &[Point]) -> Result<Vec<Complex64>> {
        let mut u = self.scattered(incident, points)?;
        for (v, p) in u.iter_mut().zip(points) {
            *v += incident.eval(*p)?;
        }
        Ok(u)
    }

    /// Far-field pattern of the scattered field.
    pub fn farfield(&self, incident: &IncidentField, angles: &[f64]) -> Result<FarField> {
        match self {
            ForwardModel::Free { k } => Ok(FarField {
                k: *k,
                angles: angles.to_vec(),
                values: vec![Complex64::new(0.0, 0.0); angles.len()],
            }),
            ForwardModel::Obstacle(s) => {
                let dens = s.solve(incident)?;
                s.eval_farfield(&dens, angles)
            }
            ForwardModel::Medium(s) => Ok(medium_farfield(&s.solve(incident)?, angles)),
        }
    }

    /// Far field `w∞(x̂, z)` of the total field `Φ(·, z) + w^s(·, z)` of a
    /// point source at `z`.
    pub fn point_source_farfield(&self, z: Point, angles: &[f64]) -> Result<FarField> {
        let k = self.k();
        let mut ff = self.farfield(&IncidentField::point_source(k, z), angles)?;
        let gamma = farfield_constant(k);
        for (v, &a) in ff.values.iter_mut().zip(angles) {
            *v += gamma * Complex64::from_polar(1.0, -k * Point::from_angle(a).dot(z));
        }
        Ok(ff)
    }

    /// `[u^s, ∂₁u^s, ∂₂u^s]` at `points`. The medium model differentiates
    /// numerically with a fourth-order central stencil.
    pub fn scattered_with_gradient(&self, incident: &IncidentField, points: &[Point]) -> Result<Vec<[Complex64; 3]>> {
        match self {
            ForwardModel::Free { .. } => Ok(vec![[Complex64::new(0.0, 0.0); 3]; points.len()]),
            ForwardModel::Obstacle(s) => s.mesh().eval_scattered_with_gradient(&s.solve(incident)?, points),
            ForwardModel::Medium(s) => {
                let field = s.solve(incident)?;
                let h = STENCIL_STEP / self.k();
                let mut probes = points.to_vec();
                for &(dx, dy) in &[(1.0, 0.0), (0.0, 1.0)] {
                    for step in [-2.0, -1.0, 1.0, 2.0] {
                        probes.extend(points.iter().map(|&p| p + Point::new(dx * step * h, dy * step * h)));
                    }
                }
                let v = s.eval_scattered(&field, &probes)?.values;
                let n = points.len();
                let at = |block: usize, i: usize| v[(1 + block) * n + i];
                Ok((0..n)
                    .map(|i| {
                        let diff = |b: usize| (at(b, i) - at(b + 3, i) + (at(b + 2, i) - at(b + 1, i)) * 8.0) / (12.0 * h);
                        [v[i], diff(0), diff(4)]
                    })
                    .collect())
            }
        }
    }

    /// Total fields for plane waves from each direction; `out[m][j]` is the
    /// field at point `m` for direction `j`.
    pub fn total_plane_waves(
        &self,
        directions: &[Direction],
        points: &[Point],
    ) -> Result<Vec<Vec<Complex64>>> {
        let k = self.k();
        let cols: Vec<Vec<Complex64>> = directions
            .par_iter()
            .map(|&d| self.total(&IncidentField::plane(k, d), points))
            .collect::<Result<_>>()?;
        if cols.iter().any(|c| c.len() != points.len()) {
            return Err(Error::Numerical("field evaluation returned a short column".into()));
        }
        Ok((0..points.len())
            .map(|m| cols.iter().map(|c| c[m]).collect())
            .collect())
    }
}

//! Far-field patterns, near-to-far transforms, translation experiments and
//! backpropagation imaging.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::PhasedFields;
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::geometry::{BoundingBox, Point};
use crate::retrieval::{RadiatingBasis, RadiatingExpansion};
use crate::scene::{translate_scene, Direction, IncidentField, Scene};

/// Far-field samples `u∞(x̂)` at observation angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub k: f64,
    pub angles: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl FarField {
    /// The same pattern with every phase discarded.
    pub fn moduli_only(&self) -> FarField {
        FarField {
            values: self.values.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect(),
            ..self.clone()
        }
    }

    /// Writes `angle,re,im` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(["angle", "re", "im"]).map_err(csv_error)?;
        for (a, v) in self.angles.iter().zip(&self.values) {
            w.write_record([*a, v.re, v.im].map(fmt)).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` equispaced observation angles on `[0, 2π)`.
pub fn equispaced_angles(count: usize) -> Vec<f64> {
    (0..count).map(|l| TAU * l as f64 / count as f64).collect()
}

pub fn expansion_to_farfield(exp: &RadiatingExpansion, angles: &[f64]) -> FarField {
    exp.farfield(angles)
}

/// Fits outgoing expansions to the scattered parts of phased fields and
/// returns their far fields, one per incident direction.
pub fn farfields_from_fields(
    fields: &PhasedFields,
    center: Point,
    radius: f64,
    angles: &[f64],
) -> Result<Vec<FarField>> {
    let basis = RadiatingBasis::new(fields.k, center, radius, &fields.points)?;
    let incident = fields.incident();
    Ok((0..fields.directions.len())
        .map(|j| {
            let us: Vec<Complex64> = (0..fields.points.len())
                .map(|m| fields.values[m][j] - incident[m][j])
                .collect();
            basis.expansion(&us).farfield(angles)
        })
        .collect())
}

/// Discrepancies of phaseless far fields between a scene and its
/// translate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub shift: Point,
    /// `max ||u∞_z(x̂, d)| − |u∞(x̂, d)||`.
    pub single_discrepancy: f64,
    /// `max |u∞_z(x̂, d) − e^{ik(d − x̂)·z} u∞(x̂, d)|`.
    pub shift_law_error: f64,
    /// `max ||u∞_z(x̂, d, d₀)| − |u∞(x̂, d, d₀)||` for the superposed incidence.
    pub superposition_discrepancy: f64,
    pub scene_hash: String,
}

pub fn translation_invariance_report(
    scene: &Scene,
    shift: Point,
    directions: &[Direction],
    angles: &[f64],
) -> Result<InvarianceReport> {
    let shifted = translate_scene(scene, shift)?;
    let k = scene.wavenumber;
    let d0 = scene.directions.d0();
    let (base, moved) = rayon::join(|| ForwardModel::new(scene), || ForwardModel::new(&shifted));
    let (base, moved) = (base?, moved?);
    let rows: Vec<(f64, f64, f64)> = directions
        .par_iter()
        .map(|&d| {
            let plane = IncidentField::plane(k, d);
            let pair = IncidentField::superposition(k, d, d0);
            let (a, b) = (base.farfield(&plane, angles)?, moved.farfield(&plane, angles)?);
            let (pa, pb) = (base.farfield(&pair, angles)?, moved.farfield(&pair, angles)?);
            let mut row = (0.0f64, 0.0f64, 0.0f64);
            for (l, &ang) in angles.iter().enumerate() {
                let law = Complex64::from_polar(1.0, k * (d.unit() - Point::from_angle(ang)).dot(shift));
                row.0 = row.0.max((b.values[l].norm() - a.values[l].norm()).abs());
                row.1 = row.1.max((b.values[l] - law * a.values[l]).norm());
                row.2 = row.2.max((pb.values[l].norm() - pa.values[l].norm()).abs());
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let fold = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(InvarianceReport {
        shift,
        single_discrepancy: fold(|r| r.0),
        shift_law_error: fold(|r| r.1),
        superposition_discrepancy: fold(|r| r.2),
        scene_hash: scene.hash(),
    })
}

/// Square search region split into `cells × cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub center: Point,
    pub side: f64,
    pub cells: usize,
}

impl SearchGrid {
    pub fn new(center: Point, side: f64, cells: usize) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() || cells == 0 {
            return Err(Error::Invalid("search grid needs a positive side and at least one cell".into()));
        }
        Ok(Self { center, side, cells })
    }

    /// 128 × 128 cells over a square six scatterer diameters wide.
    pub fn around(bbox: BoundingBox) -> Result<Self> {
        Self::new(bbox.center(), 6.0 * bbox.diameter(), 128)
    }

    pub fn cell_size(&self) -> f64 {
        self.side / self.cells as f64
    }

    /// Center of the cell in row `row` (along x2) and column `col` (along x1).
    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        let h = self.cell_size();
        let origin = self.center - Point::new(self.side / 2.0, self.side / 2.0);
        origin + Point::new((col as f64 + 0.5) * h, (row as f64 + 0.5) * h)
    }
}

/// Nonnegative indicator values on a search grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorMap {
    pub grid: SearchGrid,
    pub values: Vec<f64>,
    /// `(row, col)` of the largest value.
    pub argmax: (usize, usize),
}

#[derive(Serialize)]
struct IndicatorHeader<'a> {
    grid: &'a SearchGrid,
    argmax: (usize, usize),
    argmax_point: Point,
    max: f64,
}

impl IndicatorMap {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.cells + col]
    }

    pub fn argmax_point(&self) -> Point {
        self.grid.cell_center(self.argmax.0, self.argmax.1)
    }

    /// Raster CSV: a `#` JSON header, then `row,col,z1,z2,value` per cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        let header = IndicatorHeader {
            grid: &self.grid,
            argmax: self.argmax,
            argmax_point: self.argmax_point(),
            max: self.value(self.argmax.0, self.argmax.1),
        };
        writeln!(out, "#{}", serde_json::to_string(&header)?)?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["row", "col", "z1", "z2", "value"]).map_err(csv_error)?;
            for row in 0..self.grid.cells {
                for col in 0..self.grid.cells {
                    let z = self.grid.cell_center(row, col);
                    w.write_record([
                        row.to_string(),
                        col.to_string(),
                        fmt(z.x),
                        fmt(z.y),
                        fmt(self.value(row, col)),
                    ])
                    .map_err(csv_error)?;
                }
            }
            w.flush()?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `I(z) = Σ_d |∫ u∞(x̂, d) e^{ik x̂·z} ds(x̂)|²` by the trapezoidal rule.
pub fn backpropagate(farfields: &[FarField], grid: &SearchGrid) -> Result<IndicatorMap> {
    let first = farfields
        .first()
        .ok_or_else(|| Error::Invalid("backpropagation needs at least one far field".into()))?;
    let (k, angles) = (first.k, &first.angles);
    if angles.is_empty() || farfields.iter().any(|f| f.angles != *angles || f.values.len() != angles.len() || f.k != k) {
        return Err(Error::Invalid("far fields must share wavenumber and observation angles".into()));
    }
    let weight = TAU / angles.len() as f64;
    let units: Vec<Point> = angles.iter().map(|&a| Point::from_angle(a)).collect();
    let n = grid.cells;
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let z = grid.cell_center(cell / n, cell % n);
            let kernel: Vec<Complex64> = units.iter().map(|u| Complex64::from_polar(weight, k * u.dot(z))).collect();
            farfields
                .iter()
                .map(|f| f.values.iter().zip(&kernel).map(|(v, w)| v * w).sum::<Complex64>().norm_sqr())
                .sum()
        })
        .collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });
    Ok(IndicatorMap {
        grid: *grid,
        values,
        argmax: (best / n, best % n),
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        line: e.position().map(|p| p.line() as usize).unwrap_or(0),
        message: e.to_string(),
    }
}

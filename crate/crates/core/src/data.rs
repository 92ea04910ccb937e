//! Phaseless data sets: moduli of total fields for single plane waves and
//! for superpositions with a fixed reference wave.
//!
//! On disk a data set is a CSV file whose first line is `#` followed by a
//! JSON header, then the column line `x1,x2,d_angle,r_single,r_pair` and
//! one row per (measurement point, direction) pair, points outermost.
//! Phased fields use the same layout with columns
//! `x1,x2,d_angle,re_u,im_u,re_us,im_us`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::geometry::Point;
use crate::scene::{index_of_angle, Direction, DirectionGrid, IncidentField, MeasurementSet, Scene};

/// Column names of the data-set CSV.
pub const DATASET_COLUMNS: [&str; 5] = ["x1", "x2", "d_angle", "r_single", "r_pair"];

/// Column names of the phased-fields CSV.
pub const FIELDS_COLUMNS: [&str; 7] = ["x1", "x2", "d_angle", "re_u", "im_u", "re_us", "im_us"];

/// Tolerance for matching stored coordinates and angles against the header.
const COORDINATE_TOLERANCE: f64 = 1e-9;

/// Header of a data set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub k: f64,
    pub d0: Direction,
    pub measurement: MeasurementSet,
    pub directions: DirectionGrid,
    /// Number of measurement points the file declares.
    pub points: usize,
    /// Number of incident directions the file declares.
    pub direction_count: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_hash: Option<String>,
    /// `|u(x_m, d₀)|`, stored only when `d₀` is not a grid direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_moduli: Option<Vec<f64>>,
}

/// Moduli `|u(x_m, d_j)|` and `|u(x_m, d_j) + u(x_m, d₀)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaselessDataset {
    pub meta: DatasetMeta,
    pub points: Vec<Point>,
    pub directions: Vec<Direction>,
    /// `singles[m][j] = |u(x_m, d_j)|`.
    pub singles: Vec<Vec<f64>>,
    /// `pairs[m][j] = |u(x_m, d_j) + u(x_m, d₀)|`.
    pub pairs: Vec<Vec<f64>>,
    /// `reference[m] = |u(x_m, d₀)|`.
    pub reference: Vec<f64>,
}

/// Phased total fields on the measurement set.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasedFields {
    pub k: f64,
    pub points: Vec<Point>,
    pub directions: Vec<Direction>,
    pub d0: Direction,
    /// `values[m][j] = u(x_m, d_j)`.
    pub values: Vec<Vec<Complex64>>,
    /// `reference[m] = u(x_m, d₀)`.
    pub reference: Vec<Complex64>,
}

impl PhasedFields {
    /// Solves the forward problem of `scene` for every grid direction and d₀.
    pub fn compute(scene: &Scene) -> Result<Self> {
        let model = ForwardModel::new(scene)?;
        Self::compute_with(&model, scene)
    }

    pub fn compute_with(model: &ForwardModel, scene: &Scene) -> Result<Self> {
        let points = scene.measurement.points();
        let directions = scene.directions.directions();
        let d0 = scene.directions.d0();
        let values = model.total_plane_waves(&directions, &points)?;
        let reference = match scene.directions.d0_index() {
            Some(j) => values.iter().map(|row| row[j]).collect(),
            None => model.total(&IncidentField::plane(scene.wavenumber, d0), &points)?,
        };
        Ok(Self {
            k: scene.wavenumber,
            points,
            directions,
            d0,
            values,
            reference,
        })
    }

    /// Incident plane-wave values `e^{ik x_m·d_j}`.
    pub fn incident(&self) -> Vec<Vec<Complex64>> {
        self.points
            .iter()
            .map(|&x| {
                self.directions
                    .iter()
                    .map(|&d| Complex64::from_polar(1.0, self.k * x.dot(d.unit())))
                    .collect()
            })
            .collect()
    }
}

impl PhaselessDataset {
    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn direction_count(&self) -> usize {
        self.directions.len()
    }

    /// Index of `d₀` among the grid directions, if present.
    pub fn d0_index(&self) -> Option<usize> {
        index_of_angle(&self.directions, self.meta.d0.angle())
    }

    /// Builds the data set from phased fields, with multiplicative noise
    /// uniform in `[1 − noise, 1 + noise]` when `noise > 0`.
    pub fn from_fields(scene: &Scene, fields: &PhasedFields, noise: f64, seed: u64) -> Result<Self> {
        if !(noise >= 0.0) || noise >= 1.0 {
            return Err(Error::Invalid(format!("noise level must lie in [0, 1), got {noise}")));
        }
        let mut singles: Vec<Vec<f64>> = fields
            .values
            .iter()
            .map(|row| row.iter().map(|u| u.norm()).collect())
            .collect();
        let mut pairs: Vec<Vec<f64>> = fields
            .values
            .iter()
            .zip(&fields.reference)
            .map(|(row, u0)| row.iter().map(|u| (u + u0).norm()).collect())
            .collect();
        let mut reference: Vec<f64> = fields.reference.iter().map(|u| u.norm()).collect();
        let d0_index = scene.directions.d0_index();
        if noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perturb = |v: &mut f64| *v *= rng.random_range(1.0 - noise..=1.0 + noise);
            singles.iter_mut().flatten().for_each(&mut perturb);
            pairs.iter_mut().flatten().for_each(&mut perturb);
            match d0_index {
                Some(j) => {
                    for (r, row) in reference.iter_mut().zip(&singles) {
                        *r = row[j];
                    }
                }
                None => reference.iter_mut().for_each(&mut perturb),
            }
        }
        let meta = DatasetMeta {
            k: scene.wavenumber,
            d0: scene.directions.d0(),
            measurement: scene.measurement.clone(),
            directions: scene.directions,
            points: fields.points.len(),
            direction_count: fields.directions.len(),
            noise,
            seed: (noise > 0.0).then_some(seed),
            scene_hash: Some(scene.hash()),
            reference_moduli: d0_index.is_none().then(|| reference.clone()),
        };
        Ok(Self {
            meta,
            points: fields.points.clone(),
            directions: fields.directions.clone(),
            singles,
            pairs,
            reference,
        })
    }

    /// Checks shapes and signs.
    pub fn validate(&self) -> Result<()> {
        let (m, d) = (self.points.len(), self.directions.len());
        let shape_ok = self.singles.len() == m
            && self.pairs.len() == m
            && self.reference.len() == m
            && self.singles.iter().chain(&self.pairs).all(|r| r.len() == d)
            && self.meta.points == m
            && self.meta.direction_count == d;
        if !shape_ok {
            return Err(Error::Invalid("data set shapes do not match its header".into()));
        }
        let all = self
            .singles
            .iter()
            .chain(&self.pairs)
            .flatten()
            .chain(&self.reference);
        if all.clone().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("moduli must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Synthesizes the phaseless data of `scene` from two phased solves per
/// direction (the single wave and its superposition with the d₀ wave).
pub fn synthesize(scene: &Scene, noise: f64, seed: u64) -> Result<PhaselessDataset> {
    let fields = PhasedFields::compute(scene)?;
    PhaselessDataset::from_fields(scene, &fields, noise, seed)
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset(dataset: &PhaselessDataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "#{}", serde_json::to_string(&dataset.meta)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(DATASET_COLUMNS).map_err(csv_error)?;
        for (m, x) in dataset.points.iter().enumerate() {
            for (j, d) in dataset.directions.iter().enumerate() {
                w.write_record([
                    fmt(x.x),
                    fmt(x.y),
                    fmt(d.angle()),
                    fmt(dataset.singles[m][j]),
                    fmt(dataset.pairs[m][j]),
                ])
                .map_err(csv_error)?;
            }
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= COORDINATE_TOLERANCE * (1.0 + b.abs())
}

fn close_angle(a: f64, b: f64) -> bool {
    let diff = (a - b).rem_euclid(std::f64::consts::TAU);
    diff.min(std::f64::consts::TAU - diff) <= COORDINATE_TOLERANCE
}

pub fn read_dataset(path: &Path) -> Result<PhaselessDataset> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header = first
        .trim_end()
        .strip_prefix('#')
        .ok_or_else(|| parse_error(1, "first line must be '#' followed by the JSON header"))?;
    let meta: DatasetMeta =
        serde_json::from_str(header).map_err(|e| parse_error(1, format!("bad header: {e}")))?;
    if !(meta.k > 0.0) {
        return Err(parse_error(1, format!("wavenumber must be positive, got {}", meta.k)));
    }
    let points = meta.measurement.points();
    let directions = meta.directions.directions();
    if meta.points != points.len() {
        return Err(parse_error(
            1,
            format!(
                "header declares {} points but the measurement set has {}",
                meta.points,
                points.len()
            ),
        ));
    }
    if meta.direction_count != directions.len() {
        return Err(parse_error(
            1,
            format!(
                "header declares {} directions but the grid has {}",
                meta.direction_count,
                directions.len()
            ),
        ));
    }
    let d0_index = index_of_angle(&directions, meta.d0.angle());
    let (m_count, d_count) = (points.len(), directions.len());
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns = csv_reader.headers().map_err(csv_error)?.clone();
    if columns.iter().ne(DATASET_COLUMNS) {
        return Err(parse_error(2, format!("expected columns {}", DATASET_COLUMNS.join(","))));
    }
    let mut singles = vec![vec![0.0; d_count]; m_count];
    let mut pairs = vec![vec![0.0; d_count]; m_count];
    let mut rows = 0usize;
    for record in csv_reader.records() {
        let record = record.map_err(csv_error)?;
        // The JSON line precedes the CSV reader's first line.
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0) + 1;
        if rows >= m_count * d_count {
            return Err(parse_error(line, "more rows than the header declares"));
        }
        if record.len() != DATASET_COLUMNS.len() {
            return Err(parse_error(line, format!("expected 5 fields, got {}", record.len())));
        }
        let mut nums = [0.0; 5];
        for (slot, field) in nums.iter_mut().zip(record.iter()) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| parse_error(line, format!("'{field}': {e}")))?;
        }
        let (m, j) = (rows / d_count, rows % d_count);
        let x = points[m];
        if !close(nums[0], x.x) || !close(nums[1], x.y) {
            return Err(parse_error(
                line,
                format!("point ({}, {}) does not match measurement point {m}", nums[0], nums[1]),
            ));
        }
        if !close_angle(nums[2], directions[j].angle()) {
            return Err(parse_error(line, format!("angle {} does not match direction {j}", nums[2])));
        }
        for v in &nums[3..] {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(parse_error(line, format!("modulus {v} must be finite and non-negative")));
            }
        }
        singles[m][j] = nums[3];
        pairs[m][j] = nums[4];
        rows += 1;
    }
    if rows != m_count * d_count {
        return Err(parse_error(
            rows + 2,
            format!("expected {} rows, found {rows}", m_count * d_count),
        ));
    }
    let reference = match (d0_index, &meta.reference_moduli) {
        (Some(j), _) => singles.iter().map(|row| row[j]).collect(),
        (None, Some(r)) if r.len() == m_count => {
            if r.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(parse_error(1, "reference moduli must be finite and non-negative"));
            }
            r.clone()
        }
        (None, _) => {
            return Err(parse_error(
                1,
                "d0 is off the direction grid but the header lacks reference_moduli for every point",
            ))
        }
    };
    Ok(PhaselessDataset {
        meta,
        points,
        directions,
        singles,
        pairs,
        reference,
    })
}

/// Header of a phased-fields file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldsMeta {
    pub k: f64,
    pub d0: Direction,
    pub measurement: MeasurementSet,
    pub directions: DirectionGrid,
    pub points: usize,
    pub direction_count: usize,
    /// Center and enclosing radius of the scatterer, for refitting outgoing
    /// expansions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_center: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_radius: Option<f64>,
    /// `u(x_m, d₀)` as `[re, im]`, stored only when `d₀` is off the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_hash: Option<String>,
}

impl FieldsMeta {
    pub fn for_fields(fields: &PhasedFields, measurement: &MeasurementSet, directions: DirectionGrid) -> Self {
        let off_grid = index_of_angle(&fields.directions, fields.d0.angle()).is_none();
        Self {
            k: fields.k,
            d0: fields.d0,
            measurement: measurement.clone(),
            directions,
            points: fields.points.len(),
            direction_count: fields.directions.len(),
            expansion_center: None,
            expansion_radius: None,
            reference: off_grid.then(|| fields.reference.iter().map(|u| [u.re, u.im]).collect()),
            scene_hash: None,
        }
    }
}

pub fn write_fields(fields: &PhasedFields, meta: &FieldsMeta, path: &Path) -> Result<()> {
    let (m_count, d_count) = (fields.points.len(), fields.directions.len());
    if meta.points != m_count
        || meta.direction_count != d_count
        || fields.values.len() != m_count
        || fields.values.iter().any(|r| r.len() != d_count)
    {
        return Err(Error::Invalid("field shapes do not match the header".into()));
    }
    let incident = fields.incident();
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "#{}", serde_json::to_string(meta)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(FIELDS_COLUMNS).map_err(csv_error)?;
        for (m, x) in fields.points.iter().enumerate() {
            for (j, d) in fields.directions.iter().enumerate() {
                let u = fields.values[m][j];
                let us = u - incident[m][j];
                w.write_record([x.x, x.y, d.angle(), u.re, u.im, us.re, us.im].map(fmt))
                    .map_err(csv_error)?;
            }
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_fields(path: &Path) -> Result<(FieldsMeta, PhasedFields)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header = first
        .trim_end()
        .strip_prefix('#')
        .ok_or_else(|| parse_error(1, "first line must be '#' followed by the JSON header"))?;
    let meta: FieldsMeta = serde_json::from_str(header).map_err(|e| parse_error(1, format!("bad header: {e}")))?;
    if !(meta.k > 0.0) {
        return Err(parse_error(1, format!("wavenumber must be positive, got {}", meta.k)));
    }
    let points = meta.measurement.points();
    let directions = meta.directions.directions();
    if meta.points != points.len() || meta.direction_count != directions.len() {
        return Err(parse_error(1, "header counts do not match its measurement set and grid"));
    }
    let (m_count, d_count) = (points.len(), directions.len());
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns = csv_reader.headers().map_err(csv_error)?.clone();
    if columns.iter().ne(FIELDS_COLUMNS) {
        return Err(parse_error(2, format!("expected columns {}", FIELDS_COLUMNS.join(","))));
    }
    let mut values = vec![vec![Complex64::new(0.0, 0.0); d_count]; m_count];
    let mut rows = 0usize;
    for record in csv_reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0) + 1;
        if rows >= m_count * d_count {
            return Err(parse_error(line, "more rows than the header declares"));
        }
        if record.len() != FIELDS_COLUMNS.len() {
            return Err(parse_error(line, format!("expected 7 fields, got {}", record.len())));
        }
        let mut nums = [0.0; 7];
        for (slot, field) in nums.iter_mut().zip(record.iter()) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| parse_error(line, format!("'{field}': {e}")))?;
            if !slot.is_finite() {
                return Err(parse_error(line, format!("'{field}' is not finite")));
            }
        }
        let (m, j) = (rows / d_count, rows % d_count);
        if !close(nums[0], points[m].x) || !close(nums[1], points[m].y) {
            return Err(parse_error(line, format!("point does not match measurement point {m}")));
        }
        if !close_angle(nums[2], directions[j].angle()) {
            return Err(parse_error(line, format!("angle {} does not match direction {j}", nums[2])));
        }
        values[m][j] = Complex64::new(nums[3], nums[4]);
        rows += 1;
    }
    if rows != m_count * d_count {
        return Err(parse_error(rows + 2, format!("expected {} rows, found {rows}", m_count * d_count)));
    }
    let reference = match (index_of_angle(&directions, meta.d0.angle()), &meta.reference) {
        (Some(j), _) => values.iter().map(|row| row[j]).collect(),
        (None, Some(r)) if r.len() == m_count => r.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
        (None, _) => return Err(parse_error(1, "d0 is off the grid but the header lacks its fields")),
    };
    let fields = PhasedFields {
        k: meta.k,
        points,
        directions,
        d0: meta.d0,
        values,
        reference,
    };
    Ok((meta, fields))
}

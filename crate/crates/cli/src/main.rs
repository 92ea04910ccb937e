//! `phaseless-helm`: forward solves, phaseless data synthesis, phase
//! retrieval, verification suites and imaging from the command line.

mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phaseless_core::data::{read_dataset, read_fields, synthesize, write_dataset, write_fields};
use phaseless_core::forward::ForwardModel;
use phaseless_core::imaging::{backpropagate, equispaced_angles, farfields_from_fields, FarField, SearchGrid};
use phaseless_core::retrieval::retrieve;
use phaseless_core::scene::load_scene;
use phaseless_core::{Direction, DirectionGrid, Error, IncidentField, Point};

#[derive(Parser)]
#[command(name = "phaseless-helm", version, about = "Phaseless near-field scattering workbench")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "PHASELESS_HELM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phased fields of one incident wave, near or far.
    Forward {
        #[arg(long)]
        scene: PathBuf,
        /// `plane:ANGLE`, `superpose:A1,A2` or `source:X,Y`.
        #[arg(long, value_parser = parse_incident)]
        incident: IncidentSpec,
        #[arg(long, value_enum, default_value = "near")]
        points: Points,
        /// Observation angles for `--points far`.
        #[arg(long, default_value_t = 256)]
        angles: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phaseless data set of single and superposed plane waves.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        /// Reference direction angle (radians); defaults to the scene's.
        #[arg(long)]
        d0: Option<f64>,
        /// Number of incident directions; defaults to the scene's.
        #[arg(long)]
        directions: Option<usize>,
        /// Relative multiplicative noise level.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phased total fields from a phaseless data set.
    Retrieve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scene_geometry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Branch residuals and decision as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Runs one verification suite described by a JSON config.
    Verify {
        #[arg(long, value_enum)]
        suite: verify::Suite,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Backpropagation indicator from phased fields.
    Image {
        #[arg(long)]
        fields: PathBuf,
        /// Cells per side of the search grid.
        #[arg(long, default_value_t = 128)]
        grid: usize,
        /// Side of the search square; defaults to six scatterer diameters.
        #[arg(long)]
        side: Option<f64>,
        /// Center of the search square as `X,Y`; defaults to the expansion center.
        #[arg(long, value_parser = parse_point)]
        center: Option<Point>,
        /// Far-field angles used for backpropagation.
        #[arg(long, default_value_t = 256)]
        angles: usize,
        /// Discard far-field phases before imaging.
        #[arg(long)]
        discard_phase: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Points {
    Near,
    Far,
}

#[derive(Clone, Copy, Debug)]
enum IncidentSpec {
    Plane(f64),
    Superpose(f64, f64),
    Source(Point),
}

impl IncidentSpec {
    fn build(self, k: f64) -> IncidentField {
        match self {
            IncidentSpec::Plane(a) => IncidentField::plane(k, Direction::new(a)),
            IncidentSpec::Superpose(a, b) => IncidentField::superposition(k, Direction::new(a), Direction::new(b)),
            IncidentSpec::Source(y) => IncidentField::point_source(k, y),
        }
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated numbers, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    let (a, b) = (num(a)?, num(b)?);
    if !a.is_finite() || !b.is_finite() {
        return Err(format!("non-finite value in `{s}`"));
    }
    Ok((a, b))
}

fn parse_point(s: &str) -> Result<Point, String> {
    parse_pair(s).map(|(x, y)| Point::new(x, y))
}

fn parse_incident(s: &str) -> Result<IncidentSpec, String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| "expected plane:ANGLE, superpose:A1,A2 or source:X,Y".to_string())?;
    match kind {
        "plane" => {
            let a: f64 = rest.trim().parse().map_err(|e| format!("`{rest}`: {e}"))?;
            if !a.is_finite() {
                return Err("angle must be finite".into());
            }
            Ok(IncidentSpec::Plane(a))
        }
        "superpose" => parse_pair(rest).map(|(a, b)| IncidentSpec::Superpose(a, b)),
        "source" => parse_point(rest).map(IncidentSpec::Source),
        other => Err(format!("unknown incident kind `{other}`")),
    }
}

/// Failure of a subcommand after argument parsing.
enum Failure {
    Usage(String),
    Compute(String),
}

/// Tags an error with the file it concerns.
fn at(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Compute(format!("{}: {e}", path.display()))
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(Failure::Usage("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(Failure::Compute(e.to_string()));
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    let (code, msg) = match f {
        Failure::Usage(m) => (2, m),
        Failure::Compute(m) => (1, m),
    };
    eprintln!("phaseless-helm: error: {}", msg.replace('\n', " "));
    ExitCode::from(code)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Forward {
            scene,
            incident,
            points,
            angles,
            out,
        } => forward(&scene, incident, points, angles, &out),
        Command::Synth {
            scene,
            d0,
            directions,
            noise,
            seed,
            out,
        } => {
            if !(noise >= 0.0) || !noise.is_finite() {
                return Err(Failure::Usage("--noise must be a finite non-negative number".into()));
            }
            if d0.is_some_and(|a| !a.is_finite()) {
                return Err(Failure::Usage("--d0 must be finite".into()));
            }
            let mut scene = load_scene(&scene).map_err(at(&scene))?;
            scene.directions = DirectionGrid::new(
                directions.unwrap_or(scene.directions.count),
                d0.unwrap_or(scene.directions.d0_angle),
            );
            scene.validate()?;
            write_dataset(&synthesize(&scene, noise, seed)?, &out).map_err(at(&out))?;
            Ok(())
        }
        Command::Retrieve {
            data,
            scene_geometry,
            out,
            report,
        } => {
            let dataset = read_dataset(&data).map_err(at(&data))?;
            let scene = load_scene(&scene_geometry).map_err(at(&scene_geometry))?;
            let result = retrieve(&dataset, &scene)?;
            write_fields(&result.fields, &result.fields_meta(&dataset), &out).map_err(at(&out))?;
            if let Some(path) = report {
                result.report.write(&path).map_err(at(&path))?;
            }
            Ok(())
        }
        Command::Verify { suite, config, out } => {
            let outcome = verify::run(suite, &config).map_err(at(&config))?;
            std::fs::write(&out, serde_json::to_string_pretty(&outcome).map_err(Error::from)? + "\n")
                .map_err(|e| at(&out)(e.into()))?;
            if outcome.passed {
                Ok(())
            } else {
                let failed: Vec<&str> = outcome.checks.iter().filter(|c| !c.passed).map(|c| c.check.as_str()).collect();
                Err(Failure::Compute(format!("suite {} failed: {}", outcome.suite, failed.join(", "))))
            }
        }
        Command::Image {
            fields,
            grid,
            side,
            center,
            angles,
            discard_phase,
            out,
        } => {
            if grid == 0 || angles == 0 {
                return Err(Failure::Usage("--grid and --angles must be positive".into()));
            }
            let (meta, fields) = read_fields(&fields).map_err(at(&fields))?;
            let (Some(c), Some(r)) = (meta.expansion_center, meta.expansion_radius) else {
                return Err(Failure::Compute("fields file lacks the expansion center and radius".into()));
            };
            let side = match side {
                Some(s) => s,
                None if r > 0.0 => 12.0 * r,
                None => return Err(Failure::Usage("scatterer radius is zero; pass --side".into())),
            };
            let search = SearchGrid::new(center.unwrap_or(c), side, grid)?;
            let mut farfields = farfields_from_fields(&fields, c, r, &equispaced_angles(angles))?;
            if discard_phase {
                farfields = farfields.iter().map(FarField::moduli_only).collect();
            }
            backpropagate(&farfields, &search)?.write_csv(&out).map_err(at(&out))?;
            Ok(())
        }
    }
}

fn forward(scene: &Path, incident: IncidentSpec, points: Points, angles: usize, out: &Path) -> Result<(), Failure> {
    let scene = load_scene(scene).map_err(at(scene))?;
    let k = scene.wavenumber;
    let model = ForwardModel::new(&scene)?;
    let inc = incident.build(k);
    match points {
        Points::Far => {
            if angles == 0 {
                return Err(Failure::Usage("--angles must be positive".into()));
            }
            model.farfield(&inc, &equispaced_angles(angles))?.write_csv(out).map_err(at(out))?;
        }
        Points::Near => {
            let xs = scene.measurement.points();
            let us = model.scattered(&inc, &xs)?;
            let io = |e: csv::Error| Failure::Compute(format!("{}: {e}", out.display()));
            let mut w = csv::Writer::from_path(out).map_err(io)?;
            w.write_record(["x1", "x2", "re_u", "im_u", "re_us", "im_us"]).map_err(io)?;
            for (x, s) in xs.iter().zip(&us) {
                let u = s + inc.eval(*x)?;
                w.write_record([x.x, x.y, u.re, u.im, s.re, s.im].map(|v| format!("{v:.16e}")))
                    .map_err(io)?;
            }
            w.flush().map_err(Error::from).map_err(at(out))?;
        }
    }
    Ok(())
}

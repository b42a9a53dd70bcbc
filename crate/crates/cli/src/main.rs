use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use surfdist::distance::{distance_dn_path, DistanceMatrix};
use surfdist::fit::{self, FitReport, PerturbationMode, Resolver};
use surfdist::io::{self as sio, PointSet};
use surfdist::{
    distance_matrix, metric_audit, nn_tour, projected_baseline_distance, two_opt, DistanceConfig, Error,
    GeodesicConfig, PerturbationSchedule, ScalingMode, AUDIT_RTOL,
};

#[derive(Parser)]
#[command(name = "surfdist", version, about = "Geodesic distances on pair-fitted polynomial surfaces")]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a surface to all points, or through a pair with --pair.
    Fit,
    /// Distance between one pair of points.
    Distance,
    /// All pair distances.
    Matrix,
    /// Check a distance matrix (CSV or JSON) against the metric axioms.
    Audit,
    /// Distance between the vertical feet of a pair on one surface fitted to all points.
    Baseline,
    /// Nearest-neighbour tour improved by 2-opt (demonstration).
    Route,
}

#[derive(Args)]
struct Options {
    /// Polynomial degree of the fitted surfaces.
    #[arg(long, global = true, default_value_t = 2)]
    degree: usize,
    /// Point CSV (x,y,z with optional label column and header); a matrix file for `audit`.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Master seed for restarts and perturbation directions.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Initial geodesic node count.
    #[arg(long, global = true, default_value_t = 65)]
    nodes: usize,
    #[arg(long, global = true, default_value_t = 1025)]
    max_nodes: usize,
    #[arg(long, global = true, default_value_t = 1e-8)]
    grad_tol: f64,
    #[arg(long, global = true, default_value_t = 1e-7)]
    refine_tol: f64,
    #[arg(long, global = true, default_value_t = 1e-2)]
    eps0: f64,
    #[arg(long, global = true, default_value_t = 0.5)]
    decay: f64,
    #[arg(long, global = true, default_value_t = 40)]
    max_steps: usize,
    #[arg(long, global = true, value_enum, default_value_t = Switch::Off)]
    scale: Switch,
    #[arg(long, global = true, value_enum, default_value_t = Switch::On)]
    parallel: Switch,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Diagonal)]
    perturbation: Mode,
    /// Zero-based indices of the query pair.
    #[arg(long, global = true, num_args = 2, value_names = ["I", "J"])]
    pair: Option<Vec<usize>>,
    /// Zero-based start index of the tour.
    #[arg(long, global = true, default_value_t = 0)]
    start: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Diagonal,
    Points,
}

/// Resolved settings for one invocation.
struct RunConfig {
    distance: DistanceConfig,
    format: Format,
}

impl Options {
    fn run_config(&self, default_format: Format) -> Result<RunConfig, Error> {
        let geodesic = GeodesicConfig {
            initial_nodes: self.nodes,
            max_nodes: self.max_nodes,
            grad_tol: self.grad_tol,
            refine_tol: self.refine_tol,
            seed: self.seed,
            ..GeodesicConfig::default()
        };
        let perturbation = PerturbationSchedule {
            epsilon0: self.eps0,
            decay: self.decay,
            max_steps: self.max_steps,
            seed: self.seed,
            mode: match self.perturbation {
                Mode::Diagonal => PerturbationMode::Diagonal,
                Mode::Points => PerturbationMode::Points,
            },
            ..PerturbationSchedule::default()
        };
        let distance = DistanceConfig {
            degree: self.degree,
            scaling: if self.scale == Switch::On { ScalingMode::UnitBox } else { ScalingMode::Off },
            geodesic,
            perturbation,
            master_seed: self.seed,
            parallel: self.parallel == Switch::On,
        };
        distance.validate()?;
        Ok(RunConfig { distance, format: self.format.unwrap_or(default_format) })
    }

    fn points(&self) -> Result<PointSet, Error> {
        let path = self.input.as_deref().ok_or_else(|| Error::InvalidInput("--input is required".into()))?;
        sio::load_points_csv(path)
    }

    fn pair(&self, n: usize) -> Result<(usize, usize), Error> {
        let p = self.pair.as_deref().ok_or_else(|| Error::InvalidInput("--pair I J is required".into()))?;
        let (i, j) = (p[0], p[1]);
        if i >= n || j >= n {
            return Err(Error::InvalidInput(format!("pair ({i}, {j}) out of range for {n} points")));
        }
        Ok((i, j))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::EmptyInput | Error::Json(_) => 2,
        Error::SingularSystem(_) | Error::AllSingular => 3,
        Error::NoConvergence { .. } => 4,
        Error::VerticalPair { .. } => 5,
        _ => 1,
    }
}

fn error_object(e: &Error) -> serde_json::Value {
    let mut obj = json!({ "kind": e.kind(), "message": e.to_string(), "exit_code": exit_code(e) });
    match e {
        Error::SingularSystem(sys) => {
            obj["rank"] = json!(sys.rank);
            obj["dim"] = json!(sys.dim);
        }
        Error::Parse { row, .. } => obj["row"] = json!(row),
        Error::NoConvergence { steps, last_length } => {
            obj["steps"] = json!(steps);
            obj["last_length"] = json!(last_length);
        }
        _ => {}
    }
    json!({ "error": obj })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_object(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let o = &cli.opts;
    match cli.command {
        Command::Fit => cmd_fit(o),
        Command::Distance => cmd_distance(o),
        Command::Matrix => cmd_matrix(o),
        Command::Audit => cmd_audit(o),
        Command::Baseline => cmd_baseline(o),
        Command::Route => cmd_route(o),
    }
}

fn cmd_fit(o: &Options) -> Result<(), Error> {
    let cfg = o.run_config(Format::Json)?;
    let d = &cfg.distance;
    let set = o.points()?;
    let report = match o.pair {
        None => {
            let sys = fit::build_unconstrained_system(&set.points, d.degree, d.scaling)?;
            let surface = fit::solve_unconstrained(sys.clone())?;
            FitReport::new(&sys, Resolver::Direct, 1, Vec::new(), surface)
        }
        Some(_) => {
            let (i, j) = o.pair(set.points.len())?;
            let (p1, p2) = (set.points[i], set.points[j]);
            let others: Vec<_> = set.points.iter().filter(|p| **p != p1 && **p != p2).copied().collect();
            let sys = fit::build_constrained_system(&p1, &p2, &others, d.degree, d.scaling)?;
            let pc = d.for_pair(i, j);
            let r = fit::perturbation_resolve(&p1, &p2, &others, d.degree, d.scaling, &pc.perturbation, &pc.geodesic)?;
            FitReport::new(&sys, r.resolver, r.steps, r.lengths, r.surface)
        }
    };
    let mut out = open_output(o.output.as_deref())?;
    match cfg.format {
        Format::Json => sio::write_json(&report, &mut out)?,
        Format::Csv | Format::Table => {
            writeln!(out, "i,j,a")?;
            for (&(i, j), a) in report.surface.basis().terms().iter().zip(report.surface.coefficients()) {
                writeln!(out, "{i},{j},{a:.16e}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_distance(o: &Options) -> Result<(), Error> {
    let cfg = o.run_config(Format::Json)?;
    let set = o.points()?;
    let (i, j) = o.pair(set.points.len())?;
    let pc = cfg.distance.for_pair(i, j);
    let (length, path, provenance) = distance_dn_path(&set.points, &set.points[i], &set.points[j], &pc)?;
    let mut out = open_output(o.output.as_deref())?;
    match cfg.format {
        Format::Json => sio::write_json(
            &json!({
                "i": i,
                "j": j,
                "labels": [set.labels[i], set.labels[j]],
                "degree": cfg.distance.degree,
                "distance": length,
                "provenance": provenance,
                "path": path,
            }),
            &mut out,
        )?,
        Format::Csv | Format::Table => {
            writeln!(out, "i,j,distance")?;
            writeln!(out, "{i},{j},{length:.16e}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_matrix(o: &Options) -> Result<(), Error> {
    let cfg = o.run_config(Format::Csv)?;
    let set = o.points()?;
    let m = distance_matrix(&set.points, Some(set.labels), &cfg.distance)?;
    for f in m.failures() {
        let fail = f.provenance.failure.as_ref().expect("failure record");
        eprintln!("{}", json!({ "warning": { "i": f.i, "j": f.j, "kind": fail.kind, "message": fail.message } }));
    }
    let mut out = open_output(o.output.as_deref())?;
    match cfg.format {
        Format::Json => sio::write_json(&m, &mut out)?,
        Format::Csv | Format::Table => sio::write_matrix_csv(&m, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn read_matrix_input(o: &Options) -> Result<DistanceMatrix, Error> {
    let path = o.input.as_deref().ok_or_else(|| Error::InvalidInput("--input is required".into()))?;
    sio::read_matrix(File::open(path)?)
}

fn cmd_audit(o: &Options) -> Result<(), Error> {
    let cfg = o.run_config(Format::Table)?;
    let m = read_matrix_input(o)?;
    let report = metric_audit(&m, AUDIT_RTOL)?;
    let mut out = open_output(o.output.as_deref())?;
    match cfg.format {
        Format::Json => sio::write_json(&report, &mut out)?,
        Format::Csv | Format::Table => out.write_all(sio::audit_table(&report).as_bytes())?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_baseline(o: &Options) -> Result<(), Error> {
    let cfg = o.run_config(Format::Json)?;
    let set = o.points()?;
    let (i, j) = o.pair(set.points.len())?;
    let b = projected_baseline_distance(&set.points, &set.points[i], &set.points[j], &cfg.distance)?;
    let mut out = open_output(o.output.as_deref())?;
    match cfg.format {
        Format::Json => sio::write_json(
            &json!({ "i": i, "j": j, "labels": [set.labels[i], set.labels[j]], "degree": cfg.distance.degree, "baseline": b }),
            &mut out,
        )?,
        Format::Csv | Format::Table => {
            writeln!(out, "i,j,baseline")?;
            writeln!(out, "{i},{j},{:.16e}", b.length)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Tours over a matrix read from a JSON file, or computed from a point CSV.
fn cmd_route(o: &Options) -> Result<(), Error> {
    let cfg = o.run_config(Format::Json)?;
    let path = o.input.as_deref().ok_or_else(|| Error::InvalidInput("--input is required".into()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let m = if is_json {
        sio::read_matrix(File::open(path)?)?
    } else {
        let set = o.points()?;
        distance_matrix(&set.points, Some(set.labels), &cfg.distance)?
    };
    let nn = nn_tour(&m, o.start)?;
    let improved = two_opt(&m, &nn);
    let labels = |order: &[usize]| order.iter().map(|&k| m.labels[k].clone()).collect::<Vec<_>>();
    let mut out = open_output(o.output.as_deref())?;
    match cfg.format {
        Format::Json => sio::write_json(
            &json!({
                "note": "single-vehicle tour heuristic over a possibly non-metric matrix",
                "nearest_neighbour": { "order": nn.order, "labels": labels(&nn.order), "length": nn.length },
                "two_opt": { "order": improved.order, "labels": labels(&improved.order), "length": improved.length },
            }),
            &mut out,
        )?,
        Format::Csv | Format::Table => {
            writeln!(out, "heuristic,length,order")?;
            for (name, t) in [("nearest-neighbour", &nn), ("two-opt", &improved)] {
                let order: Vec<String> = t.order.iter().map(usize::to_string).collect();
                writeln!(out, "{name},{:.16e},{}", t.length, order.join(" "))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

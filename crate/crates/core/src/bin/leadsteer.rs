use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use leadsteer::harness::scene::{DEMO_MAGNITUDE, DEMO_POSITIONS};
use leadsteer::harness::{emit, Format, StudyConfig};
use leadsteer::leadfield::{
    add_noise, attenuation_set, build_geometry, dynamic_range_bound, export_leadfield, export_matrix_csv,
    reduce_system, snap_target, standard_grid, synthesize_leadfield, GeometryModel, LeadField, NoiseSpec,
    ReducedSystem,
};
use leadsteer::model::{Alignment, CurrentLimits, Resolution, TargetSpec, Vec3};
use leadsteer::numeric::{db_to_linear, linear_to_db};
use leadsteer::search::{lattice_search, SearchSpace, Variant, DEFAULT_GAMMA0, DEFAULT_STEPS};
use leadsteer::solvers::{solve_l1l1, solve_rp, solve_tls, Method, SolveOutcome};
use leadsteer::{par, Error, Result};

#[derive(Parser)]
#[command(name = "leadsteer", version, about = "Current steering for multi-contact stimulation leads")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "WORKERS")]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print or export a contact array.
    Geometry {
        #[arg(long, value_enum)]
        geometry: GeometryModel,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Build a lead field and export it.
    Synth {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "leadfield")]
        format: FieldFormat,
    },
    /// Solve one target with one method.
    Solve {
        #[arg(long, value_enum)]
        method: Method,
        /// Supplies default hyperparameters (centre of its ranges).
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[command(flatten)]
        scene: SceneArgs,
        /// First hyperparameter (alpha or gamma), dB.
        #[arg(long, allow_hyphen_values = true)]
        param1_db: Option<f64>,
        /// Second hyperparameter (epsilon or beta), dB.
        #[arg(long, allow_hyphen_values = true)]
        param2_db: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Lattice search; prints the best point and the full lattice.
    Search {
        #[arg(long, value_enum)]
        variant: Variant,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_GAMMA0)]
        gamma0: f64,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Run a study config.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output formats (overrides the config).
        #[arg(long, value_enum, value_delimiter = ',')]
        format: Vec<Format>,
    },
    /// Attenuation sets and ε bounds over a δ ladder.
    Vta {
        #[command(flatten)]
        field: FieldArgs,
        /// δ in dB; repeatable.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', default_values_t = [-10.0, -20.0, -30.0, -40.0])]
        delta_db: Vec<f64>,
        /// Position for the ε bound (snapped to the grid).
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        target: Option<[f64; 3]>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
}

#[derive(Args, Clone)]
struct FieldArgs {
    #[arg(long, value_enum, default_value = "contacts8")]
    geometry: GeometryModel,
    #[arg(long, value_enum, default_value = "low")]
    resolution: GridRes,
    /// Add Gaussian noise at this PSNR.
    #[arg(long, allow_hyphen_values = true)]
    psnr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct SceneArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Target position "x,y,z" in mm (snapped to the grid).
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    target: Option<[f64; 3]>,
    #[arg(long, value_enum, default_value = "parallel")]
    alignment: CliAlignment,
    #[arg(long, default_value_t = DEMO_MAGNITUDE)]
    magnitude: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridRes {
    Low,
    High,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliAlignment {
    Parallel,
    Perpendicular,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldFormat {
    Leadfield,
    Csv,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

fn parse_point(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|v| format!("expected x,y,z, got {} values", v.len()))
}

fn build_field(args: &FieldArgs) -> Result<Arc<LeadField>> {
    let res = match args.resolution {
        GridRes::Low => Resolution::Low,
        GridRes::High => Resolution::High,
    };
    let grid = standard_grid(res)?;
    let field = synthesize_leadfield(&build_geometry(args.geometry), &grid, 0.2)?;
    Ok(Arc::new(match args.psnr_db {
        Some(psnr_db) => add_noise(
            &field,
            &NoiseSpec {
                psnr_db,
                seed: args.seed,
                realization_index: 0,
            },
        )?,
        None => field,
    }))
}

fn build_system(args: &SceneArgs) -> Result<(ReducedSystem, usize)> {
    let field = build_field(&args.field)?;
    let alignment = match args.alignment {
        CliAlignment::Parallel => Alignment::Parallel,
        CliAlignment::Perpendicular => Alignment::Perpendicular,
    };
    let pos = Vec3::from(args.target.unwrap_or(DEMO_POSITIONS[0]));
    let (idx, target) = snap_target(field.grid(), &TargetSpec::aligned(pos, alignment, args.magnitude)?)?;
    Ok((reduce_system(&field, &target)?, idx))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn geometry_cmd(geometry: GeometryModel, out: Option<&Path>, format: Format) -> Result<()> {
    let contacts = build_geometry(geometry);
    let text = match format {
        Format::Json => json(&contacts)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["label", "row", "sector", "x_mm", "y_mm", "z_mm", "nx", "ny", "nz"])?;
            for c in contacts.contacts() {
                let mut rec = vec![c.label.clone(), c.row.to_string(), c.sector.to_string()];
                rec.extend(c.center.iter().chain(c.normal.iter()).map(|v| format!("{v:?}")));
                w.write_record(&rec)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?)
                .expect("csv output is utf-8")
        }
    };
    write_out(out, &text)
}

fn outcome_text(system: &ReducedSystem, idx: usize, o: &SolveOutcome) -> String {
    let contacts = system.parent().map(|f| f.contacts().clone());
    let label = |i: usize| contacts.as_ref().map(|c| c.label(i).to_string()).unwrap_or_else(|| i.to_string());
    let pos = system.target().map(|t| *t.position()).unwrap_or_default();
    let mut s = format!(
        "method {}  target #{idx} ({:.3}, {:.3}, {:.3}) mm\n",
        o.method.as_str(),
        pos.x,
        pos.y,
        pos.z
    );
    for (name, h) in &o.hyperparameters {
        s += &format!("{name} {:.3} dB ({:e})\n", h.db, h.linear);
    }
    let y = o.pattern.currents();
    if o.method == Method::Rp {
        let a = (0..y.len()).find(|&i| y[i] > 0.0);
        let c = (0..y.len()).find(|&i| y[i] < 0.0);
        if let (Some(a), Some(c)) = (a, c) {
            s += &format!("anode {} {:+.4} mA\ncathode {} {:+.4} mA\n", label(a), y[a], label(c), y[c]);
        }
    } else {
        for i in o.pattern.active_contacts(1e-6) {
            s += &format!("{} {:+.4} mA\n", label(i), y[i]);
        }
    }
    let m = o.metrics;
    s += &format!("gamma {:.6}\nxi {:.6}\ntheta {:.6}\n", m.gamma, m.xi, m.theta);
    for w in &o.diagnostics.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

fn solve_cmd(
    method: Method,
    variant: Option<Variant>,
    scene: &SceneArgs,
    p1: Option<f64>,
    p2: Option<f64>,
    format: ReportFormat,
) -> Result<()> {
    let (system, idx) = build_system(scene)?;
    let limits = CurrentLimits::default();
    let outcome = match method {
        Method::Rp => solve_rp(&system, limits)?,
        m => {
            let v = variant.unwrap_or(if m == Method::Tls { Variant::TlsDefault } else { Variant::L1l1B });
            if v.method() != m {
                return Err(Error::InvalidArgument(format!(
                    "variant {} does not belong to method {}",
                    v.as_str(),
                    m.as_str()
                )));
            }
            let space = SearchSpace::preset(v);
            let mid = |a: &leadsteer::search::Axis| 0.5 * (a.min_db + a.max_db);
            let d1 = p1.unwrap_or_else(|| mid(&space.param1));
            let d2 = p2.unwrap_or_else(|| mid(&space.param2));
            let (v1, v2) = (db_to_linear(d1), db_to_linear(d2));
            if m == Method::Tls {
                solve_tls(&system, v1, v2, limits)?
            } else {
                solve_l1l1(&system, v1, v2, limits)?
            }
        }
    };
    let text = match format {
        ReportFormat::Json => json(&outcome)?,
        ReportFormat::Text => outcome_text(&system, idx, &outcome),
    };
    write_out(None, &text)
}

fn search_cmd(variant: Variant, steps: usize, gamma0: f64, scene: &SceneArgs, format: ReportFormat) -> Result<()> {
    let (system, idx) = build_system(scene)?;
    let space = SearchSpace::preset_with_steps(variant, steps)?;
    let res = lattice_search(&system, &space, gamma0, CurrentLimits::default())?;
    let text = match format {
        ReportFormat::Json => json(&res)?,
        ReportFormat::Text => {
            let (n1, n2) = (&space.param1.name, &space.param2.name);
            let mut s = format!(
                "best ({}, {}) {}\n",
                res.best.grid_coordinates.0,
                res.best.grid_coordinates.1,
                if res.best.feasible { "feasible" } else { "infeasible" }
            );
            s += &outcome_text(&system, idx, &res.best.outcome);
            s += &format!("\ni j {n1}_db {n2}_db gamma xi theta feasible\n");
            for c in &res.all {
                let h = &c.outcome.hyperparameters;
                let m = c.outcome.metrics;
                s += &format!(
                    "{} {} {} {} {:?} {:?} {:?} {}\n",
                    c.grid_coordinates.0, c.grid_coordinates.1, h[n1].db, h[n2].db, m.gamma, m.xi, m.theta, c.feasible
                );
            }
            for f in &res.failures {
                s += &format!(
                    "{} {} {} {} failed: {}\n",
                    f.grid_coordinates.0, f.grid_coordinates.1, f.param1_db, f.param2_db, f.message
                );
            }
            s
        }
    };
    write_out(None, &text)
}

fn study_cmd(path: &Path, seed: Option<u64>, out: Option<PathBuf>, format: Vec<Format>, workers: Option<usize>) -> Result<()> {
    let mut config = StudyConfig::from_path(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.output.dir = Some(o);
    }
    if !format.is_empty() {
        config.output.format = format;
    }
    let (result, meta) = leadsteer::harness::run_study_with(&config, workers)?;
    let dir = config.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let written = emit(&result, Some(&meta), &dir, &config.output.stem, &config.output.format)?;
    let failed = result.rows.iter().filter(|r| r.message.is_some()).count();
    eprintln!(
        "{} rows ({failed} failed), {} summary blocks, {:.1} s",
        result.rows.len(),
        result.summaries.len(),
        meta.total_runtime_s
    );
    for f in written.files {
        println!("{}", f.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct VtaLevel {
    delta_db: f64,
    delta: f64,
    members: usize,
    epsilon_bound: Option<f64>,
    epsilon_bound_db: Option<f64>,
}

fn vta_cmd(field: &FieldArgs, ladder: &[f64], target: Option<[f64; 3]>, format: ReportFormat) -> Result<()> {
    let f = build_field(field)?;
    let t_idx = match target {
        Some(p) => Some(
            f.grid()
                .nearest(&Vec3::from(p))
                .ok_or_else(|| Error::InvalidTarget("grid is empty".into()))?
                .0,
        ),
        None => None,
    };
    let levels = ladder
        .iter()
        .map(|&d| {
            let set = attenuation_set(&f, db_to_linear(d))?;
            let eps = t_idx.map(|i| dynamic_range_bound(&set, i)).transpose()?;
            Ok(VtaLevel {
                delta_db: d,
                delta: set.delta,
                members: set.len(),
                epsilon_bound: eps,
                epsilon_bound_db: eps.map(linear_to_db),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let text = match format {
        ReportFormat::Json => json(&levels)?,
        ReportFormat::Text => {
            let mut s = format!("positions {}\n", f.grid().len());
            if let Some(i) = t_idx {
                let p = f.grid().positions()[i];
                s += &format!("target #{i} ({:.3}, {:.3}, {:.3}) mm\n", p.x, p.y, p.z);
            }
            s += "delta_db delta members epsilon_bound epsilon_bound_db\n";
            for l in &levels {
                s += &format!(
                    "{} {:e} {} {} {}\n",
                    l.delta_db,
                    l.delta,
                    l.members,
                    l.epsilon_bound.map(|e| format!("{e:e}")).unwrap_or_else(|| "-".into()),
                    l.epsilon_bound_db.map(|e| format!("{e:.3}")).unwrap_or_else(|| "-".into()),
                );
            }
            s
        }
    };
    write_out(None, &text)
}

fn synth_cmd(field: &FieldArgs, out: &Path, format: FieldFormat) -> Result<()> {
    let f = build_field(field)?;
    match format {
        FieldFormat::Leadfield => export_leadfield(&f, out),
        FieldFormat::Csv => export_matrix_csv(f.matrix(), out),
    }?;
    eprintln!("{} x {} lead field written to {}", f.matrix().nrows(), f.matrix().ncols(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let workers = cli.parallel;
    par::with_workers(workers, move || match cli.command {
        Command::Geometry { geometry, out, format } => geometry_cmd(geometry, out.as_deref(), format),
        Command::Synth { field, out, format } => synth_cmd(&field, &out, format),
        Command::Solve {
            method,
            variant,
            scene,
            param1_db,
            param2_db,
            format,
        } => solve_cmd(method, variant, &scene, param1_db, param2_db, format),
        Command::Search {
            variant,
            steps,
            gamma0,
            scene,
            format,
        } => search_cmd(variant, steps, gamma0, &scene, format),
        Command::Study {
            config,
            seed,
            out,
            format,
        } => study_cmd(&config, seed, out, format, workers),
        Command::Vta {
            field,
            delta_db,
            target,
            format,
        } => vta_cmd(&field, &delta_db, target, format),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line front end: `run`, `sweep`, `report` and `export`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{expand_grid, parse_grid, read_config, write_config, GridAxis};
use crate::error::{Error, Result};
use crate::io::{
    config_hash, load_json, read_sweep_csv, save_history_csv, save_json, save_svg, save_sweep_csv,
    save_vtk, Checkpoint, Manifest, VtkFields,
};
use crate::optimizer::{sweep, Evaluation, Optimizer, ProblemSpec, RunResult, RunStatus, SweepRow};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "LSMECH_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "lsmech",
    version,
    about = "Level-set topology optimization of compliant mechanisms"
)]
pub struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory. Defaults to a directory under $LSMECH_OUTPUT_ROOT
    /// (or ./runs) named after the config and its hash.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Also write the sensitivity fields `dtL` and `stress_sens` to VTK.
    #[arg(long, global = true)]
    pub debug_fields: bool,

    /// Suppress progress output.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one optimization.
    Run {
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run every condition of a parameter grid.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2` or linked `k1:k2=a1:b1,a2:b2`; repeat or join with `;`.
        #[arg(long, required = true)]
        grid: Vec<String>,
    },
    /// Collate the results of a sweep directory.
    Report { sweep_dir: PathBuf },
    /// Render a checkpoint.
    Export {
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        format: ExportFormat,
        /// Output file (default: next to the checkpoint).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Vtk,
    Svg,
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn default_dir(config: &Path, spec: &ProblemSpec, suffix: &str) -> PathBuf {
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    output_root().join(format!("{stem}{suffix}-{}", &config_hash(spec)[..8]))
}

fn write_design(
    dir: &Path,
    opt: &Optimizer<f64>,
    phi: &[f64],
    eval: &Evaluation<f64>,
) -> Result<()> {
    let nodal: Vec<f64> = phi
        .iter()
        .map(|&p| crate::levelset::heaviside(p, &opt.spec.heaviside))
        .collect();
    let fields = VtkFields {
        phi,
        density: &nodal,
        von_mises: &eval.stress.von_mises,
        relaxed_von_mises: &eval.stress.relaxed,
        stress_ratio: &eval.stress.ratio,
        dtl: None,
        stress_sens: None,
    };
    save_vtk(&dir.join("final.vtk"), &opt.mesh, &fields)?;
    save_svg(&dir.join("final.svg"), &opt.mesh, &eval.element_density)
}

/// Runs `spec` and writes its artifacts to `dir`.
pub fn run_to_dir(
    spec: &ProblemSpec,
    dir: &Path,
    resume: Option<&Path>,
    threads: usize,
    verbose: bool,
) -> Result<RunResult<f64>> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.txt"), write_config(spec))?;
    let opt = Optimizer::<f64>::new(spec.clone())?;
    let state = match resume {
        Some(path) => {
            let cp: Checkpoint = load_json(path)?;
            if cp.spec != *spec {
                return Err(Error::Cli(format!(
                    "checkpoint {} was written for a different configuration",
                    path.display()
                )));
            }
            cp.state
        }
        None => opt.initial_state()?,
    };
    let every = spec.checkpoint_every;
    let result = opt.run_from(state, |s| {
        if verbose && s.iter % 10 == 0 {
            if let Some(h) = s.history.last() {
                eprintln!(
                    "iter {:4}  objective {:.6e}  volume {:.4}  U_o {:.4e}  U_i {:.4e}",
                    h.iter, h.objective, h.volume, h.u_o, h.u_i
                );
            }
        }
        if every > 0 && s.iter % every == 0 {
            let cp = Checkpoint {
                spec: spec.clone(),
                state: s.clone(),
            };
            save_json(&dir.join("checkpoint.json"), &cp)?;
        }
        Ok(())
    })?;

    save_history_csv(&dir.join("history.csv"), &result.state.history)?;
    if let Some(eval) = &result.final_eval {
        write_design(dir, &opt, &result.state.phi.values, eval)?;
    }
    save_json(
        &dir.join("checkpoint.json"),
        &Checkpoint {
            spec: spec.clone(),
            state: result.state.clone(),
        },
    )?;
    let manifest = Manifest {
        config_hash: config_hash(spec),
        versions: Manifest::versions(),
        wall_time_seconds: result.wall_time,
        status: result.status.as_str().to_string(),
        reason: result.reason.clone(),
        disconnected: result.disconnected,
        iterations: result.state.history.len(),
        threads,
        final_row: result.last().copied(),
    };
    save_json(&dir.join("manifest.json"), &manifest)?;
    Ok(result)
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Cli("--threads must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Cli(e.to_string()))
}

/// Runs every grid condition in `dir/<label>` and writes `dir/sweep.csv`.
pub fn sweep_to_dir(
    base: &ProblemSpec,
    axes: &[GridAxis],
    dir: &Path,
    threads: Option<usize>,
    verbose: bool,
) -> Result<Vec<SweepRow>> {
    let conditions = expand_grid(base, axes)?;
    std::fs::create_dir_all(dir)?;
    let mut grid = String::new();
    for axis in axes {
        let values: Vec<String> = axis.values.iter().map(|v| v.join(":")).collect();
        let _ = writeln!(grid, "{}={}", axis.keys.join(":"), values.join(","));
    }
    std::fs::write(dir.join("grid.txt"), grid)?;
    let pool = thread_pool(threads)?;
    let n = pool.current_num_threads();
    let rows = pool.install(|| {
        sweep(&conditions, |label, spec| {
            let child = dir.join(label);
            let result = run_to_dir(spec, &child, None, n, false);
            let row = match &result {
                Ok(r) => SweepRow::from_result(label, spec, r),
                Err(e) => SweepRow::failed(label, spec, e),
            };
            save_sweep_csv(&child.join("result.csv"), std::slice::from_ref(&row))?;
            if verbose {
                eprintln!("condition {label}: {}", row.status);
            }
            result
        })
    })?;
    save_sweep_csv(&dir.join("sweep.csv"), &rows)?;
    Ok(rows)
}

/// Rows of every finished condition under `dir`, in condition order.
pub fn collect_sweep(dir: &Path) -> Result<Vec<SweepRow>> {
    if !dir.is_dir() {
        return Err(Error::Cli(format!("{} is not a directory", dir.display())));
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("result.csv").is_file())
        .collect();
    children.sort_by_key(|p| {
        let name = p
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("")
            .to_string();
        (name.len(), name)
    });
    let mut rows = Vec::new();
    for c in children {
        rows.extend(read_sweep_csv(&c.join("result.csv"))?);
    }
    if rows.is_empty() && dir.join("sweep.csv").is_file() {
        rows = read_sweep_csv(&dir.join("sweep.csv"))?;
    }
    if rows.is_empty() {
        return Err(Error::Cli(format!("no runs found in {}", dir.display())));
    }
    Ok(rows)
}

/// Fixed-width table with displacements in µm and stress in MPa.
pub fn format_report(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>9} {:>6} {:>6} {:>6} {:>10} {:>10} {:>8} {:>12}  status",
        "condition", "alpha", "beta", "mu", "U_o [um]", "U_i [um]", "U_o/U_i", "max vM [MPa]"
    );
    for r in rows {
        let ok = r.status != RunStatus::Degenerate.as_str() && r.u_o.is_finite();
        let num = |v: f64, scale: f64, prec: usize| {
            if ok && v.is_finite() {
                format!("{:.*}", prec, v * scale)
            } else {
                "N/A".to_string()
            }
        };
        let _ = writeln!(
            s,
            "{:>9} {:>6} {:>6} {:>6} {:>10} {:>10} {:>8} {:>12}  {}",
            r.condition,
            r.alpha,
            r.beta,
            r.mu,
            num(r.u_o, 1e6, 3),
            num(r.u_i, 1e6, 3),
            num(r.ratio, 1.0, 3),
            num(r.max_von_mises, 1e-6, 2),
            r.status
        );
    }
    s
}

/// Renders a checkpoint. With `debug`, VTK output also carries the
/// sensitivity fields of the next update.
pub fn export(
    checkpoint: &Path,
    format: ExportFormat,
    output: Option<&Path>,
    debug: bool,
) -> Result<PathBuf> {
    let cp: Checkpoint = load_json(checkpoint)?;
    let opt = Optimizer::<f64>::new(cp.spec)?;
    if cp.state.phi.values.len() != opt.mesh.node_count() {
        return Err(Error::SizeMismatch {
            expected: opt.mesh.node_count(),
            got: cp.state.phi.values.len(),
        });
    }
    let ext = match format {
        ExportFormat::Vtk => "vtk",
        ExportFormat::Svg => "svg",
    };
    let path = output.map_or_else(|| checkpoint.with_extension(ext), Path::to_path_buf);
    let (eval, _) = opt.evaluate(&cp.state.phi)?;
    match format {
        ExportFormat::Vtk => {
            let phi = &cp.state.phi.values;
            let nodal: Vec<f64> = phi
                .iter()
                .map(|&p| crate::levelset::heaviside(p, &opt.spec.heaviside))
                .collect();
            let sens = if debug {
                Some(opt.sensitivity_fields(&cp.state)?)
            } else {
                None
            };
            let fields = VtkFields {
                phi,
                density: &nodal,
                von_mises: &eval.stress.von_mises,
                relaxed_von_mises: &eval.stress.relaxed,
                stress_ratio: &eval.stress.ratio,
                dtl: sens.as_ref().map(|s| s.0.as_slice()),
                stress_sens: sens.as_ref().map(|s| s.1.as_slice()),
            };
            save_vtk(&path, &opt.mesh, &fields)?;
        }
        ExportFormat::Svg => save_svg(&path, &opt.mesh, &eval.element_density)?,
    }
    Ok(path)
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let verbose = !cli.quiet;
    match cli.command {
        Command::Run { config, resume } => {
            let spec = read_config(&config)?;
            let dir = cli.out.unwrap_or_else(|| default_dir(&config, &spec, ""));
            let r = run_to_dir(&spec, &dir, resume.as_deref(), 1, verbose)?;
            let last = r.last().copied();
            println!(
                "{}: {} after {} iterations in {:.1} s",
                dir.display(),
                r.status.as_str(),
                r.state.history.len(),
                r.wall_time
            );
            if let Some(h) = last {
                println!(
                    "U_o = {:.4e} m, U_i = {:.4e} m, volume = {:.4}",
                    h.u_o, h.u_i, h.volume
                );
            }
            if let Some(why) = &r.reason {
                println!("{why}");
            }
            if cli.debug_fields {
                let path = dir.join("debug.vtk");
                export(
                    &dir.join("checkpoint.json"),
                    ExportFormat::Vtk,
                    Some(&path),
                    true,
                )?;
            }
            Ok(match r.status {
                RunStatus::Degenerate => ExitCode::from(2),
                _ => ExitCode::SUCCESS,
            })
        }
        Command::Sweep { config, grid } => {
            let spec = read_config(&config)?;
            let axes = parse_grid(&grid.join(";"))?;
            let dir = cli
                .out
                .unwrap_or_else(|| default_dir(&config, &spec, "-sweep"));
            let rows = sweep_to_dir(&spec, &axes, &dir, cli.threads, verbose)?;
            print!("{}", format_report(&rows));
            println!("{} conditions written to {}", rows.len(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { sweep_dir } => {
            let rows = collect_sweep(&sweep_dir)?;
            let table = format_report(&rows);
            std::fs::write(sweep_dir.join("report.txt"), &table)?;
            save_sweep_csv(&sweep_dir.join("report.csv"), &rows)?;
            print!("{table}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Export {
            checkpoint,
            format,
            output,
        } => {
            let path = export(&checkpoint, format, output.as_deref(), cli.debug_fields)?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit
/// code: 0 success, 2 degenerate design, 1 any other error.
pub fn main_with_args<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e @ Error::Degenerate(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

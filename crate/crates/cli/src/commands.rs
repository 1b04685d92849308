//! The five subcommands. Each writes its artifacts under the output
//! directory and returns the file names it produced.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use blackrt::heat::EvaluatorKind;
use blackrt::market::MarketSummary;
use blackrt::properties::{self, CheckConfig, PropertyReport};
use blackrt::surface::SurfaceEstimates;
use blackrt::{fd, grid, io as csv, merton, transform, HeatSurface, PolicySample, RTSurface};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Compute(#[from] blackrt::Error),

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 2 for configuration and usage problems, 1 for failures while computing.
    pub fn exit_code(&self) -> u8 {
        use blackrt::Error as E;
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Compute(
                E::InvalidArgument(_)
                | E::InvalidSpec(_)
                | E::UnsupportedVariant { .. }
                | E::ConditionViolated { .. }
                | E::SingularVolatility
                | E::OutOfRange { .. }
                | E::Precondition(_),
            ) => 2,
            CliError::Compute(_) | CliError::Write { .. } => 1,
        }
    }
}

/// Flags shared by the subcommands.
#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub emit_h: bool,
    pub square: bool,
}

/// Artifacts written by a command, and whether any property check failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub checks_failed: bool,
    pub table: Option<String>,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Out<'a> {
    fn new(dir: &'a Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.dir.join(name);
        let wrap = |source| CliError::Write {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(wrap)?);
        body(&mut w)?;
        w.flush().map_err(wrap)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)
                .map_err(io::Error::from)
                .and_then(|_| writeln!(w))
                .map_err(|source| CliError::Write { path, source })
        })
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

pub fn check_config(cfg: &RunConfig) -> CheckConfig {
    let mut c = CheckConfig::new(
        cfg.market.lambda_sq(),
        cfg.market.horizon(),
        cfg.grid.x_max,
        cfg.grid.nx,
        cfg.grid.nt,
    );
    c.quad_order = cfg.grid.quad_order;
    c.route = cfg.checks.route;
    c.tolerance = cfg.checks.tolerance;
    c.buffer = cfg.grid.buffer;
    if let Some(z) = cfg.grid.z_range {
        c.z_range = z;
    }
    c
}

/// Output x grid plus any extra probe nodes.
fn solve_x_grid(cfg: &RunConfig) -> Vec<f64> {
    let mut x = check_config(cfg).x_grid();
    x.extend(
        cfg.grid
            .x_extra
            .iter()
            .copied()
            .filter(|&v| v > 0.0 && v < cfg.grid.x_max),
    );
    x.sort_by(f64::total_cmp);
    x.dedup();
    x
}

#[derive(Serialize)]
struct GridSummary {
    x_max: f64,
    nx: usize,
    nt: usize,
    x_extra: Vec<f64>,
}

#[derive(Serialize)]
struct SolveSummary {
    utility: String,
    variant: &'static str,
    evaluator: EvaluatorKind,
    quad_order: Option<usize>,
    market: MarketSummary,
    grid: GridSummary,
    provenance: &'static str,
    estimates: SurfaceEstimates,
}

struct Solved {
    heat: HeatSurface,
    surface: RTSurface,
    summary: SolveSummary,
}

fn solve_transform(cfg: &RunConfig) -> Result<Solved, CliError> {
    let cc = check_config(cfg);
    let heat = cfg.utility.heat(&cc)?;
    let surface = transform::build_surface(&heat, &solve_x_grid(cfg), &cc.t_grid())?;
    let summary = SolveSummary {
        utility: cfg.utility.name.clone(),
        variant: cfg.utility.spec().map_or("R(x)", |s| s.variant_name()),
        evaluator: heat.kind(),
        quad_order: heat.quadrature_order(),
        market: cfg.market.summary(),
        grid: GridSummary {
            x_max: cfg.grid.x_max,
            nx: cfg.grid.nx,
            nt: cfg.grid.nt,
            x_extra: cfg.grid.x_extra.clone(),
        },
        provenance: surface.provenance().label(),
        estimates: surface.estimates(),
    };
    Ok(Solved { heat, surface, summary })
}

fn h_z_grid(cfg: &RunConfig, heat: &HeatSurface) -> Result<Vec<f64>, CliError> {
    let (lo, hi) = match cfg.grid.z_range {
        Some(z) => z,
        None => heat.z_domain(cfg.grid.x_max / cfg.grid.nx as f64, cfg.grid.x_max)?,
    };
    Ok(grid::uniform(lo, hi, cfg.grid.nx))
}

fn write_solve(cfg: &RunConfig, opts: Options, out: &mut Out) -> Result<Solved, CliError> {
    let solved = solve_transform(cfg)?;
    if cfg.output.csv {
        out.write("surface.csv", |w| {
            solved.surface.write_csv(w).map_err(io_err(Path::new("surface.csv")))
        })?;
        if opts.emit_h {
            let z = h_z_grid(cfg, &solved.heat)?;
            let t = check_config(cfg).t_grid();
            out.write("h_surface.csv", |w| Ok(csv::write_h_csv(&solved.heat, &z, &t, w)?))?;
        }
    }
    if cfg.output.json {
        out.json("summary.json", &solved.summary)?;
    }
    Ok(solved)
}

/// Transform surface, JSON summary and optionally the `H` surface.
pub fn solve(cfg: &RunConfig, opts: Options) -> Result<Outcome, CliError> {
    let mut out = Out::new(&cfg.output.dir)?;
    write_solve(cfg, opts, &mut out)?;
    Ok(Outcome {
        dir: cfg.output.dir.clone(),
        files: out.files,
        ..Outcome::default()
    })
}

#[derive(Serialize)]
struct OracleDiff {
    nx: usize,
    nt: usize,
    x_max: f64,
    scheme: &'static str,
    /// `sup |r_fd - r_transform| / sup |r_transform|`.
    fd_vs_transform: Option<f64>,
    transform_skipped: Option<String>,
    /// `sup |sqrt(F) - r_fd| / sup |r_fd|`.
    sqrt_f_vs_black: Option<f64>,
}

fn write_oracle(cfg: &RunConfig, opts: Options, out: &mut Out) -> Result<(RTSurface, OracleDiff), CliError> {
    let cc = check_config(cfg);
    let fd_cfg = cfg.utility.fd_config(&cc)?;
    let black = fd::solve_black(&fd_cfg)?;
    let (fd_vs_transform, transform_skipped) = match cfg.utility.inverse() {
        Some(_) => {
            let heat = cfg.utility.heat(&cc)?;
            let reference = transform::build_surface(&heat, black.x(), black.t())?;
            (Some(black.sup_relative_diff(&reference)?), None)
        }
        None => (
            None,
            Some("no inverse marginal, transform surface unavailable".to_string()),
        ),
    };
    let square = if opts.square { Some(fd::solve_f(&fd_cfg)?) } else { None };
    let sqrt_f_vs_black = match &square {
        Some(f) => Some(black.sup_relative_diff_values(f.x(), f.t(), &fd::sqrt_values(f))?),
        None => None,
    };
    if cfg.output.csv {
        out.write("fd_surface.csv", |w| {
            black.write_csv(w).map_err(io_err(Path::new("fd_surface.csv")))
        })?;
        if let Some(f) = &square {
            out.write("fd_square.csv", |w| {
                write_square(f, w).map_err(io_err(Path::new("fd_square.csv")))
            })?;
        }
    }
    let diff = OracleDiff {
        nx: cfg.grid.nx,
        nt: cfg.grid.nt,
        x_max: cfg.grid.x_max,
        scheme: "semi_implicit",
        fd_vs_transform,
        transform_skipped,
        sqrt_f_vs_black,
    };
    if cfg.output.json {
        out.json("oracle_diff.json", &diff)?;
    }
    Ok((black, diff))
}

/// `x,t,F,Fx,Fxx,sqrtF` from a solve of the squared equation.
fn write_square<W: Write>(f: &RTSurface, mut w: W) -> io::Result<()> {
    writeln!(w, "x,t,F,Fx,Fxx,sqrtF")?;
    for (i, &t) in f.t().iter().enumerate() {
        for (j, &x) in f.x().iter().enumerate() {
            let v = f.r()[[i, j]];
            writeln!(
                w,
                "{x},{t},{v},{},{},{}",
                f.r_x()[[i, j]],
                f.r_xx()[[i, j]],
                v.max(0.0).sqrt()
            )?;
        }
    }
    Ok(())
}

/// Finite-difference surface, the squared solve with `--square`, and the
/// difference to the transform surface when one exists.
pub fn oracle(cfg: &RunConfig, opts: Options) -> Result<Outcome, CliError> {
    let mut out = Out::new(&cfg.output.dir)?;
    write_oracle(cfg, opts, &mut out)?;
    Ok(Outcome {
        dir: cfg.output.dir.clone(),
        files: out.files,
        ..Outcome::default()
    })
}

fn run_checks(cfg: &RunConfig) -> Result<PropertyReport, CliError> {
    if cfg.checks.ids.is_empty() {
        return Err(CliError::Usage("no checks selected".into()));
    }
    Ok(properties::run_checks(
        &cfg.utility,
        &cfg.checks.ids,
        &check_config(cfg),
    )?)
}

fn write_report(report: &PropertyReport, cfg: &RunConfig, out: &mut Out) -> Result<(), CliError> {
    if cfg.output.json {
        out.json("report.json", report)?;
    }
    Ok(())
}

/// Selected property checks; `checks_failed` is set iff one of them failed.
pub fn check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let report = run_checks(cfg)?;
    let mut out = Out::new(&cfg.output.dir)?;
    write_report(&report, cfg, &mut out)?;
    Ok(Outcome {
        dir: cfg.output.dir.clone(),
        files: out.files,
        checks_failed: report.any_failed(),
        table: Some(report.table()),
    })
}

/// Risk tolerance from the transform when available, otherwise from the
/// finite-difference surface.
fn policy_samples(cfg: &RunConfig, surface: &RTSurface) -> Vec<PolicySample> {
    let mut samples = Vec::with_capacity(surface.x().len() * surface.t().len());
    for (i, &t) in surface.t().iter().enumerate() {
        for (j, &x) in surface.x().iter().enumerate() {
            samples.push(merton::policy_for(&cfg.market, x, t, surface.r()[[i, j]]));
        }
    }
    samples
}

fn write_policy(cfg: &RunConfig, surface: &RTSurface, out: &mut Out) -> Result<(), CliError> {
    if cfg.output.csv {
        let samples = policy_samples(cfg, surface);
        let dim = cfg.market.dim();
        out.write("policy.csv", |w| {
            csv::write_policy_csv(&samples, dim, w).map_err(io_err(Path::new("policy.csv")))
        })?;
    }
    Ok(())
}

fn base_surface(cfg: &RunConfig) -> Result<RTSurface, CliError> {
    let cc = check_config(cfg);
    Ok(match cfg.utility.inverse() {
        Some(_) => transform::build_surface(&cfg.utility.heat(&cc)?, &cc.x_grid(), &cc.t_grid())?,
        None => fd::solve_black(&cfg.utility.fd_config(&cc)?)?,
    })
}

/// Optimal allocation `x,t,r,pi_1..pi_N,total` on the output grid.
pub fn policy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let surface = base_surface(cfg)?;
    let mut out = Out::new(&cfg.output.dir)?;
    write_policy(cfg, &surface, &mut out)?;
    Ok(Outcome {
        dir: cfg.output.dir.clone(),
        files: out.files,
        ..Outcome::default()
    })
}

#[derive(Serialize)]
struct CheckTally {
    total: usize,
    pass: usize,
    fail: usize,
    skipped: usize,
    precondition_failed: usize,
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    solve: Option<&'a SolveSummary>,
    solve_skipped: Option<&'static str>,
    oracle: &'a OracleDiff,
    checks: Option<CheckTally>,
    files: &'a [String],
}

/// Everything: transform surface (when available), oracle, checks (when
/// selected), policy and a bundle summary.
pub fn report(cfg: &RunConfig, opts: Options) -> Result<Outcome, CliError> {
    let mut out = Out::new(&cfg.output.dir)?;
    let solved = match cfg.utility.inverse() {
        Some(_) => Some(write_solve(cfg, opts, &mut out)?),
        None => None,
    };
    let (black, diff) = write_oracle(cfg, opts, &mut out)?;
    let report = if cfg.checks.ids.is_empty() {
        None
    } else {
        let r = run_checks(cfg)?;
        write_report(&r, cfg, &mut out)?;
        Some(r)
    };
    let policy_surface = match &solved {
        Some(s) => transform::build_surface(&s.heat, black.x(), black.t())?,
        None => black,
    };
    write_policy(cfg, &policy_surface, &mut out)?;

    let tally = report.as_ref().map(|r| {
        use blackrt::Verdict as V;
        let count = |v: V| r.records.iter().filter(|c| c.verdict == v).count();
        CheckTally {
            total: r.records.len(),
            pass: count(V::Pass),
            fail: count(V::Fail),
            skipped: count(V::Skipped),
            precondition_failed: count(V::PreconditionFailed),
        }
    });
    if cfg.output.json {
        let mut files = out.files.clone();
        files.push("report_summary.json".into());
        let summary = ReportSummary {
            solve: solved.as_ref().map(|s| &s.summary),
            solve_skipped: solved.is_none().then_some("no inverse marginal"),
            oracle: &diff,
            checks: tally,
            files: &files,
        };
        out.json("report_summary.json", &summary)?;
    }
    Ok(Outcome {
        dir: cfg.output.dir.clone(),
        files: out.files,
        checks_failed: report.as_ref().is_some_and(PropertyReport::any_failed),
        table: report.map(|r| r.table()),
    })
}

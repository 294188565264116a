//! The analysis commands. Each returns the text it produced so `main` decides
//! where it goes.

use nalgebra::DVector;

use onsager_core::curvature::lattice3::sweep;
use onsager_core::metric::weighted_form;
use onsager_core::validation::run_all;
use onsager_core::{
    analyze, geodesic_bvp, geodesic_ivp, integrate, parallel_transport, BvpOptions, ChartOptions, CurveSpec,
    GeodesicPath, MobilityModel, ReversibleChain, SimplexPoint,
};

use crate::config::{section, LoadedConfig};
use crate::error::CliError;
use crate::output::{float, floats, indexed, to_json, Csv};

/// Relative gap between the frame tensor and the chart oracle above which
/// `analyze` reports a numerical failure.
pub const ORACLE_TOLERANCE: f64 = 1e-5;

pub const DEFAULT_GRID: usize = 50;
pub const DEFAULT_SEED: u64 = 7;

/// Settings shared by every command.
pub struct Context {
    pub config: LoadedConfig,
    pub preset: Option<String>,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
}

impl Context {
    fn setup(&self) -> Result<(ReversibleChain, MobilityModel), CliError> {
        Ok((self.config.chain(self.preset.as_deref())?, self.config.mobility()?))
    }
}

fn point(values: &[f64]) -> Result<SimplexPoint, CliError> {
    Ok(SimplexPoint::from_slice(values)?)
}

fn potential(chain: &ReversibleChain, values: &[f64]) -> Result<DVector<f64>, CliError> {
    if values.len() != chain.n() {
        return Err(onsager_core::Error::DimensionMismatch {
            expected: chain.n(),
            got: values.len(),
        }
        .into());
    }
    Ok(DVector::from_column_slice(values))
}

fn chart_options(metric_step: Option<f64>, christoffel_step: Option<f64>) -> ChartOptions {
    let base = ChartOptions::default();
    ChartOptions {
        metric_step: metric_step.unwrap_or(base.metric_step),
        christoffel_step: christoffel_step.unwrap_or(base.christoffel_step),
    }
}

pub fn cmd_analyze(ctx: &Context) -> Result<(String, Option<CliError>), CliError> {
    let (chain, model) = ctx.setup()?;
    let cfg = ctx.config.config.analyze.as_ref();
    let p = match cfg.and_then(|a| a.point.as_ref()) {
        Some(values) => point(values)?,
        None => SimplexPoint::new(chain.pi().clone())?,
    };
    let opts = chart_options(cfg.and_then(|a| a.metric_step), cfg.and_then(|a| a.christoffel_step));
    let report = analyze(&chain, &model, &p, &opts)?;
    // The report is still written when the oracle disagrees, so the mismatch can be inspected.
    let failure = (!(report.oracle_residual <= ORACLE_TOLERANCE)).then(|| CliError::Check {
        name: "OracleMismatch",
        detail: format!(
            "frame tensor differs from the chart oracle by {:.3e} (tolerance {ORACLE_TOLERANCE:.0e})",
            report.oracle_residual
        ),
    });
    Ok((to_json(&report), failure))
}

pub fn cmd_simulate(ctx: &Context) -> Result<String, CliError> {
    let (chain, model) = ctx.setup()?;
    let cfg = section(&ctx.config.config.simulate, "simulate")?;
    let traj = integrate(&chain, &model, &point(&cfg.p0)?, cfg.t_end, cfg.dt)?;
    let n = chain.n();
    let mut header = vec!["t".to_string()];
    header.extend(indexed("p", n));
    header.extend(["D_f", "dissipation_quadratic", "dissipation_edgesum"].map(String::from));
    let mut csv = Csv::new(&header);
    for k in 0..traj.times.len() {
        let mut row = vec![float(traj.times[k])];
        row.extend(floats(traj.states[k].iter()));
        row.extend(floats([&traj.energy[k], &traj.dissipation_quadratic[k], &traj.dissipation_edge_sum[k]]));
        csv.row(&row);
    }
    Ok(csv.into_string())
}

fn path_csv(path: &GeodesicPath, n: usize) -> String {
    let mut header = vec!["t".to_string()];
    header.extend(indexed("gamma", n));
    header.extend(indexed("phi", n));
    header.push("speed".into());
    let mut csv = Csv::new(&header);
    for k in 0..path.times.len() {
        let mut row = vec![float(path.times[k])];
        row.extend(floats(path.points[k].iter()));
        row.extend(floats(path.potentials[k].iter()));
        row.push(float(path.speed[k]));
        csv.row(&row);
    }
    csv.into_string()
}

/// Initial value mode when `phi0` is given, boundary value mode when `p1` is.
pub fn cmd_geodesic(ctx: &Context) -> Result<String, CliError> {
    let (chain, model) = ctx.setup()?;
    let cfg = section(&ctx.config.config.geodesic, "geodesic")?;
    let p0 = point(&cfg.p0)?;
    match (&cfg.phi0, &cfg.p1) {
        (Some(phi0), None) => {
            let t_end = cfg.t_end.unwrap_or(1.0);
            let dt = cfg.dt.unwrap_or(1e-3);
            let path = geodesic_ivp(&chain, &model, &p0, &potential(&chain, phi0)?, t_end, dt)?;
            Ok(path_csv(&path, chain.n()))
        }
        (None, Some(p1)) => {
            let mut opts = BvpOptions::default();
            if let Some(steps) = cfg.steps {
                opts.steps = steps;
            }
            if let Some(tol) = cfg.tol {
                opts.tol = tol;
            }
            if let Some(seed) = ctx.seed {
                opts.seed = seed;
            }
            let sol = geodesic_bvp(&chain, &model, &p0, &point(p1)?, &opts)?;
            eprintln!(
                "boundary value solve: length {}, endpoint residual {:.3e}, {} iterations",
                float(sol.length),
                sol.residual,
                sol.iterations
            );
            Ok(path_csv(&sol.path, chain.n()))
        }
        _ => Err(CliError::Config(
            "`[geodesic]` needs exactly one of `phi0` (initial value) or `p1` (boundary value)".into(),
        )),
    }
}

pub fn cmd_transport(ctx: &Context) -> Result<String, CliError> {
    let (chain, model) = ctx.setup()?;
    let cfg = section(&ctx.config.config.transport, "transport")?;
    let n = chain.n();
    let etas = cfg
        .etas
        .iter()
        .map(|e| potential(&chain, e))
        .collect::<Result<Vec<_>, _>>()?;
    let curve = CurveSpec::Geodesic {
        p0: point(&cfg.p0)?,
        phi0: potential(&chain, &cfg.phi0)?,
        t_end: cfg.t_end,
    };
    let states = parallel_transport(&chain, &model, &curve, &etas, cfg.dt)?;
    let m = etas.len();
    let mut header = vec!["t".to_string()];
    header.extend(indexed("gamma", n));
    header.extend(indexed("phi", n));
    for a in 1..=m {
        header.extend(indexed(&format!("eta{a}"), n));
    }
    header.push("speed".into());
    for a in 1..=m {
        for b in a..=m {
            header.push(format!("gram_{a}_{b}"));
        }
    }
    let mut csv = Csv::new(&header);
    for s in &states {
        let theta = model.theta(&chain, &s.gamma)?;
        let mut row = vec![float(s.t)];
        row.extend(floats(s.gamma.iter()));
        row.extend(floats(s.phi.iter()));
        for eta in &s.etas {
            row.extend(floats(eta.iter()));
        }
        row.push(float(weighted_form(&chain, &theta, &s.phi, &s.phi).max(0.0).sqrt()));
        for a in 0..m {
            for b in a..m {
                row.push(float(weighted_form(&chain, &theta, &s.etas[a], &s.etas[b])));
            }
        }
        csv.row(&row);
    }
    Ok(csv.into_string())
}

pub fn cmd_sweep(ctx: &Context) -> Result<String, CliError> {
    let (chain, model) = ctx.setup()?;
    let cfg = ctx.config.config.sweep.as_ref();
    let r = ctx.grid.or(cfg.and_then(|s| s.grid)).unwrap_or(DEFAULT_GRID);
    if r == 0 {
        return Err(CliError::Config("grid resolution must be at least 1".into()));
    }
    let opts = chart_options(cfg.and_then(|s| s.metric_step), cfg.and_then(|s| s.christoffel_step));
    let rows = sweep(&chain, &model, r, &opts)?;
    let header = ["p_1", "p_2", "p_3", "K12", "R11", "R22", "S", "oracle_residual", "flag"].map(String::from);
    let mut csv = Csv::new(&header);
    for row in &rows {
        let mut cells = floats(row.p.iter());
        match &row.curvature {
            Some(c) => cells.extend(floats([&c.k12, &c.r11, &c.r22, &c.scalar])),
            None => cells.extend(std::iter::repeat_n(String::new(), 4)),
        }
        cells.push(float(row.oracle_residual));
        cells.push(row.flag.clone());
        csv.row(&cells);
    }
    Ok(csv.into_string())
}

/// Runs criteria 1 to 9; the table is returned together with the failures.
pub fn cmd_validate(ctx: &Context) -> (String, Option<CliError>) {
    let results = run_all(ctx.seed.unwrap_or(DEFAULT_SEED));
    let mut table = String::new();
    for r in &results {
        table.push_str(&r.line());
        table.push('\n');
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("criterion {} ({})", r.id, r.name))
        .collect();
    table.push_str(&format!("{} of {} criteria passed\n", results.len() - failed.len(), results.len()));
    let failure = (!failed.is_empty()).then(|| CliError::Validation(failed.join(", ")));
    (table, failure)
}

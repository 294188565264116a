//! Closed forms on the three-state path `1 - 2 - 3` with unit edge weights.
//!
//! In the cumulative coordinates `x1 = p1`, `x2 = p1 + p2` the metric is
//! `diag(1/theta1, 1/theta2)` with `theta1 = theta(p1, p2)` and
//! `theta2 = theta(p2, p3)`. Writing `l_k = log theta_k` and `d_a` for
//! partials in `x_a`, the curvature component `K = R_1212` is
//!
//! ```text
//! K = (1/theta2) [ d11 l2 / 2 + d1 (l1 - l2) d1 l2 / 4 ]
//!   + (1/theta1) [ d22 l1 / 2 + d2 (l2 - l1) d2 l1 / 4 ]
//! ```
//!
//! and the coordinate Ricci and scalar curvatures follow as
//! `R11 = K theta2`, `R22 = K theta1`, `S = 2 K theta1 theta2`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::chart::{chart_curvature, ChartOptions};
use super::{MConvention, TensorCache};
use crate::error::{Error, Result};
use crate::graph::ReversibleChain;
use crate::metric::LocalGeometry;
use crate::mobility::{MeanKind, MobilityModel, Scaling, SimplexPoint};

/// Relative gap below which two neighbouring components count as equal.
pub const EQUAL_COMPONENT_TOL: f64 = 1e-6;

/// Curvature quantities in cumulative coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice3Curvature {
    pub k12: f64,
    pub r11: f64,
    pub r22: f64,
    pub scalar: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl Lattice3Curvature {
    fn from_k(k12: f64, theta1: f64, theta2: f64) -> Self {
        Self {
            k12,
            r11: k12 * theta2,
            r22: k12 * theta1,
            scalar: 2.0 * k12 * theta1 * theta2,
            theta1,
            theta2,
        }
    }
}

/// First and second partials of `log theta1`, `log theta2` in cumulative coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogPartials {
    pub d1_l1: f64,
    pub d2_l1: f64,
    pub d22_l1: f64,
    pub d1_l2: f64,
    pub d2_l2: f64,
    pub d11_l2: f64,
}

impl LogPartials {
    pub fn curvature(&self, theta1: f64, theta2: f64) -> f64 {
        (0.5 * self.d11_l2 + 0.25 * (self.d1_l1 - self.d1_l2) * self.d1_l2) / theta2
            + (0.5 * self.d22_l1 + 0.25 * (self.d2_l2 - self.d2_l1) * self.d2_l1) / theta1
    }
}

/// Independent evaluations of `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormRoute {
    /// Cumulative partials by the chain rule from the mobility's own partials.
    ChainRule,
    /// Tabulated log-partials of the f-mean or geometric mean.
    LogPartialTable,
    /// Closed expression for a general f-mean in terms of `f''`, `f'''`.
    FMeanFormula,
    /// The f-mean expression specialised to the logarithmic mean.
    LogMeanFormula,
    /// The f-mean expression specialised to the alpha power mean.
    PowerMeanFormula,
    /// Closed expressions for the geometric mean.
    GeometricFormula,
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteValue {
    pub route: ClosedFormRoute,
    pub k12: Option<f64>,
    pub error: Option<&'static str>,
}

fn ensure_lattice(chain: &ReversibleChain) -> Result<()> {
    if chain.is_lattice3() {
        Ok(())
    } else {
        Err(Error::NotLattice(
            "expected three states joined by unit weights on 1-2 and 2-3 only".into(),
        ))
    }
}

fn edge_pair(chain: &ReversibleChain) -> Result<(usize, usize)> {
    ensure_lattice(chain)?;
    let e1 = chain.edge_index(0, 1).expect("lattice edge 1-2");
    let e2 = chain.edge_index(1, 2).expect("lattice edge 2-3");
    Ok((e1, e2))
}

/// Mobility pair `(theta1, theta2)` on the two lattice edges.
pub fn lattice_thetas(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint) -> Result<(f64, f64)> {
    let (e1, e2) = edge_pair(chain)?;
    let theta = model.theta(chain, p)?;
    Ok((theta[e1], theta[e2]))
}

/// Cumulative log-partials from the analytic partials of the mobility in `p`.
pub fn chain_rule_partials(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint) -> Result<(LogPartials, f64, f64)> {
    let (e1, e2) = edge_pair(chain)?;
    let jet = model.theta_jet(chain, p)?;
    let a = jet.edges[e1];
    let b = jet.edges[e2];
    let (t1, t2) = (a.theta, b.theta);
    let d2_l1 = a.d_j / t1;
    let d1_l2 = -b.d_i / t2;
    let lp = LogPartials {
        d1_l1: (a.d_i - a.d_j) / t1,
        d2_l1,
        d22_l1: a.d_jj / t1 - d2_l1 * d2_l1,
        d1_l2,
        d2_l2: (b.d_i - b.d_j) / t2,
        d11_l2: b.d_ii / t2 - d1_l2 * d1_l2,
    };
    Ok((lp, t1, t2))
}

/// `K`, `R11`, `R22`, `S` through chain-rule partials.
pub fn lattice3_closed_forms(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint) -> Result<Lattice3Curvature> {
    let (lp, t1, t2) = chain_rule_partials(chain, model, p)?;
    Ok(Lattice3Curvature::from_k(lp.curvature(t1, t2), t1, t2))
}

/// The same quantities from the general curvature tensor: `K` is
/// `<R(E1, E2) E2, E1>` for the coordinate fields `E1 = (1, -1, 0)`,
/// `E2 = (0, 1, -1)`, and the Ricci components contract with the inverse
/// coordinate metric.
pub fn lattice3_general(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p: &SimplexPoint,
    conv: MConvention,
) -> Result<Lattice3Curvature> {
    let (t1, t2) = lattice_thetas(chain, model, p)?;
    let geo = LocalGeometry::new(chain, model, p.clone())?;
    let fields = [DVector::from_vec(vec![1.0, -1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0, -1.0])];
    let phis: Vec<_> = fields.iter().map(|v| geo.potential(v)).collect();
    let cache = TensorCache::new(&geo, &phis, conv);
    let g = DMatrix::from_fn(2, 2, |a, b| geo.inner(&phis[a], &phis[b]));
    let ginv = g.try_inverse().ok_or(Error::NearSingular(2))?;
    let ric = DMatrix::from_fn(2, 2, |j, k| {
        let mut s = 0.0;
        for i in 0..2 {
            for l in 0..2 {
                s += ginv[(i, l)] * cache.riemann(i, j, k, l);
            }
        }
        s
    });
    let scalar = (0..2).map(|j| (0..2).map(|k| ginv[(j, k)] * ric[(j, k)]).sum::<f64>()).sum();
    Ok(Lattice3Curvature {
        k12: cache.riemann(0, 1, 1, 0),
        r11: ric[(0, 0)],
        r22: ric[(1, 1)],
        scalar,
        theta1: t1,
        theta2: t2,
    })
}

/// `K` from the lowered chart tensor of the finite difference oracle.
pub fn lattice3_chart(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint, opts: &ChartOptions) -> Result<f64> {
    ensure_lattice(chain)?;
    let c = chart_curvature(chain, model, p, opts)?;
    let e1 = DVector::from_vec(vec![1.0, -1.0, 0.0]);
    let e2 = DVector::from_vec(vec![0.0, 1.0, -1.0]);
    Ok(c.contract(&e1, &e2, &e2, &e1))
}

/// Effective constant `c` with ratios `c p_i` for f-means, or prefactor `c`
/// in `c (p_i p_j)^beta` for the geometric mean.
fn effective_scale(chain: &ReversibleChain, model: &MobilityModel) -> Result<f64> {
    match (model.scaling(), model.kind()) {
        (Scaling::Uniform(c), _) => Ok(c),
        (Scaling::Stationary, kind) => {
            let pi = chain.pi();
            if (pi.max() - pi.min()).abs() > 1e-12 {
                return Err(Error::InvalidParameter("closed forms need a uniform stationary distribution".into()));
            }
            let s = 1.0 / pi[0];
            Ok(match kind {
                MeanKind::GeometricMean { beta } => (s * s).powf(*beta),
                _ => s,
            })
        }
    }
}

/// `f''` and `f'''` of the f-mean generators, with the logarithmic mean as
/// the power `1` member: `f''(z) = z^((a-3)/2)`.
fn power_exponent(model: &MobilityModel) -> Option<f64> {
    match model.kind() {
        MeanKind::KlLogMean => Some(1.0),
        MeanKind::AlphaMean { alpha } => Some(*alpha),
        _ => None,
    }
}

fn f2(a: f64, z: f64) -> f64 {
    z.powf(0.5 * (a - 3.0))
}

fn f3(a: f64, z: f64) -> f64 {
    0.5 * (a - 3.0) * z.powf(0.5 * (a - 5.0))
}

/// `f'` up to an additive constant, enough for differences.
fn f1(a: f64, z: f64) -> f64 {
    if (a - 1.0).abs() < 1e-12 {
        z.ln()
    } else {
        2.0 / (a - 1.0) * z.powf(0.5 * (a - 1.0))
    }
}

fn require_distinct(p: &[f64]) -> Result<()> {
    for (i, j) in [(0usize, 1usize), (1, 2)] {
        if (p[i] - p[j]).abs() <= EQUAL_COMPONENT_TOL * p[i].max(p[j]) {
            return Err(Error::EqualComponents(i + 1, j + 1));
        }
    }
    Ok(())
}

/// Tabulated log-partials for the f-means and the geometric mean.
pub fn table_partials(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint) -> Result<LogPartials> {
    ensure_lattice(chain)?;
    let c = effective_scale(chain, model)?;
    let (p1, p2, p3) = (p[0], p[1], p[2]);
    if let MeanKind::GeometricMean { beta } = model.kind() {
        let b = *beta;
        return Ok(LogPartials {
            d1_l1: b * (1.0 / p1 - 1.0 / p2),
            d2_l1: b / p2,
            d22_l1: -b / (p2 * p2),
            d1_l2: -b / p2,
            d2_l2: b * (1.0 / p2 - 1.0 / p3),
            d11_l2: -b / (p2 * p2),
        });
    }
    let a = power_exponent(model).ok_or_else(|| Error::InvalidParameter("no tabulated partials for custom means".into()))?;
    require_distinct(p.as_slice())?;
    let (z1, z2, z3) = (c * p1, c * p2, c * p3);
    let delta1 = f1(a, z1) - f1(a, z2);
    let delta2 = f1(a, z2) - f1(a, z3);
    let (g1, g2, g3) = (f2(a, z1), f2(a, z2), f2(a, z3));
    let h2 = f3(a, z2);
    Ok(LogPartials {
        d1_l1: 2.0 / (p1 - p2) - c * (g1 + g2) / delta1,
        d2_l1: -1.0 / (p1 - p2) + c * g2 / delta1,
        d22_l1: -1.0 / (p1 - p2).powi(2) + (c * g2 / delta1).powi(2) + c * c * h2 / delta1,
        d1_l2: -1.0 / (p2 - p3) + c * g2 / delta2,
        d2_l2: 2.0 / (p2 - p3) - c * (g2 + g3) / delta2,
        d11_l2: -1.0 / (p2 - p3).powi(2) + (c * g2 / delta2).powi(2) - c * c * h2 / delta2,
    })
}

/// General f-mean expression with the generator derivatives supplied.
fn fmean_expression(p: &[f64], c: f64, t1: f64, t2: f64, f2v: [f64; 3], f3v2: f64) -> f64 {
    let (p1, p2, p3) = (p[0], p[1], p[2]);
    let [g1, g2, g3] = f2v;
    let a = (1.5 / t1 - 0.5 * g2 * g2 * t1 - (g2 - c * f3v2 * (p2 - p1))) / (2.0 * (p1 - p2).powi(2));
    let b = (1.5 / t2 - 0.5 * g2 * g2 * t2 - (g2 - c * f3v2 * (p2 - p3))) / (2.0 * (p2 - p3).powi(2));
    let cross = 1.0 / (4.0 * (p2 - p1) * (p2 - p3));
    let d = cross * (2.0 - (g2 + g3) * t2) * (g2 - 1.0 / t1);
    let e = cross * (2.0 - (g1 + g2) * t1) * (g2 - 1.0 / t2);
    -(a + b + d + e)
}

/// `K` for an f-mean through its `f''`, `f'''` expression.
pub fn fmean_formula(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint) -> Result<f64> {
    let a = power_exponent(model).ok_or_else(|| Error::InvalidParameter("expression needs an f-mean".into()))?;
    let c = effective_scale(chain, model)?;
    require_distinct(p.as_slice())?;
    let (t1, t2) = lattice_thetas(chain, model, p)?;
    let f2v = [f2(a, c * p[0]), f2(a, c * p[1]), f2(a, c * p[2])];
    Ok(fmean_expression(p.as_slice(), c, t1, t2, f2v, f3(a, c * p[1])))
}

/// `K` for the logarithmic mean written out with `f''(z) = 1/z`.
pub fn log_mean_formula(c: f64, p: &[f64]) -> Result<f64> {
    require_distinct(p)?;
    let (p1, p2, p3) = (p[0], p[1], p[2]);
    let log_mean = |x: f64, y: f64| c * (x - y) / (x.ln() - y.ln());
    let (t1, t2) = (log_mean(p1, p2), log_mean(p2, p3));
    let a = (1.5 / t1 + (p1 / p2 - 2.0) / (c * p2) - t1 / (2.0 * c * c * p2 * p2)) / (2.0 * (p1 - p2).powi(2));
    let b = (1.5 / t2 + (p3 / p2 - 2.0) / (c * p2) - t2 / (2.0 * c * c * p2 * p2)) / (2.0 * (p2 - p3).powi(2));
    let cross = 1.0 / (4.0 * (p2 - p1) * (p2 - p3));
    let d = cross * (2.0 - (1.0 / p2 + 1.0 / p3) * t2 / c) * (1.0 / (c * p2) - 1.0 / t1);
    let e = cross * (2.0 - (1.0 / p1 + 1.0 / p2) * t1 / c) * (1.0 / (c * p2) - 1.0 / t2);
    Ok(-(a + b + d + e))
}

/// `K` for the alpha power mean written out with `f''(z) = z^((alpha-3)/2)`.
pub fn power_mean_formula(alpha: f64, c: f64, p: &[f64]) -> Result<f64> {
    require_distinct(p)?;
    let (p1, p2, p3) = (p[0], p[1], p[2]);
    let e = 0.5 * (alpha - 1.0);
    let mean = |x: f64, y: f64| 0.5 * c.powf(0.5 * (3.0 - alpha)) * (alpha - 1.0) * (x - y) / (x.powf(e) - y.powf(e));
    let (t1, t2) = (mean(p1, p2), mean(p2, p3));
    let q = 0.5 * (alpha - 3.0);
    let (s1, s2, s3) = ((c * p1).powf(q), (c * p2).powf(q), (c * p3).powf(q));
    let s2sq = (c * p2).powf(alpha - 3.0);
    let third = c * q * (c * p2).powf(0.5 * (alpha - 5.0));
    let a = (1.5 / t1 - 0.5 * s2sq * t1 - (s2 - third * (p2 - p1))) / (2.0 * (p1 - p2).powi(2));
    let b = (1.5 / t2 - 0.5 * s2sq * t2 - (s2 - third * (p2 - p3))) / (2.0 * (p2 - p3).powi(2));
    let cross = 1.0 / (4.0 * (p2 - p1) * (p2 - p3));
    let d = cross * (2.0 - (s2 + s3) * t2) * (s2 - 1.0 / t1);
    let f = cross * (2.0 - (s1 + s2) * t1) * (s2 - 1.0 / t2);
    Ok(-(a + b + d + f))
}

/// `K`, `R11`, `R22`, `S` for `theta = c (p_i p_{i+1})^beta` written out.
pub fn geometric_formula(beta: f64, c: f64, p: &[f64]) -> Lattice3Curvature {
    let (p1, p2, p3) = (p[0], p[1], p[2]);
    let b = beta;
    let t1 = c * (p1 * p2).powf(b);
    let t2 = c * (p2 * p3).powf(b);
    let left = b / (p2 * p2) + b * b / (2.0 * p1 * p2);
    let right = b / (p2 * p2) + b * b / (2.0 * p2 * p3);
    let k12 = -0.5 * (left / t2 + right / t1);
    let r11 = -0.5 * (left + (p3 / p1).powf(b) * right);
    let r22 = -0.5 * (right + (p1 / p3).powf(b) * left);
    let scalar = -c
        * b
        * (p1.powf(b) * p2.powf(b - 2.0)
            + p2.powf(b - 2.0) * p3.powf(b)
            + 0.5 * b * (p1.powf(b - 1.0) * p2.powf(b - 1.0) + p2.powf(b - 1.0) * p3.powf(b - 1.0)));
    Lattice3Curvature {
        k12,
        r11,
        r22,
        scalar,
        theta1: t1,
        theta2: t2,
    }
}

/// Every closed form route that applies to the model.
pub fn closed_form_routes(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint) -> Result<Vec<RouteValue>> {
    ensure_lattice(chain)?;
    let mut out = Vec::new();
    let mut push = |route, r: Result<f64>| {
        out.push(match r {
            Ok(v) => RouteValue {
                route,
                k12: Some(v),
                error: None,
            },
            Err(e) => RouteValue {
                route,
                k12: None,
                error: Some(e.name()),
            },
        })
    };
    push(ClosedFormRoute::ChainRule, lattice3_closed_forms(chain, model, p).map(|c| c.k12));
    let custom = matches!(model.kind(), MeanKind::Custom(_));
    if !custom {
        push(
            ClosedFormRoute::LogPartialTable,
            table_partials(chain, model, p).and_then(|lp| {
                let (t1, t2) = lattice_thetas(chain, model, p)?;
                Ok(lp.curvature(t1, t2))
            }),
        );
    }
    let scale = effective_scale(chain, model);
    match model.kind() {
        MeanKind::KlLogMean => {
            push(ClosedFormRoute::FMeanFormula, fmean_formula(chain, model, p));
            push(ClosedFormRoute::LogMeanFormula, scale.and_then(|c| log_mean_formula(c, p.as_slice())));
        }
        MeanKind::AlphaMean { alpha } => {
            push(ClosedFormRoute::FMeanFormula, fmean_formula(chain, model, p));
            push(ClosedFormRoute::PowerMeanFormula, scale.and_then(|c| power_mean_formula(*alpha, c, p.as_slice())));
        }
        MeanKind::GeometricMean { beta } => {
            push(ClosedFormRoute::GeometricFormula, scale.map(|c| geometric_formula(*beta, c, p.as_slice()).k12));
        }
        MeanKind::Custom(_) => {}
    }
    Ok(out)
}

/// Lattice section of a curvature report.
#[derive(Debug, Clone, Serialize)]
pub struct Lattice3Report {
    /// Values from the general curvature tensor.
    pub general: Lattice3Curvature,
    /// Values from chain-rule partials.
    pub closed_form: Lattice3Curvature,
    pub routes: Vec<RouteValue>,
    /// Largest relative gap between any available route and the general value.
    pub max_route_deviation: f64,
}

pub fn lattice3_report(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p: &SimplexPoint,
    conv: MConvention,
) -> Result<Lattice3Report> {
    let general = lattice3_general(chain, model, p, conv)?;
    let closed_form = lattice3_closed_forms(chain, model, p)?;
    let routes = closed_form_routes(chain, model, p)?;
    let scale = general.k12.abs().max(f64::MIN_POSITIVE);
    let max_route_deviation = routes
        .iter()
        .filter_map(|r| r.k12)
        .fold(0.0f64, |m, v| m.max((v - general.k12).abs() / scale));
    Ok(Lattice3Report {
        general,
        closed_form,
        routes,
        max_route_deviation,
    })
}

/// One point of a curvature sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: [f64; 3],
    pub curvature: Option<Lattice3Curvature>,
    /// Relative gap between the closed form and the chart oracle.
    pub oracle_residual: f64,
    /// Empty for regular points; otherwise names the degeneracy or error.
    pub flag: String,
}

/// Interior point `(i, j)` of an `r x r` grid: `p1 = u`, `p2 = (1 - u) v`,
/// `p3 = (1 - u)(1 - v)` with `u = (i + 1)/(r + 1)`, `v = (j + 1)/(r + 1)`.
pub fn grid_point(i: usize, j: usize, r: usize) -> [f64; 3] {
    let u = (i + 1) as f64 / (r + 1) as f64;
    let v = (j + 1) as f64 / (r + 1) as f64;
    let p2 = (1.0 - u) * v;
    [u, p2, 1.0 - u - p2]
}

fn sweep_point(chain: &ReversibleChain, model: &MobilityModel, p: [f64; 3], opts: &ChartOptions) -> SweepRow {
    let evaluate = || -> Result<(Lattice3Curvature, f64)> {
        let point = SimplexPoint::from_slice(&p)?;
        let c = lattice3_closed_forms(chain, model, &point)?;
        let oracle = lattice3_chart(chain, model, &point, opts)?;
        Ok((c, (c.k12 - oracle).abs() / c.k12.abs().max(f64::MIN_POSITIVE)))
    };
    match evaluate() {
        Ok((c, residual)) => {
            let flag = if model.has_divergence() && require_distinct(&p).is_err() {
                "equal-components".to_string()
            } else {
                String::new()
            };
            SweepRow {
                p,
                curvature: Some(c),
                oracle_residual: residual,
                flag,
            }
        }
        Err(e) => SweepRow {
            p,
            curvature: None,
            oracle_residual: f64::NAN,
            flag: e.name().to_string(),
        },
    }
}

/// Curvature over the `r x r` interior grid of [`grid_point`], evaluated in
/// parallel and returned in row-major grid order.
pub fn sweep(chain: &ReversibleChain, model: &MobilityModel, r: usize, opts: &ChartOptions) -> Result<Vec<SweepRow>> {
    ensure_lattice(chain)?;
    if r == 0 {
        return Err(Error::InvalidParameter("grid resolution must be positive".into()));
    }
    Ok((0..r * r)
        .into_par_iter()
        .map(|k| sweep_point(chain, model, grid_point(k / r, k % r, r), opts))
        .collect())
}

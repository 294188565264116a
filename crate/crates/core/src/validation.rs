//! Cross-check suite: nine numerical criteria with pinned tolerances and
//! runtime bounds, plus seeded generators for random test cases.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::connection::{geodesic_bvp, geodesic_ivp, parallel_transport, BvpOptions, CurveSpec};
use crate::curvature::chart::{chart_curvature, ChartOptions};
use crate::curvature::lattice3::{lattice3_closed_forms, lattice3_general, sweep, grid_point};
use crate::curvature::{analyze, explicit_tensor, MConvention};
use crate::dynamics::{exact_master_solution, gradient_flow_rhs, integrate, master_rhs, DivergenceEnergy};
use crate::error::Result;
use crate::graph::ReversibleChain;
use crate::metric::{center, weighted_form, LocalGeometry};
use crate::mobility::{MobilityModel, SimplexPoint};

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub time_limit: Duration,
}

impl CriterionResult {
    /// One-line summary: `[PASS] 3 connection identities (0.41 s / 10 s): ...`.
    pub fn line(&self) -> String {
        format!(
            "[{}] {} {} ({:.2} s / {} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.time_limit.as_secs(),
            self.detail
        )
    }
}

/// Ids, names and runtime limits of the criteria.
pub const CRITERIA: [(u8, &str, u64); 9] = [
    (1, "gradient-flow identity", 1),
    (2, "dissipation and relaxation", 1),
    (3, "connection identities", 10),
    (4, "parallel transport isometry", 30),
    (5, "geodesic conservation", 30),
    (6, "curvature route agreement", 60),
    (7, "three-state closed forms", 10),
    (8, "sign laws", 120),
    (9, "hessian along geodesics", 30),
];

/// `|a - b| / max(1, |a|, |b|)`.
fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random connected reversible chain on `n` states: a random spanning path
/// plus each remaining pair with probability one half.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> ReversibleChain {
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let mut omega = DMatrix::zeros(n, n);
    for w in order.windows(2) {
        let x = rng.random_range(0.5..2.0);
        omega[(w[0], w[1])] = x;
        omega[(w[1], w[0])] = x;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if omega[(i, j)] == 0.0 && rng.random_bool(0.5) {
                let x = rng.random_range(0.5..2.0);
                omega[(i, j)] = x;
                omega[(j, i)] = x;
            }
        }
    }
    let pi = random_point(rng, n).into_inner();
    ReversibleChain::from_weights(&omega, &pi).expect("random chain is valid")
}

/// A random interior point with entries within a factor three of each other.
pub fn random_point(rng: &mut ChaCha8Rng, n: usize) -> SimplexPoint {
    let p = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
    SimplexPoint::normalized(p).expect("positive vector")
}

/// A random mean-zero potential with entries in `[-1, 1]` before centering.
pub fn random_potential(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    center(&DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
}

/// Built-in mobility models cycled by `k`, with randomised parameters.
pub fn random_model(rng: &mut ChaCha8Rng, k: usize) -> MobilityModel {
    match k % 3 {
        0 => MobilityModel::kl(),
        1 => {
            let alpha = [-1.0, 0.0, 0.5, 2.0, 4.0][rng.random_range(0..5)];
            MobilityModel::alpha(alpha).expect("alpha != 1")
        }
        _ => MobilityModel::geometric(rng.random_range(0.25..2.0)).expect("finite beta"),
    }
}

/// Models that carry a divergence, cycled by `k`.
pub fn random_divergence_model(rng: &mut ChaCha8Rng, k: usize) -> MobilityModel {
    match k % 2 {
        0 => MobilityModel::kl(),
        _ => {
            let alpha = [-1.0, 0.0, 0.5, 2.0, 4.0][rng.random_range(0..5)];
            MobilityModel::alpha(alpha).expect("alpha != 1")
        }
    }
}

/// Rescales `phi` so that the Euclidean velocity `L Phi` moves every
/// component by at most `fraction` of its value per unit time.
pub fn moderate_potential(geo: &LocalGeometry, phi: &DVector<f64>, fraction: f64) -> DVector<f64> {
    let v = geo.tangent(phi);
    let worst = v.iter().zip(geo.point.iter()).fold(0.0f64, |m, (v, p)| m.max(v.abs() / p));
    if worst == 0.0 {
        phi.clone()
    } else {
        phi * (fraction / worst)
    }
}

fn gram(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint, etas: &[DVector<f64>]) -> Result<[f64; 3]> {
    let theta = model.theta(chain, p)?;
    Ok([
        weighted_form(chain, &theta, &etas[0], &etas[0]),
        weighted_form(chain, &theta, &etas[0], &etas[1]),
        weighted_form(chain, &theta, &etas[1], &etas[1]),
    ])
}

type Check = Result<(bool, String)>;

fn criterion_1(seed: u64) -> Check {
    let chain = ReversibleChain::triangle_reaction();
    let model = MobilityModel::kl();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = SimplexPoint::normalized(DVector::from_fn(3, |_, _| r.random_range(0.01..1.0)))?;
        let flow = gradient_flow_rhs(&chain, &model, &p)?;
        worst = worst.max((flow - master_rhs(&chain, &p)).amax());
    }
    Ok((worst < 1e-10, format!("max |-L grad D - Qp| = {worst:.3e} over 1000 points (tol 1e-10)")))
}

fn criterion_2(_seed: u64) -> Check {
    let chain = ReversibleChain::triangle_reaction();
    let model = MobilityModel::kl();
    let p0 = SimplexPoint::from_slice(&[0.7, 0.2, 0.1])?;
    let traj = integrate(&chain, &model, &p0, 20.0, 0.01)?;
    let rise = traj.energy.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let formula_gap = traj
        .dissipation_quadratic
        .iter()
        .zip(&traj.dissipation_edge_sum)
        .map(|(a, b)| rel_gap(*a, *b))
        .fold(0.0, f64::max);
    let last = traj.states.last().expect("non-empty trajectory");
    let oracle = exact_master_solution(&chain, &p0, 20.0);
    let to_oracle = (&**last - &oracle).amax();
    let pi = DVector::from_vec(vec![4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]);
    let to_pi = (&**last - &pi).amax();
    let passed = rise <= 1e-9 && formula_gap <= 1e-10 && to_oracle < 1e-6 && to_pi < 1e-6;
    Ok((
        passed,
        format!(
            "largest energy increase {rise:.3e} (slack 1e-9), dissipation formula gap {formula_gap:.3e} (1e-10), \
             |p(T) - exp(TK)p0| = {to_oracle:.3e}, |p(T) - pi| = {to_pi:.3e} (1e-6)"
        ),
    ))
}

fn criterion_3(seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut torsion, mut split, mut compat): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for case in 0..200 {
        let n = 3 + case % 4;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let p = random_point(&mut r, n);
        let geo = LocalGeometry::new(&chain, &model, p.clone())?;
        let f: Vec<_> = (0..3).map(|_| random_potential(&mut r, n)).collect();
        let n12 = geo.levi_civita(&f[0], &f[1], None).vector;
        let n21 = geo.levi_civita(&f[1], &f[0], None).vector;
        let comm = geo.commutator(&f[0], &f[1]);
        let scale = 1f64.max(n12.amax()).max(n21.amax());
        torsion = torsion.max((&n12 - &n21 - comm).amax() / scale);
        let vg = geo.tangent(&geo.gamma(&f[0], &f[1]));
        split = split.max((&n12 + &n21 - &vg).amax() / scale.max(vg.amax()));

        // V1 <V2, V3> by central differences along V1 with constant potentials.
        let v1 = geo.tangent(&f[0]);
        let h = 1e-4 * p.min() / v1.amax().max(1e-300);
        let at = |s: f64| -> Result<f64> {
            let q = SimplexPoint::with_tolerance(&*p + &v1 * s, 1e-10)?;
            let theta = model.theta(&chain, &q)?;
            Ok(weighted_form(&chain, &theta, &f[1], &f[2]))
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        let rhs = geo.levi_civita(&f[0], &f[1], Some(&f[2])).scalar.unwrap_or(0.0)
            + geo.levi_civita(&f[0], &f[2], Some(&f[1])).scalar.unwrap_or(0.0);
        compat = compat.max(rel_gap(fd, rhs));
    }
    Ok((
        torsion <= 1e-10 && split <= 1e-10 && compat <= 1e-5,
        format!(
            "torsion {torsion:.3e} (1e-10), symmetric part vs V_Gamma {split:.3e} (1e-10), \
             metric compatibility {compat:.3e} (1e-5); 200 cases, n in 3..=6"
        ),
    ))
}

fn criterion_4(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut drift: f64 = 0.0;
    for case in 0..50 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let p0 = random_point(&mut r, n);
        let geo = LocalGeometry::new(&chain, &model, p0.clone())?;
        let phi0 = moderate_potential(&geo, &random_potential(&mut r, n), 0.3);
        let etas = [random_potential(&mut r, n), random_potential(&mut r, n)];
        let curve = CurveSpec::Geodesic {
            p0: p0.clone(),
            phi0,
            t_end: 1.0,
        };
        let states = parallel_transport(&chain, &model, &curve, &etas, 1e-3)?;
        let g0 = gram(&chain, &model, &p0, &states[0].etas)?;
        for s in &states {
            let g = gram(&chain, &model, &s.gamma, &s.etas)?;
            for k in 0..3 {
                drift = drift.max(rel_gap(g[k], g0[k]));
            }
        }
    }
    Ok((drift < 1e-7, format!("Gram drift {drift:.3e} over T = 1, dt = 1e-3, 50 cases (tol 1e-7)")))
}

fn criterion_5(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut speed_drift: f64 = 0.0;
    let mut endpoint: f64 = 0.0;
    for case in 0..20 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let p0 = random_point(&mut r, n);
        let geo = LocalGeometry::new(&chain, &model, p0.clone())?;
        let phi0 = moderate_potential(&geo, &random_potential(&mut r, n), 0.3);
        let path = geodesic_ivp(&chain, &model, &p0, &phi0, 1.0, 1e-3)?;
        let s0 = path.speed[0];
        for s in &path.speed {
            speed_drift = speed_drift.max((s - s0).abs() / s0);
        }

        let bump = DVector::from_fn(n, |_, _| (0.2 * r.random_range(-1.0..1.0f64)).exp());
        let p1 = SimplexPoint::normalized(p0.component_mul(&bump))?;
        let sol = geodesic_bvp(&chain, &model, &p0, &p1, &BvpOptions::default())?;
        let end = sol.path.points.last().expect("non-empty path");
        endpoint = endpoint.max((&**end - &*p1).amax());
    }
    Ok((
        speed_drift < 1e-8 && endpoint < 1e-7,
        format!("relative speed drift {speed_drift:.3e} (1e-8), BVP endpoint residual {endpoint:.3e} (1e-7); 20 cases each"),
    ))
}

fn criterion_6(seed: u64) -> Check {
    let mut r = rng(seed);
    let opts = ChartOptions::default();
    let (mut t_o, mut t_e, mut e_o, mut sym): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut other_conventions = 0;
    for case in 0..100 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let p = random_point(&mut r, n);
        let report = analyze(&chain, &model, &p, &opts)?;
        if report.m_convention != MConvention::Symmetrized {
            other_conventions += 1;
        }
        let geo = LocalGeometry::new(&chain, &model, p.clone())?;
        let frame_phis = geo.onsager.frame_potentials();
        let explicit = explicit_tensor(&geo, &frame_phis);
        let oracle = chart_curvature(&chain, &model, &p, &opts)?.on_vectors(&geo.onsager.frame());
        t_o = t_o.max(report.oracle_residual);
        t_e = t_e.max(report.explicit_residual);
        e_o = e_o.max(explicit.relative_deviation(&oracle));
        sym = sym.max(report.symmetry_defect / report.riemann.max_abs().max(f64::MIN_POSITIVE));
    }
    Ok((
        t_o < 1e-5 && t_e < 1e-5 && e_o < 1e-5 && sym <= 1e-9,
        format!(
            "tensor vs oracle {t_o:.3e}, tensor vs explicit {t_e:.3e}, explicit vs oracle {e_o:.3e} (1e-5), \
             symmetry and Bianchi {sym:.3e} (1e-9); 100 cases, n in 3..=5, \
             {other_conventions} cases preferring another m convention"
        ),
    ))
}

fn criterion_7(_seed: u64) -> Check {
    let chain = ReversibleChain::lattice3();
    let model = MobilityModel::geometric(1.0)?.with_uniform_scale(9.0)?;
    let uniform = SimplexPoint::from_slice(&[1.0 / 3.0; 3])?;
    let report = analyze(&chain, &model, &uniform, &ChartOptions::default())?;
    let lat = report.lattice3.expect("lattice section");
    let g = lat.general;
    let values_ok = [(g.k12, -13.5), (g.r11, -13.5), (g.r22, -13.5), (g.scalar, -27.0), (lat.closed_form.k12, -13.5)]
        .iter()
        .all(|(a, b)| (a - b).abs() < 1e-6);
    let (mut identity, mut closed): (f64, f64) = (0.0, 0.0);
    for i in 0..20 {
        for j in 0..20 {
            let p = SimplexPoint::from_slice(&grid_point(i, j, 20))?;
            let gen = lattice3_general(&chain, &model, &p, report.m_convention)?;
            let cf = lattice3_closed_forms(&chain, &model, &p)?;
            identity = identity
                .max((gen.r11 - gen.k12 * gen.theta2).abs() / gen.r11.abs())
                .max((gen.r22 - gen.k12 * gen.theta1).abs() / gen.r22.abs())
                .max((gen.scalar - 2.0 * gen.k12 * gen.theta1 * gen.theta2).abs() / gen.scalar.abs());
            closed = closed.max((gen.k12 - cf.k12).abs() / gen.k12.abs());
        }
    }
    Ok((
        values_ok && identity <= 1e-9 && closed < 1e-5,
        format!(
            "uniform point (K, R11, R22, S) = ({:.9}, {:.9}, {:.9}, {:.9}) (tol 1e-6); \
             Ricci/scalar identities {identity:.3e} (1e-9), closed form vs tensor {closed:.3e} (1e-5) on 20x20",
            g.k12, g.r11, g.r22, g.scalar
        ),
    ))
}

fn criterion_8(_seed: u64) -> Check {
    let chain = ReversibleChain::lattice3();
    let opts = ChartOptions::default();
    let mut parts = Vec::new();
    let mut passed = true;
    let models = [
        ("beta=0.5", MobilityModel::geometric(0.5)?),
        ("beta=1", MobilityModel::geometric(1.0)?),
        ("beta=2", MobilityModel::geometric(2.0)?),
        ("kl", MobilityModel::kl()),
    ];
    for (name, model) in &models {
        let rows = sweep(&chain, model, 50, &opts)?;
        let failed = rows.iter().filter(|r| r.curvature.is_none()).count();
        let nonneg = rows.iter().filter(|r| r.curvature.is_some_and(|c| !(c.k12 < 0.0))).count();
        let max_k = rows
            .iter()
            .filter_map(|r| r.curvature.map(|c| c.k12))
            .fold(f64::NEG_INFINITY, f64::max);
        passed &= failed == 0 && nonneg == 0;
        parts.push(format!("{name}: max K {max_k:.3e}, {nonneg} non-negative, {failed} failed"));
    }
    Ok((passed, format!("{} (50x50 grids)", parts.join("; "))))
}

fn criterion_9(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let h = 1e-3;
    for case in 0..50 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = random_divergence_model(&mut r, case);
        let p = random_point(&mut r, n);
        let geo = LocalGeometry::new(&chain, &model, p.clone())?;
        let phi = moderate_potential(&geo, &random_potential(&mut r, n), 0.3);
        let energy = DivergenceEnergy {
            chain: &chain,
            model: &model,
        };
        let hess = geo.hessian(&energy, &phi, &phi)?;
        let fwd = geodesic_ivp(&chain, &model, &p, &phi, h, h / 16.0)?;
        let bwd = geodesic_ivp(&chain, &model, &p, &(-&phi), h, h / 16.0)?;
        let d = |q: &SimplexPoint| model.divergence(&chain, q);
        let second = (d(fwd.points.last().expect("path"))? - 2.0 * d(&p)? + d(bwd.points.last().expect("path"))?) / (h * h);
        worst = worst.max(rel_gap(hess, second));
    }
    Ok((worst < 1e-4, format!("Hessian vs second difference along geodesics {worst:.3e} (1e-4), 50 cases")))
}

/// Runs one criterion; numerical errors count as failures.
pub fn run_criterion(id: u8, seed: u64) -> Option<CriterionResult> {
    let &(id, name, limit) = CRITERIA.iter().find(|c| c.0 == id)?;
    let check: fn(u64) -> Check = match id {
        1 => criterion_1,
        2 => criterion_2,
        3 => criterion_3,
        4 => criterion_4,
        5 => criterion_5,
        6 => criterion_6,
        7 => criterion_7,
        8 => criterion_8,
        _ => criterion_9,
    };
    let start = Instant::now();
    let outcome = check(seed);
    let elapsed = start.elapsed();
    let time_limit = Duration::from_secs(limit);
    let (ok, mut detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error {}: {e}", e.name())),
    };
    if elapsed > time_limit {
        detail.push_str("; runtime bound exceeded");
    }
    Some(CriterionResult {
        id,
        name,
        passed: ok && elapsed <= time_limit,
        detail,
        elapsed,
        time_limit,
    })
}

/// Runs criteria 1 to 9 in order.
pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    CRITERIA.iter().filter_map(|c| run_criterion(c.0, seed)).collect()
}

//! Levi-Civita connection, geodesics, parallel transport and Hessians.
//!
//! All operators act on tangent potentials. Pointwise quantities are methods
//! on [`LocalGeometry`]; curve solvers are free functions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{Energy, STATE_SUM_TOL};
use crate::error::{Error, Result};
use crate::graph::ReversibleChain;
use crate::metric::{center, integrate_samples, weighted_apply, LocalGeometry, OnsagerMatrix};
use crate::mobility::{MobilityModel, SimplexPoint, ThetaJet};

/// A covariant derivative `nabla_{V1} V2`, optionally paired with a third field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionValue {
    pub vector: DVector<f64>,
    pub scalar: Option<f64>,
}

fn gamma_with(chain: &ReversibleChain, jet: &ThetaJet, phi1: &DVector<f64>, phi2: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(chain.n());
    for (edge, j) in chain.edges().iter().zip(&jet.edges) {
        let prod = edge.weight * ((phi1[edge.j] - phi1[edge.i]) * (phi2[edge.j] - phi2[edge.i]));
        out[edge.i] += prod * j.d_i;
        out[edge.j] += prod * j.d_j;
    }
    out
}

fn directional_with(chain: &ReversibleChain, jet: &ThetaJet, v: &DVector<f64>) -> Vec<f64> {
    chain
        .edges()
        .iter()
        .zip(&jet.edges)
        .map(|(edge, j)| j.d_i * v[edge.i] + j.d_j * v[edge.j])
        .collect()
}

impl LocalGeometry<'_> {
    /// `Gamma(Phi1, Phi2)_i = sum_j (grad Phi1)_ij (grad Phi2)_ij d theta_ij / d p_i`.
    pub fn gamma(&self, phi1: &DVector<f64>, phi2: &DVector<f64>) -> DVector<f64> {
        gamma_with(self.chain, &self.jet, phi1, phi2)
    }

    /// Derivative of the edge mobilities along `V_Phi`, one value per edge.
    pub fn directional_theta(&self, phi: &DVector<f64>) -> Vec<f64> {
        directional_with(self.chain, &self.jet, &self.tangent(phi))
    }

    /// `[V1, V2] = L(V1 theta) Phi2 - L(V2 theta) Phi1`.
    pub fn commutator(&self, phi1: &DVector<f64>, phi2: &DVector<f64>) -> DVector<f64> {
        self.apply(&self.directional_theta(phi1), phi2) - self.apply(&self.directional_theta(phi2), phi1)
    }

    /// `nabla_{V1} V2 = 1/2 (L(V1 theta) Phi2 - L(V2 theta) Phi1 + L Gamma(Phi1, Phi2))`,
    /// with `<nabla_{V1} V2, V3> = Phi3^T nabla_{V1} V2` when `phi3` is given.
    pub fn levi_civita(
        &self,
        phi1: &DVector<f64>,
        phi2: &DVector<f64>,
        phi3: Option<&DVector<f64>>,
    ) -> ConnectionValue {
        let vector = (self.commutator(phi1, phi2) + self.tangent(&self.gamma(phi1, phi2))) * 0.5;
        let scalar = phi3.map(|phi3| phi3.dot(&vector));
        ConnectionValue { vector, scalar }
    }

    /// `<nabla_{V1} V2, V3>` written purely through Gamma:
    /// `1/2 (Phi1^T L Gamma(Phi2, Phi3) - Phi2^T L Gamma(Phi1, Phi3) + Phi3^T L Gamma(Phi1, Phi2))`.
    pub fn levi_civita_gamma_form(&self, phi1: &DVector<f64>, phi2: &DVector<f64>, phi3: &DVector<f64>) -> f64 {
        0.5 * (self.inner(phi1, &self.gamma(phi2, phi3)) - self.inner(phi2, &self.gamma(phi1, phi3))
            + self.inner(phi3, &self.gamma(phi1, phi2)))
    }

    /// Riemannian Hessian of `energy` evaluated on `(V1, V2)`.
    pub fn hessian(&self, energy: &dyn Energy, phi1: &DVector<f64>, phi2: &DVector<f64>) -> Result<f64> {
        let p: &DVector<f64> = &self.point;
        let v1 = self.tangent(phi1);
        let v2 = self.tangent(phi2);
        let grad = energy.gradient(p)?;
        let euclid = v1.dot(&(energy.hessian(p)? * &v2));
        let correction = self.apply(&self.directional_theta(phi1), phi2)
            + self.apply(&self.directional_theta(phi2), phi1)
            - self.tangent(&self.gamma(phi1, phi2));
        Ok(euclid + 0.5 * grad.dot(&correction))
    }

    /// The Hessian written as sums over ordered edge pairs and Gamma terms.
    pub fn hessian_edge_sum(&self, energy: &dyn Energy, phi1: &DVector<f64>, phi2: &DVector<f64>) -> Result<f64> {
        let p: &DVector<f64> = &self.point;
        let grad = energy.gradient(p)?;
        let h = energy.hessian(p)?;
        let ordered = self.ordered_edges();
        let mut first = 0.0;
        for &(i, j, sw, th) in &ordered {
            let a = sw * (phi1[j] - phi1[i]) * th;
            for &(k, l, sw2, th2) in &ordered {
                let b = sw2 * (phi2[l] - phi2[k]) * th2;
                let mixed = h[(j, l)] - h[(j, k)] - h[(i, l)] + h[(i, k)];
                first += sw * sw2 * mixed * a * b;
            }
        }
        let g12 = self.gamma(phi1, phi2);
        let g2f = self.gamma(phi2, &grad);
        let g1f = self.gamma(phi1, &grad);
        let mut second = 0.0;
        for &(i, j, sw, th) in &ordered {
            let d = |x: &DVector<f64>| sw * (x[j] - x[i]);
            second += (d(phi1) * d(&g2f) + d(phi2) * d(&g1f) - d(&grad) * d(&g12)) * th;
        }
        Ok(0.25 * first + 0.25 * second)
    }

    /// Both orientations of every edge as `(i, j, sqrt(omega_ij), theta_ij)`.
    pub(crate) fn ordered_edges(&self) -> Vec<(usize, usize, f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.chain.edges().len());
        for (edge, j) in self.chain.edges().iter().zip(&self.jet.edges) {
            out.push((edge.i, edge.j, edge.sqrt_weight, j.theta));
            out.push((edge.j, edge.i, edge.sqrt_weight, j.theta));
        }
        out
    }
}

/// Samples of a geodesic `(gamma(t), Phi(t))` with its speed `sqrt(<V_Phi, V_Phi>)`.
#[derive(Debug, Clone, Default)]
pub struct GeodesicPath {
    pub times: Vec<f64>,
    pub points: Vec<SimplexPoint>,
    pub potentials: Vec<DVector<f64>>,
    pub speed: Vec<f64>,
}

fn stage_point(gamma: &DVector<f64>, t: f64) -> Result<SimplexPoint> {
    SimplexPoint::with_tolerance(gamma.clone(), STATE_SUM_TOL).map_err(|_| Error::StepLeavesSimplex(t))
}

/// Time derivatives of `(gamma, Phi, etas)`.
type FlowRates = (DVector<f64>, DVector<f64>, Vec<DVector<f64>>);

/// Right-hand side of the geodesic system together with `m` transported potentials.
fn transport_rhs(
    chain: &ReversibleChain,
    model: &MobilityModel,
    gamma: &DVector<f64>,
    phi: &DVector<f64>,
    etas: &[DVector<f64>],
    t: f64,
) -> Result<FlowRates> {
    let point = stage_point(gamma, t)?;
    let jet = model.theta_jet(chain, &point)?;
    let theta = jet.theta();
    let v = weighted_apply(chain, &theta, phi);
    let dphi = gamma_with(chain, &jet, phi, phi) * -0.5;
    let mut detas = Vec::with_capacity(etas.len());
    if !etas.is_empty() {
        let onsager = OnsagerMatrix::new(chain, &theta)?;
        let dir_phi = directional_with(chain, &jet, &v);
        for eta in etas {
            let v_eta = weighted_apply(chain, &theta, eta);
            let dir_eta = directional_with(chain, &jet, &v_eta);
            let bracket = weighted_apply(chain, &dir_phi, eta) - weighted_apply(chain, &dir_eta, phi);
            let d = onsager.potential(&bracket) * -0.5 - gamma_with(chain, &jet, phi, eta) * 0.5;
            detas.push(d);
        }
    }
    Ok((v, dphi, detas))
}

struct FlowState {
    gamma: DVector<f64>,
    phi: DVector<f64>,
    etas: Vec<DVector<f64>>,
}

impl FlowState {
    fn shifted(&self, k: &(DVector<f64>, DVector<f64>, Vec<DVector<f64>>), h: f64) -> FlowState {
        FlowState {
            gamma: &self.gamma + &k.0 * h,
            phi: &self.phi + &k.1 * h,
            etas: self.etas.iter().zip(&k.2).map(|(e, d)| e + d * h).collect(),
        }
    }
}

fn rk4_flow(chain: &ReversibleChain, model: &MobilityModel, s: &FlowState, t: f64, h: f64) -> Result<FlowState> {
    let rhs = |x: &FlowState, tt: f64| transport_rhs(chain, model, &x.gamma, &x.phi, &x.etas, tt);
    let k1 = rhs(s, t)?;
    let k2 = rhs(&s.shifted(&k1, 0.5 * h), t + 0.5 * h)?;
    let k3 = rhs(&s.shifted(&k2, 0.5 * h), t + 0.5 * h)?;
    let k4 = rhs(&s.shifted(&k3, h), t + h)?;
    let combine = |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>, d: &DVector<f64>| (a + b * 2.0 + c * 2.0 + d) * (h / 6.0);
    Ok(FlowState {
        gamma: &s.gamma + combine(&k1.0, &k2.0, &k3.0, &k4.0),
        phi: center(&(&s.phi + combine(&k1.1, &k2.1, &k3.1, &k4.1))),
        etas: (0..s.etas.len())
            .map(|m| center(&(&s.etas[m] + combine(&k1.2[m], &k2.2[m], &k3.2[m], &k4.2[m]))))
            .collect(),
    })
}

fn time_grid(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time stepping needs dt > 0 and T >= 0, got dt = {dt}, T = {t_end}"
        )));
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    Ok((0..=steps)
        .map(|k| if k == steps { t_end } else { k as f64 * dt })
        .collect())
}

fn speed_at(chain: &ReversibleChain, model: &MobilityModel, p: &SimplexPoint, phi: &DVector<f64>) -> Result<f64> {
    let theta = model.theta(chain, p)?;
    Ok(crate::metric::weighted_form(chain, &theta, phi, phi).max(0.0).sqrt())
}

/// Solves the geodesic equations `gamma' = L(theta) Phi`, `Phi' = -1/2 Gamma(Phi, Phi)`
/// with RK4, keeping `Phi` in the mean-zero gauge.
pub fn geodesic_ivp(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p0: &SimplexPoint,
    phi0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<GeodesicPath> {
    let times = time_grid(t_end, dt)?;
    let mut state = FlowState {
        gamma: (**p0).clone(),
        phi: center(phi0),
        etas: Vec::new(),
    };
    let mut path = GeodesicPath::default();
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            state = rk4_flow(chain, model, &state, times[k - 1], t - times[k - 1])?;
        }
        let point = stage_point(&state.gamma, t)?;
        path.speed.push(speed_at(chain, model, &point, &state.phi)?);
        path.points.push(point);
        path.potentials.push(state.phi.clone());
        path.times.push(t);
    }
    Ok(path)
}

/// Endpoint of the geodesic, without recording samples.
fn shoot(chain: &ReversibleChain, model: &MobilityModel, p0: &SimplexPoint, phi0: &DVector<f64>, steps: usize) -> Result<DVector<f64>> {
    let h = 1.0 / steps as f64;
    let mut state = FlowState {
        gamma: (**p0).clone(),
        phi: center(phi0),
        etas: Vec::new(),
    };
    for k in 0..steps {
        state = rk4_flow(chain, model, &state, k as f64 * h, h)?;
    }
    stage_point(&state.gamma, 1.0)?;
    Ok(state.gamma)
}

#[derive(Debug, Clone)]
pub struct BvpOptions {
    /// RK4 steps on `[0, 1]`.
    pub steps: usize,
    /// Target for the endpoint residual (max norm).
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self {
            steps: 200,
            tol: 1e-11,
            max_iter: 50,
            restarts: 8,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub phi0: DVector<f64>,
    pub path: GeodesicPath,
    pub length: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn lift(z: &DVector<f64>) -> DVector<f64> {
    let mut phi = DVector::zeros(z.len() + 1);
    phi.rows_mut(0, z.len()).copy_from(z);
    center(&phi)
}

/// Shooting for the geodesic joining `p0` to `p1` on `[0, 1]`.
///
/// The unknown initial potential is parametrised by its first `n - 1`
/// entries relative to the last one. Newton steps use a central difference
/// Jacobian and are halved while the residual does not decrease.
pub fn geodesic_bvp(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p0: &SimplexPoint,
    p1: &SimplexPoint,
    opts: &BvpOptions,
) -> Result<BvpSolution> {
    let n = chain.n();
    let m = n - 1;
    let residual = |z: &DVector<f64>| -> Option<DVector<f64>> {
        shoot(chain, model, p0, &lift(z), opts.steps)
            .ok()
            .map(|end| (end - &**p1).rows(0, m).into_owned())
    };
    let geo = LocalGeometry::new(chain, model, p0.clone())?;
    let guess_phi = geo.potential(&(&**p1 - &**p0));
    let guess = DVector::from_iterator(m, (0..m).map(|k| guess_phi[k] - guess_phi[m]));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = (f64::INFINITY, guess.clone());
    let mut iterations = 0;
    for attempt in 0..=opts.restarts {
        let mut z = if attempt == 0 {
            guess.clone()
        } else {
            let scale = guess.amax().max(1e-3);
            guess.map(|g| g * rng.random_range(0.5..1.5) + scale * rng.random_range(-0.25..0.25))
        };
        let Some(mut r) = residual(&z) else { continue };
        for _ in 0..opts.max_iter {
            let norm = r.amax();
            if norm < best.0 {
                best = (norm, z.clone());
            }
            if norm < opts.tol {
                break;
            }
            iterations += 1;
            let mut jac = DMatrix::zeros(m, m);
            let mut ok = true;
            for k in 0..m {
                let step = 1e-6 * z[k].abs().max(1e-2);
                let mut up = z.clone();
                let mut down = z.clone();
                up[k] += step;
                down[k] -= step;
                match (residual(&up), residual(&down)) {
                    (Some(a), Some(b)) => jac.set_column(k, &((a - b) / (2.0 * step))),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            let Some(delta) = ok.then(|| jac.lu().solve(&r)).flatten() else { break };
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial = &z - &delta * lambda;
                if let Some(rt) = residual(&trial) {
                    if rt.amax() < norm {
                        z = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if r.amax() < best.0 {
            best = (r.amax(), z.clone());
        }
        if best.0 < opts.tol {
            break;
        }
    }
    let (res, z) = best;
    if !(res < opts.tol) {
        return Err(Error::BvpNoConvergence(res));
    }
    let phi0 = lift(&z);
    let path = geodesic_ivp(chain, model, p0, &phi0, 1.0, 1.0 / opts.steps as f64)?;
    let last = path.points.last().expect("path has samples");
    let residual = (&**last - &**p1).amax();
    let length = integrate_samples(&path.times, &path.speed);
    Ok(BvpSolution {
        phi0,
        path,
        length,
        residual,
        iterations,
    })
}

/// The curve along which potentials are transported.
#[derive(Debug, Clone)]
pub enum CurveSpec {
    /// The geodesic with initial point and potential, followed for `t_end`.
    Geodesic {
        p0: SimplexPoint,
        phi0: DVector<f64>,
        t_end: f64,
    },
    /// A sampled curve; its potentials are recovered as `R gamma'`.
    Sampled {
        times: Vec<f64>,
        points: Vec<SimplexPoint>,
    },
}

/// One sample of a parallel transport solve.
#[derive(Debug, Clone)]
pub struct TransportState {
    pub t: f64,
    pub gamma: SimplexPoint,
    pub phi: DVector<f64>,
    pub etas: Vec<DVector<f64>>,
}

/// Transports the potentials `etas0` along a curve with RK4.
///
/// For a sampled curve the driving `(gamma, Phi)` at half steps is the
/// average of the neighbouring samples, so that mode is second order.
pub fn parallel_transport(
    chain: &ReversibleChain,
    model: &MobilityModel,
    curve: &CurveSpec,
    etas0: &[DVector<f64>],
    dt: f64,
) -> Result<Vec<TransportState>> {
    let etas: Vec<DVector<f64>> = etas0.iter().map(center).collect();
    match curve {
        CurveSpec::Geodesic { p0, phi0, t_end } => {
            let times = time_grid(*t_end, dt)?;
            let mut state = FlowState {
                gamma: (**p0).clone(),
                phi: center(phi0),
                etas,
            };
            let mut out = Vec::with_capacity(times.len());
            for (k, &t) in times.iter().enumerate() {
                if k > 0 {
                    state = rk4_flow(chain, model, &state, times[k - 1], t - times[k - 1])?;
                }
                out.push(TransportState {
                    t,
                    gamma: stage_point(&state.gamma, t)?,
                    phi: state.phi.clone(),
                    etas: state.etas.clone(),
                });
            }
            Ok(out)
        }
        CurveSpec::Sampled { times, points } => transport_sampled(chain, model, times, points, etas),
    }
}

fn transport_sampled(
    chain: &ReversibleChain,
    model: &MobilityModel,
    times: &[f64],
    points: &[SimplexPoint],
    mut etas: Vec<DVector<f64>>,
) -> Result<Vec<TransportState>> {
    let k = times.len();
    if points.len() != k || k < 3 {
        return Err(Error::InvalidParameter(
            "a sampled curve needs at least three samples with matching times".into(),
        ));
    }
    let velocity = |idx: usize| -> DVector<f64> {
        let (lo, hi) = match idx {
            0 => (0, 1),
            i if i == k - 1 => (k - 2, k - 1),
            i => (i - 1, i + 1),
        };
        (&*points[hi] - &*points[lo]) / (times[hi] - times[lo])
    };
    let mut phis = Vec::with_capacity(k);
    for idx in 0..k {
        let geo = LocalGeometry::new(chain, model, points[idx].clone())?;
        phis.push(geo.potential(&velocity(idx)));
    }
    let drive = |idx: usize, frac: f64| -> (DVector<f64>, DVector<f64>) {
        if frac == 0.0 {
            ((*points[idx]).clone(), phis[idx].clone())
        } else {
            (
                &*points[idx] * (1.0 - frac) + &*points[idx + 1] * frac,
                &phis[idx] * (1.0 - frac) + &phis[idx + 1] * frac,
            )
        }
    };
    let eta_rhs = |gamma: &DVector<f64>, phi: &DVector<f64>, etas: &[DVector<f64>], t: f64| {
        transport_rhs(chain, model, gamma, phi, etas, t).map(|r| r.2)
    };
    let mut out = Vec::with_capacity(k);
    for idx in 0..k {
        if idx > 0 {
            let h = times[idx] - times[idx - 1];
            let t0 = times[idx - 1];
            let (g0, p0) = drive(idx - 1, 0.0);
            let (gm, pm) = drive(idx - 1, 0.5);
            let (g1, p1) = ((*points[idx]).clone(), phis[idx].clone());
            let k1 = eta_rhs(&g0, &p0, &etas, t0)?;
            let s2: Vec<_> = etas.iter().zip(&k1).map(|(e, d)| e + d * (0.5 * h)).collect();
            let k2 = eta_rhs(&gm, &pm, &s2, t0 + 0.5 * h)?;
            let s3: Vec<_> = etas.iter().zip(&k2).map(|(e, d)| e + d * (0.5 * h)).collect();
            let k3 = eta_rhs(&gm, &pm, &s3, t0 + 0.5 * h)?;
            let s4: Vec<_> = etas.iter().zip(&k3).map(|(e, d)| e + d * h).collect();
            let k4 = eta_rhs(&g1, &p1, &s4, t0 + h)?;
            etas = (0..etas.len())
                .map(|m| center(&(&etas[m] + (&k1[m] + &k2[m] * 2.0 + &k3[m] * 2.0 + &k4[m]) * (h / 6.0))))
                .collect();
        }
        out.push(TransportState {
            t: times[idx],
            gamma: points[idx].clone(),
            phi: phis[idx].clone(),
            etas: etas.clone(),
        });
    }
    Ok(out)
}

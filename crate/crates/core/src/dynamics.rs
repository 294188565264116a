//! Master equation dynamics, its gradient flow form and energy monitoring.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::ReversibleChain;
use crate::metric::{weighted_apply, weighted_form};
use crate::mobility::{MobilityModel, SimplexPoint, BOUNDARY_EPS};

/// Maximum number of step halvings before a step is declared to leave the simplex.
pub const MAX_HALVINGS: u32 = 20;
/// Mass tolerance for states produced by integrators.
pub const STATE_SUM_TOL: f64 = 1e-10;

/// A smooth function on the positive orthant with Euclidean derivatives.
pub trait Energy {
    fn value(&self, p: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>>;

    /// Euclidean Hessian. Defaults to central differences of the gradient.
    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = p.len();
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            let step = 1e-5 * p[k].abs().max(1e-3);
            let mut up = p.clone();
            let mut down = p.clone();
            up[k] += step;
            down[k] -= step;
            let col = (self.gradient(&up)? - self.gradient(&down)?) / (2.0 * step);
            h.set_column(k, &col);
        }
        Ok((&h + h.transpose()) * 0.5)
    }
}

/// The f-divergence paired with a mobility model.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceEnergy<'a> {
    pub chain: &'a ReversibleChain,
    pub model: &'a MobilityModel,
}

impl Energy for DivergenceEnergy<'_> {
    fn value(&self, p: &DVector<f64>) -> Result<f64> {
        self.model.divergence(self.chain, p)
    }

    fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.model.divergence_gradient(self.chain, p)
    }

    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&self.model.divergence_hessian_diag(self.chain, p)?))
    }
}

/// A linear energy `c^T p`.
#[derive(Debug, Clone)]
pub struct LinearEnergy(pub DVector<f64>);

impl Energy for LinearEnergy {
    fn value(&self, p: &DVector<f64>) -> Result<f64> {
        Ok(self.0.dot(p))
    }

    fn gradient(&self, _p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.0.clone())
    }

    fn hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(p.len(), p.len()))
    }
}

/// `dp_i/dt = sum_j (Q_ji p_j - Q_ij p_i)`.
pub fn master_rhs(chain: &ReversibleChain, p: &DVector<f64>) -> DVector<f64> {
    let q = chain.rates();
    let n = chain.n();
    DVector::from_iterator(
        n,
        (0..n).map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| q[(j, i)] * p[j] - q[(i, j)] * p[i])
                .sum::<f64>()
        }),
    )
}

/// `-L(theta(p)) grad D_f(p)`.
pub fn gradient_flow_rhs(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p: &SimplexPoint,
) -> Result<DVector<f64>> {
    let theta = model.theta(chain, p)?;
    let g = model.divergence_gradient(chain, p)?;
    Ok(-weighted_apply(chain, &theta, &g))
}

/// Riemannian gradient `L(theta(p)) grad F(p)`.
pub fn metric_gradient(
    chain: &ReversibleChain,
    model: &MobilityModel,
    energy: &dyn Energy,
    p: &SimplexPoint,
) -> Result<DVector<f64>> {
    let theta = model.theta(chain, p)?;
    Ok(weighted_apply(chain, &theta, &energy.gradient(p)?))
}

/// Energy dissipation as the quadratic form `-g^T L g`, `g = grad D_f`.
pub fn dissipation_quadratic(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p: &SimplexPoint,
) -> Result<f64> {
    let theta = model.theta(chain, p)?;
    let g = model.divergence_gradient(chain, p)?;
    Ok(-g.dot(&weighted_apply(chain, &theta, &g)))
}

/// Energy dissipation as the edge sum `-1/2 sum (grad_omega g)^2 theta` over ordered pairs.
pub fn dissipation_edge_sum(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p: &SimplexPoint,
) -> Result<f64> {
    let theta = model.theta(chain, p)?;
    let g = model.divergence_gradient(chain, p)?;
    Ok(-weighted_form(chain, &theta, &g, &g))
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SimplexPoint>,
    pub energy: Vec<f64>,
    pub dissipation_quadratic: Vec<f64>,
    pub dissipation_edge_sum: Vec<f64>,
}

fn rk4_master(chain: &ReversibleChain, p: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = master_rhs(chain, p);
    let k2 = master_rhs(chain, &(p + &k1 * (0.5 * h)));
    let k3 = master_rhs(chain, &(p + &k2 * (0.5 * h)));
    let k4 = master_rhs(chain, &(p + &k3 * h));
    p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates the master equation with classical RK4 and records the
/// divergence and both dissipation expressions at every grid time.
pub fn integrate(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p0: &SimplexPoint,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "integration needs dt > 0 and T >= 0, got dt = {dt}, T = {t_end}"
        )));
    }
    let mut traj = Trajectory::default();
    let mut record = |t: f64, p: SimplexPoint| -> Result<()> {
        traj.energy.push(model.divergence(chain, &p)?);
        traj.dissipation_quadratic.push(dissipation_quadratic(chain, model, &p)?);
        traj.dissipation_edge_sum.push(dissipation_edge_sum(chain, model, &p)?);
        traj.times.push(t);
        traj.states.push(p);
        Ok(())
    };
    let steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    let mut p = p0.clone();
    record(0.0, p.clone())?;
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let t1 = if k + 1 == steps { t_end } else { (k + 1) as f64 * dt };
        p = advance(chain, &p, t0, t1 - t0)?;
        record(t1, p.clone())?;
    }
    Ok(traj)
}

fn advance(chain: &ReversibleChain, p: &SimplexPoint, t0: f64, h: f64) -> Result<SimplexPoint> {
    'halving: for halvings in 0..=MAX_HALVINGS {
        let substeps = 1usize << halvings;
        let sub = h / substeps as f64;
        let mut q = (**p).clone();
        for _ in 0..substeps {
            q = rk4_master(chain, &q, sub);
            if q.iter().any(|&x| !(x >= BOUNDARY_EPS)) {
                continue 'halving;
            }
        }
        return SimplexPoint::with_tolerance(q, STATE_SUM_TOL);
    }
    Err(Error::StepLeavesSimplex(t0))
}

/// Generator `K` of the master equation written as `dp/dt = K p`.
pub fn generator(chain: &ReversibleChain) -> DMatrix<f64> {
    let q = chain.rates();
    let n = chain.n();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                k[(i, j)] = q[(j, i)];
                k[(i, i)] -= q[(i, j)];
            }
        }
    }
    k
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let b = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Exact solution `exp(t K) p0` of the master equation.
pub fn exact_master_solution(chain: &ReversibleChain, p0: &DVector<f64>, t: f64) -> DVector<f64> {
    expm(&(generator(chain) * t)) * p0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn triangle_master_equation_components() {
        let chain = ReversibleChain::triangle_reaction();
        let p = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        let r = master_rhs(&chain, &p);
        let expect = [
            2.0 * p[1] + 4.0 * p[2] - 2.0 * p[0],
            p[0] + 2.0 * p[2] - 3.0 * p[1],
            p[0] + p[1] - 6.0 * p[2],
        ];
        for k in 0..3 {
            assert_relative_eq!(r[k], expect[k], epsilon = 1e-15);
        }
        assert!(r.sum().abs() < 1e-15);
        assert!(master_rhs(&chain, chain.pi()).amax() < 1e-15);
    }

    #[test]
    fn expm_matches_diagonal_case() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 0.5, 2.0]));
        let e = expm(&a);
        for k in 0..3 {
            assert_relative_eq!(e[(k, k)], a[(k, k)].exp(), max_relative = 1e-14);
        }
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -7.0, 7.0, 0.0]);
        let r = expm(&rot);
        assert_relative_eq!(r[(0, 0)], 7f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(r[(1, 0)], 7f64.sin(), epsilon = 1e-12);
    }

    #[test]
    fn stationary_start_stays_put() {
        let chain = ReversibleChain::triangle_reaction();
        let p0 = SimplexPoint::new(chain.pi().clone()).unwrap();
        let traj = integrate(&chain, &MobilityModel::kl(), &p0, 1.0, 0.1).unwrap();
        assert_eq!(traj.times.len(), 11);
        for (s, d) in traj.states.iter().zip(&traj.dissipation_quadratic) {
            assert!((&**s - chain.pi()).amax() < 1e-15);
            assert!(d.abs() < 1e-15);
        }
    }

    #[test]
    fn linear_energy_with_equal_coefficients_has_no_gradient() {
        let chain = ReversibleChain::triangle_reaction();
        let p = SimplexPoint::from_slice(&[0.2, 0.5, 0.3]).unwrap();
        let e = LinearEnergy(DVector::from_element(3, 2.5));
        let g = metric_gradient(&chain, &MobilityModel::kl(), &e, &p).unwrap();
        assert!(g.amax() < 1e-15);
    }

    #[test]
    fn bad_step_is_rejected() {
        let chain = ReversibleChain::triangle_reaction();
        let p0 = SimplexPoint::new(chain.pi().clone()).unwrap();
        assert!(integrate(&chain, &MobilityModel::kl(), &p0, 1.0, 0.0).is_err());
    }
}

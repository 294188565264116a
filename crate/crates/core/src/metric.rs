//! The Onsager response matrix `L(theta)`, its pseudo-inverse, the induced
//! inner product on tangent potentials, frames, arc length and distance.
//!
//! A tangent vector `V` is represented by a potential `Phi` with `V = L Phi`.
//! Potentials are kept in the mean-zero gauge.

use nalgebra::{DMatrix, DVector};

use crate::connection::{geodesic_bvp, BvpOptions};
use crate::error::{Error, Result};
use crate::graph::ReversibleChain;
use crate::mobility::{MobilityModel, SimplexPoint, ThetaJet};

/// Eigenvalues below this fraction of the largest one count as kernel.
pub const KERNEL_CUTOFF: f64 = 1e-12;

/// Projects a potential onto the mean-zero gauge.
pub fn center(phi: &DVector<f64>) -> DVector<f64> {
    let mean = phi.mean();
    phi.map(|x| x - mean)
}

/// `(L(a) x)_i = sum_j omega_ij a_ij (x_i - x_j)` for per-edge weights `a`.
pub fn weighted_apply(chain: &ReversibleChain, a: &[f64], x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(chain.n());
    for (e, edge) in chain.edges().iter().enumerate() {
        let flux = edge.weight * a[e] * (x[edge.i] - x[edge.j]);
        out[edge.i] += flux;
        out[edge.j] -= flux;
    }
    out
}

/// `x^T L(a) y = sum over edges omega a (x_i - x_j)(y_i - y_j)`.
pub fn weighted_form(chain: &ReversibleChain, a: &[f64], x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    chain
        .edges()
        .iter()
        .zip(a)
        .map(|(edge, a)| edge.weight * a * (x[edge.i] - x[edge.j]) * (y[edge.i] - y[edge.j]))
        .sum()
}

/// Dense `L(a)`.
pub fn weighted_matrix(chain: &ReversibleChain, a: &[f64]) -> DMatrix<f64> {
    let n = chain.n();
    let mut l = DMatrix::zeros(n, n);
    for (edge, a) in chain.edges().iter().zip(a) {
        let w = edge.weight * a;
        l[(edge.i, edge.j)] -= w;
        l[(edge.j, edge.i)] -= w;
        l[(edge.i, edge.i)] += w;
        l[(edge.j, edge.j)] += w;
    }
    l
}

/// `L(theta)` with its eigensystem restricted to the complement of the
/// constant vector.
#[derive(Debug, Clone)]
pub struct OnsagerMatrix {
    l: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl OnsagerMatrix {
    pub fn new(chain: &ReversibleChain, theta: &[f64]) -> Result<Self> {
        let l = weighted_matrix(chain, theta);
        let n = l.nrows();
        let eig = l.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let lmax = eig.eigenvalues[order[n - 1]].max(0.0);
        let kernel = order
            .iter()
            .filter(|&&k| eig.eigenvalues[k] < KERNEL_CUTOFF * lmax)
            .count();
        if kernel != 1 {
            return Err(Error::NearSingular(kernel));
        }
        let eigenvalues = DVector::from_iterator(n - 1, order[1..].iter().map(|&k| eig.eigenvalues[k]));
        let mut eigenvectors = DMatrix::zeros(n, n - 1);
        for (col, &k) in order[1..].iter().enumerate() {
            eigenvectors.set_column(col, &eig.eigenvectors.column(k));
        }
        Ok(Self {
            l,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Positive eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Eigenvectors matching [`Self::eigenvalues`], one per column.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let inv = DMatrix::from_diagonal(&self.eigenvalues.map(|l| 1.0 / l));
        u * inv * u.transpose()
    }

    /// `R v`: the mean-zero potential of a tangent vector.
    pub fn potential(&self, v: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.eigenvectors.tr_mul(v).component_div(&self.eigenvalues);
        &self.eigenvectors * coeffs
    }

    /// Orthonormal tangent frame `e_k = sqrt(lambda_k) u_k`.
    pub fn frame(&self) -> Vec<DVector<f64>> {
        (0..self.eigenvalues.len())
            .map(|k| self.eigenvectors.column(k) * self.eigenvalues[k].sqrt())
            .collect()
    }

    /// Potentials `u_k / sqrt(lambda_k)` of the orthonormal frame.
    pub fn frame_potentials(&self) -> Vec<DVector<f64>> {
        (0..self.eigenvalues.len())
            .map(|k| self.eigenvectors.column(k) / self.eigenvalues[k].sqrt())
            .collect()
    }
}

/// Everything needed to evaluate geometric quantities at one point.
#[derive(Debug, Clone)]
pub struct LocalGeometry<'a> {
    pub chain: &'a ReversibleChain,
    pub model: &'a MobilityModel,
    pub point: SimplexPoint,
    pub jet: ThetaJet,
    pub onsager: OnsagerMatrix,
}

impl<'a> LocalGeometry<'a> {
    pub fn new(chain: &'a ReversibleChain, model: &'a MobilityModel, point: SimplexPoint) -> Result<Self> {
        let jet = model.theta_jet(chain, &point)?;
        let onsager = OnsagerMatrix::new(chain, &jet.theta())?;
        Ok(Self {
            chain,
            model,
            point,
            jet,
            onsager,
        })
    }

    pub fn n(&self) -> usize {
        self.chain.n()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.jet.theta()
    }

    /// `V_Phi = L(theta) Phi`.
    pub fn tangent(&self, phi: &DVector<f64>) -> DVector<f64> {
        self.onsager.matrix() * phi
    }

    /// Mean-zero potential `R V`.
    pub fn potential(&self, v: &DVector<f64>) -> DVector<f64> {
        self.onsager.potential(v)
    }

    /// `<V_1, V_2> = Phi_1^T L Phi_2`.
    pub fn inner(&self, phi1: &DVector<f64>, phi2: &DVector<f64>) -> f64 {
        phi1.dot(&(self.onsager.matrix() * phi2))
    }

    /// The same inner product as an edge sum of weighted gradients.
    pub fn inner_edge_sum(&self, phi1: &DVector<f64>, phi2: &DVector<f64>) -> f64 {
        weighted_form(self.chain, &self.theta(), phi1, phi2)
    }

    /// `L(a) x` at this point's chain.
    pub fn apply(&self, a: &[f64], x: &DVector<f64>) -> DVector<f64> {
        weighted_apply(self.chain, a, x)
    }

    /// `x^T L(a) y` at this point's chain.
    pub fn form(&self, a: &[f64], x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        weighted_form(self.chain, a, x, y)
    }
}

/// Length of a sampled curve, `integral of sqrt(gamma'^T R gamma')`.
///
/// Velocities come from second order differences. Simpson's rule is used on
/// uniform grids with an even number of intervals, the trapezoid rule
/// otherwise.
pub fn arc_length(
    chain: &ReversibleChain,
    model: &MobilityModel,
    times: &[f64],
    samples: &[SimplexPoint],
) -> Result<f64> {
    let k = times.len();
    if samples.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: samples.len(),
        });
    }
    if k < 2 {
        return Ok(0.0);
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    let velocity = |idx: usize| -> DVector<f64> {
        let x = |m: usize| &*samples[m];
        if k == 2 {
            return (x(1) - x(0)) / (times[1] - times[0]);
        }
        if idx == 0 {
            one_sided(times[0], times[1], times[2], x(0), x(1), x(2))
        } else if idx == k - 1 {
            one_sided(times[k - 1], times[k - 2], times[k - 3], x(k - 1), x(k - 2), x(k - 3))
        } else {
            let (h0, h1) = (times[idx] - times[idx - 1], times[idx + 1] - times[idx]);
            (x(idx + 1) - x(idx)) * (h0 / (h1 * (h0 + h1))) + (x(idx) - x(idx - 1)) * (h1 / (h0 * (h0 + h1)))
        }
    };
    let mut speed = Vec::with_capacity(k);
    for idx in 0..k {
        let theta = model.theta(chain, &samples[idx])?;
        let v = velocity(idx);
        let s = if v.amax() == 0.0 {
            0.0
        } else {
            let onsager = OnsagerMatrix::new(chain, &theta)?;
            v.dot(&onsager.potential(&v)).max(0.0).sqrt()
        };
        speed.push(s);
    }
    Ok(integrate_samples(times, &speed))
}

/// Second order one-sided derivative at `t0` from samples at `t0, t1, t2`.
fn one_sided(t0: f64, t1: f64, t2: f64, x0: &DVector<f64>, x1: &DVector<f64>, x2: &DVector<f64>) -> DVector<f64> {
    let (a, b) = (t1 - t0, t2 - t0);
    let c1 = b / (a * (b - a));
    let c2 = -a / (b * (b - a));
    (x1 - x0) * c1 + (x2 - x0) * c2
}

/// Simpson on uniform grids with an even number of intervals, trapezoid otherwise.
pub fn integrate_samples(times: &[f64], values: &[f64]) -> f64 {
    let k = times.len();
    if k < 2 {
        return 0.0;
    }
    let h = (times[k - 1] - times[0]) / (k - 1) as f64;
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    if uniform && (k - 1).is_multiple_of(2) {
        let mut acc = values[0] + values[k - 1];
        for (idx, v) in values.iter().enumerate().take(k - 1).skip(1) {
            acc += if idx % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        acc * h / 3.0
    } else {
        times
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }
}

/// Geodesic distance between two interior points.
pub fn distance(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p0: &SimplexPoint,
    p1: &SimplexPoint,
) -> Result<f64> {
    Ok(geodesic_bvp(chain, model, p0, p1, &BvpOptions::default())?.length)
}

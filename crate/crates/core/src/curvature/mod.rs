//! Riemann curvature of the probability manifold.
//!
//! Two independent routes evaluate `<R(V1, V2) V3, V4>`:
//!
//! * [`TensorCache`] combines second directional derivatives of the
//!   mobility, Gamma cross terms and commutators;
//! * [`riemann_explicit`] expands the same quantity into sums over vertex
//!   quadruples with the third order Gamma operator [`gamma3`].
//!
//! A coordinate chart computation in [`chart`] provides a third, purely
//! numerical reference. Closed forms for the three-state path live in
//! [`lattice3`].

pub mod chart;
pub mod lattice3;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ReversibleChain;
use crate::metric::{weighted_apply, weighted_form, LocalGeometry};
use crate::mobility::{MobilityModel, SimplexPoint};

use self::chart::{chart_curvature, ChartOptions};
use self::lattice3::Lattice3Report;

/// How the symmetric second derivative matrix `m(Phi1, Phi2)` is assembled
/// from `W` and `N = nabla_p theta L(V theta) Phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MConvention {
    /// `m = -2W - 2N(1,2) - 2N(2,1)`, the negated symmetrised second
    /// derivative `-(V1 V2 + V2 V1) theta`.
    Symmetrized,
    /// `m = -2W - N(1,2) - N(2,1)`.
    HalfTransport,
    /// `m = 2W - N(1,2) - N(2,1)`.
    PositiveW,
}

impl MConvention {
    pub const ALL: [MConvention; 3] = [Self::Symmetrized, Self::HalfTransport, Self::PositiveW];

    pub fn name(self) -> &'static str {
        match self {
            Self::Symmetrized => "symmetrized",
            Self::HalfTransport => "half-transport",
            Self::PositiveW => "positive-w",
        }
    }

    fn combine(self, w: f64, n12: f64, n21: f64) -> f64 {
        match self {
            Self::Symmetrized => -2.0 * w - 2.0 * (n12 + n21),
            Self::HalfTransport => -2.0 * w - (n12 + n21),
            Self::PositiveW => 2.0 * w - (n12 + n21),
        }
    }
}

/// Second order directional data of the mobility, one value per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDirectional {
    /// `W` with `V1` as the differentiated field and `V2` as the direction.
    pub w: Vec<f64>,
    /// `N(1,2)_ij = 1/2 (d_i theta (L(V1 theta) Phi2)_i + d_j theta (L(V1 theta) Phi2)_j)`.
    pub nabla_theta_l: Vec<f64>,
    pub m: Vec<f64>,
}

fn w_edges(geo: &LocalGeometry, v1: &DVector<f64>, v2: &DVector<f64>) -> Vec<f64> {
    geo.chain
        .edges()
        .iter()
        .zip(&geo.jet.edges)
        .map(|(e, j)| {
            let (a1, b1, a2, b2) = (v1[e.i], v1[e.j], v2[e.i], v2[e.j]);
            (j.d_ii * a2 + j.d_ij * b2) * a1 + (j.d_ij * a2 + j.d_jj * b2) * b1
        })
        .collect()
}

fn n_edges(geo: &LocalGeometry, z: &DVector<f64>) -> Vec<f64> {
    geo.chain
        .edges()
        .iter()
        .zip(&geo.jet.edges)
        .map(|(e, j)| 0.5 * (j.d_i * z[e.i] + j.d_j * z[e.j]))
        .collect()
}

impl LocalGeometry<'_> {
    pub fn second_directional(&self, phi1: &DVector<f64>, phi2: &DVector<f64>, conv: MConvention) -> SecondDirectional {
        let v1 = self.tangent(phi1);
        let v2 = self.tangent(phi2);
        let w = w_edges(self, &v1, &v2);
        let z12 = self.apply(&self.directional_theta(phi1), phi2);
        let z21 = self.apply(&self.directional_theta(phi2), phi1);
        let n12 = n_edges(self, &z12);
        let n21 = n_edges(self, &z21);
        let m = (0..w.len()).map(|e| conv.combine(w[e], n12[e], n21[e])).collect();
        SecondDirectional {
            w,
            nabla_theta_l: n12,
            m,
        }
    }

    /// `V_a (V_b theta)` on every edge: the derivative along `V_a` of the
    /// directional derivative of the mobility along the potential field `Phi_b`.
    pub fn iterated_directional(&self, phi_a: &DVector<f64>, phi_b: &DVector<f64>) -> Vec<f64> {
        let w = w_edges(self, &self.tangent(phi_b), &self.tangent(phi_a));
        let z = self.apply(&self.directional_theta(phi_a), phi_b);
        let n = n_edges(self, &z);
        w.iter().zip(&n).map(|(w, n)| w + 2.0 * n).collect()
    }
}

/// Pairwise data for evaluating the curvature tensor on a fixed list of potentials.
#[derive(Debug, Clone)]
pub struct TensorCache<'c> {
    chain: &'c ReversibleChain,
    l: DMatrix<f64>,
    phis: Vec<DVector<f64>>,
    m: Vec<Vec<Vec<f64>>>,
    gamma: Vec<Vec<DVector<f64>>>,
    comm: Vec<Vec<DVector<f64>>>,
    comm_potential: Vec<Vec<DVector<f64>>>,
}

impl<'c> TensorCache<'c> {
    pub fn new(geo: &LocalGeometry<'c>, phis: &[DVector<f64>], conv: MConvention) -> Self {
        let k = phis.len();
        let tangents: Vec<_> = phis.iter().map(|p| geo.tangent(p)).collect();
        let dirs: Vec<_> = phis.iter().map(|p| geo.directional_theta(p)).collect();
        // z[a][b] = L(V_a theta) Phi_b
        let z: Vec<Vec<DVector<f64>>> = (0..k)
            .map(|a| (0..k).map(|b| weighted_apply(geo.chain, &dirs[a], &phis[b])).collect())
            .collect();
        let n: Vec<Vec<Vec<f64>>> = z.iter().map(|row| row.iter().map(|zz| n_edges(geo, zz)).collect()).collect();
        let mut m = vec![vec![Vec::new(); k]; k];
        let mut gamma = vec![vec![DVector::zeros(0); k]; k];
        let mut comm = vec![vec![DVector::zeros(0); k]; k];
        let mut comm_potential = vec![vec![DVector::zeros(0); k]; k];
        for a in 0..k {
            for b in 0..k {
                let w = w_edges(geo, &tangents[a], &tangents[b]);
                m[a][b] = (0..w.len()).map(|e| conv.combine(w[e], n[a][b][e], n[b][a][e])).collect();
                gamma[a][b] = geo.gamma(&phis[a], &phis[b]);
                comm[a][b] = &z[a][b] - &z[b][a];
                comm_potential[a][b] = geo.potential(&comm[a][b]);
            }
        }
        Self {
            chain: geo.chain,
            l: geo.onsager.matrix().clone(),
            phis: phis.to_vec(),
            m,
            gamma,
            comm,
            comm_potential,
        }
    }

    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }

    /// `<R(V_a, V_b) V_c, V_d>` for cached potentials.
    pub fn riemann(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let p = &self.phis;
        let form = |x: usize, mm: &[f64], y: usize| weighted_form(self.chain, mm, &p[x], &p[y]);
        let inner = |x: &DVector<f64>, y: &DVector<f64>| x.dot(&(&self.l * y));
        let comm = |x: usize, y: usize, u: usize, v: usize| self.comm[x][y].dot(&self.comm_potential[u][v]);
        let mut t = form(b, &self.m[a][c], d) + form(a, &self.m[b][d], c)
            - form(b, &self.m[a][d], c)
            - form(a, &self.m[b][c], d);
        t += inner(&self.gamma[a][c], &self.gamma[b][d]) - inner(&self.gamma[b][c], &self.gamma[a][d]);
        t += comm(a, c, b, d) - comm(b, c, a, d) + 2.0 * comm(c, d, a, b);
        0.25 * t
    }

    /// All components `R[a][b][c][d]` flattened in row-major order.
    pub fn full_tensor(&self) -> FrameTensor {
        let k = self.len();
        let mut values = vec![0.0; k * k * k * k];
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        values[((a * k + b) * k + c) * k + d] = self.riemann(a, b, c, d);
                    }
                }
            }
        }
        FrameTensor { k, values }
    }
}

/// A four-index array over `k` directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameTensor {
    pub k: usize,
    pub values: Vec<f64>,
}

impl FrameTensor {
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let k = self.k;
        self.values[((a * k + b) * k + c) * k + d]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference relative to the larger of the two scales.
    pub fn relative_deviation(&self, other: &FrameTensor) -> f64 {
        let diff = self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = self.max_abs().max(other.max_abs());
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    /// Largest violation of the antisymmetries, pair symmetry and the first
    /// Bianchi identity.
    pub fn symmetry_defect(&self) -> f64 {
        let k = self.k;
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        let r = self.get(a, b, c, d);
                        worst = worst
                            .max((r + self.get(b, a, c, d)).abs())
                            .max((r + self.get(a, b, d, c)).abs())
                            .max((r - self.get(c, d, a, b)).abs())
                            .max((r + self.get(b, c, a, d) + self.get(c, a, b, d)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// `<R(V1, V2) V3, V4>` through the tensor route.
pub fn riemann(geo: &LocalGeometry, phis: [&DVector<f64>; 4], conv: MConvention) -> f64 {
    let list: Vec<DVector<f64>> = phis.iter().map(|p| (*p).clone()).collect();
    TensorCache::new(geo, &list, conv).riemann(0, 1, 2, 3)
}

/// Dense per-pair mobility data used by the explicit route.
struct Dense {
    n: usize,
    s: DMatrix<f64>,
    th: DMatrix<f64>,
    d: DMatrix<f64>,
    dd: DMatrix<f64>,
    dx: DMatrix<f64>,
}

impl Dense {
    fn new(geo: &LocalGeometry) -> Self {
        let n = geo.n();
        let mut out = Self {
            n,
            s: DMatrix::zeros(n, n),
            th: DMatrix::zeros(n, n),
            d: DMatrix::zeros(n, n),
            dd: DMatrix::zeros(n, n),
            dx: DMatrix::zeros(n, n),
        };
        for (e, j) in geo.chain.edges().iter().zip(&geo.jet.edges) {
            let (a, b) = (e.i, e.j);
            out.s[(a, b)] = e.sqrt_weight;
            out.s[(b, a)] = e.sqrt_weight;
            out.th[(a, b)] = j.theta;
            out.th[(b, a)] = j.theta;
            out.d[(a, b)] = j.d_i;
            out.d[(b, a)] = j.d_j;
            out.dd[(a, b)] = j.d_ii;
            out.dd[(b, a)] = j.d_jj;
            out.dx[(a, b)] = j.d_ij;
            out.dx[(b, a)] = j.d_ij;
        }
        out
    }

    fn grad(&self, f: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.s[(i, j)] * (f[j] - f[i]))
    }
}

fn gamma3_dense(geo: &LocalGeometry, dense: &Dense, phis: [&DVector<f64>; 4]) -> DMatrix<f64> {
    let n = dense.n;
    let g = dense.grad(&geo.gamma(phis[0], phis[1]));
    let g4 = dense.grad(phis[3]);
    let g3 = dense.grad(phis[2]);
    let a = DMatrix::from_fn(n, n, |i, j| g[(i, j)] * g4[(i, j)] * dense.d[(i, j)]);
    DMatrix::from_fn(n, n, |i, j| {
        0.5 * (0..n)
            .map(|k| dense.s[(i, k)] * (a[(k, j)] - a[(i, j)]) * g3[(i, k)] * dense.th[(i, k)])
            .sum::<f64>()
    })
}

/// Third order Gamma operator on all ordered vertex pairs:
/// `Gamma3_ij = 1/2 sum_k sqrt(omega_ik) (A_kj - A_ij) (grad Phi3)_ik theta_ik`
/// with `A_ij = (grad Gamma(Phi1, Phi2))_ij (grad Phi4)_ij d theta_ij / d p_i`.
pub fn gamma3(geo: &LocalGeometry, phis: [&DVector<f64>; 4]) -> DMatrix<f64> {
    gamma3_dense(geo, &Dense::new(geo), phis)
}

/// `<R(V1, V2) V3, V4>` through sums over vertex quadruples.
pub fn riemann_explicit(geo: &LocalGeometry, phis: [&DVector<f64>; 4]) -> f64 {
    let dense = Dense::new(geo);
    let n = dense.n;
    let g: Vec<DMatrix<f64>> = phis.iter().map(|p| dense.grad(p)).collect();
    let mut total = 0.0;
    for (a, b, x, y, sign) in [(1, 3, 0, 2, -1.0), (0, 2, 1, 3, -1.0), (1, 2, 0, 3, 1.0), (0, 3, 1, 2, 1.0)] {
        let mut block1 = 0.0;
        for i in 0..n {
            let mut flux_x = 0.0;
            let mut flux_y = 0.0;
            for k in 0..n {
                flux_x += dense.th[(i, k)] * dense.s[(i, k)] * g[x][(i, k)];
                flux_y += dense.th[(i, k)] * dense.s[(i, k)] * g[y][(i, k)];
            }
            for j in 0..n {
                block1 += dense.dd[(i, j)] * g[a][(i, j)] * g[b][(i, j)] * flux_x * flux_y;
            }
        }
        let bm = DMatrix::from_fn(n, n, |i, j| g[a][(i, j)] * g[b][(i, j)] * dense.dx[(i, j)]);
        let mut block2 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let left = dense.th[(i, j)] * dense.s[(i, j)] * g[x][(i, j)];
                if left == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..n {
                        let right = dense.th[(k, l)] * dense.s[(k, l)] * g[y][(k, l)];
                        block2 += left * right * (bm[(i, k)] - bm[(i, l)] - bm[(j, k)] + bm[(j, l)]);
                    }
                }
            }
        }
        let g3 = gamma3_dense(geo, &dense, [phis[a], phis[b], phis[x], phis[y]]).sum()
            + gamma3_dense(geo, &dense, [phis[a], phis[b], phis[y], phis[x]]).sum();
        total += sign * (0.5 * block1 + 0.125 * block2 + 0.25 * g3);
    }
    let gg = |u: usize, v: usize| dense.grad(&geo.gamma(phis[u], phis[v]));
    let (g13, g24, g23, g14) = (gg(0, 2), gg(1, 3), gg(1, 2), gg(0, 3));
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            cross += dense.th[(i, j)] * (g13[(i, j)] * g24[(i, j)] - g23[(i, j)] * g14[(i, j)]);
        }
    }
    total += 0.125 * cross;
    let c = |u: usize, v: usize| geo.commutator(phis[u], phis[v]);
    let cp = |u: usize, v: usize| geo.potential(&c(u, v));
    total += 0.25 * (c(0, 2).dot(&cp(1, 3)) - c(1, 2).dot(&cp(0, 3)) + 2.0 * c(2, 3).dot(&cp(0, 1)));
    total
}

/// Full tensor of the explicit route on a list of potentials.
pub fn explicit_tensor(geo: &LocalGeometry, phis: &[DVector<f64>]) -> FrameTensor {
    let k = phis.len();
    let mut values = vec![0.0; k * k * k * k];
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                for d in 0..k {
                    values[((a * k + b) * k + c) * k + d] =
                        riemann_explicit(geo, [&phis[a], &phis[b], &phis[c], &phis[d]]);
                }
            }
        }
    }
    FrameTensor { k, values }
}

/// Sectional curvature of the plane spanned by `V1`, `V2`.
pub fn sectional(geo: &LocalGeometry, phi1: &DVector<f64>, phi2: &DVector<f64>, conv: MConvention) -> Result<f64> {
    let g11 = geo.inner(phi1, phi1);
    let g22 = geo.inner(phi2, phi2);
    let g12 = geo.inner(phi1, phi2);
    let det = g11 * g22 - g12 * g12;
    if !(det > 1e-12 * g11 * g22) {
        return Err(Error::DegeneratePlane(det));
    }
    Ok(riemann(geo, [phi1, phi2, phi2, phi1], conv) / det)
}

/// Ricci matrix and scalar curvature on the orthonormal frame.
pub fn ricci_scalar(tensor: &FrameTensor) -> (DMatrix<f64>, f64) {
    let k = tensor.k;
    let ric = DMatrix::from_fn(k, k, |a, b| (0..k).map(|c| tensor.get(c, a, b, c)).sum());
    let scalar = ric.trace();
    (ric, scalar)
}

#[derive(Debug, Clone, Serialize)]
pub struct SectionalEntry {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConventionResidual {
    pub convention: MConvention,
    pub residual: f64,
}

/// Curvature summary at one point.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub point: Vec<f64>,
    pub model: String,
    pub theta: Vec<f64>,
    pub m_convention: MConvention,
    pub convention_residuals: Vec<ConventionResidual>,
    /// Orthonormal frame vectors, one per row.
    pub frame: Vec<Vec<f64>>,
    pub riemann: FrameTensor,
    pub sectional: Vec<SectionalEntry>,
    pub ricci: Vec<Vec<f64>>,
    pub ricci_eigenvalues: Vec<f64>,
    pub scalar: f64,
    pub explicit_residual: f64,
    pub oracle_residual: f64,
    pub symmetry_defect: f64,
    pub lattice3: Option<Lattice3Report>,
}

/// Full curvature analysis: tensor on the orthonormal frame, sectional
/// curvatures of frame planes, Ricci and scalar curvature, with residuals
/// against the explicit route and the chart oracle.
///
/// The `m` convention is the one whose frame tensor is closest to the chart
/// oracle; residuals for all conventions are reported.
pub fn analyze(
    chain: &ReversibleChain,
    model: &MobilityModel,
    point: &SimplexPoint,
    chart_opts: &ChartOptions,
) -> Result<CurvatureReport> {
    let geo = LocalGeometry::new(chain, model, point.clone())?;
    let frame_phis = geo.onsager.frame_potentials();
    let frame = geo.onsager.frame();
    let oracle = chart_curvature(chain, model, point, chart_opts)?.on_vectors(&frame);

    let mut best: Option<(MConvention, FrameTensor, f64)> = None;
    let mut convention_residuals = Vec::new();
    for conv in MConvention::ALL {
        let tensor = TensorCache::new(&geo, &frame_phis, conv).full_tensor();
        let residual = tensor.relative_deviation(&oracle);
        convention_residuals.push(ConventionResidual { convention: conv, residual });
        // Ties (e.g. where the `m` terms vanish) keep the symmetrized form;
        // another convention must beat it clearly.
        if best.as_ref().is_none_or(|b| residual < 0.1 * b.2) {
            best = Some((conv, tensor, residual));
        }
    }
    let (m_convention, tensor, oracle_residual) = best.expect("at least one convention");
    let explicit = explicit_tensor(&geo, &frame_phis);
    let (ric, scalar) = ricci_scalar(&tensor);
    let k = tensor.k;
    let mut sectional = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            sectional.push(SectionalEntry {
                a,
                b,
                value: tensor.get(a, b, b, a),
            });
        }
    }
    let mut ricci_eigenvalues: Vec<f64> = ric.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ricci_eigenvalues.sort_by(f64::total_cmp);
    let lattice3 = if chain.is_lattice3() {
        Some(lattice3::lattice3_report(chain, model, point, m_convention)?)
    } else {
        None
    };
    Ok(CurvatureReport {
        point: point.iter().copied().collect(),
        model: model.label(),
        theta: geo.theta(),
        m_convention,
        convention_residuals,
        frame: frame.iter().map(|v| v.iter().copied().collect()).collect(),
        symmetry_defect: tensor.symmetry_defect(),
        explicit_residual: tensor.relative_deviation(&explicit),
        riemann: tensor,
        sectional,
        ricci: (0..k).map(|a| ric.row(a).iter().copied().collect()).collect(),
        ricci_eigenvalues,
        scalar,
        oracle_residual,
        lattice3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::center;
    use approx::assert_relative_eq;

    fn potentials() -> Vec<DVector<f64>> {
        vec![
            center(&DVector::from_vec(vec![0.3, -1.1, 0.4, 0.9])),
            center(&DVector::from_vec(vec![-0.7, 0.2, 1.3, 0.1])),
            center(&DVector::from_vec(vec![0.5, 0.6, -0.9, 0.2])),
            center(&DVector::from_vec(vec![1.0, -0.4, 0.3, -0.8])),
        ]
    }

    fn chain4() -> ReversibleChain {
        let omega = DMatrix::from_row_slice(4, 4, &[0.0, 1.2, 0.0, 0.7, 1.2, 0.0, 0.5, 0.9, 0.0, 0.5, 0.0, 1.4, 0.7, 0.9, 1.4, 0.0]);
        let pi = DVector::from_vec(vec![0.3, 0.2, 0.1, 0.4]);
        ReversibleChain::from_weights(&omega, &pi).unwrap()
    }

    #[test]
    fn constant_mobility_is_flat() {
        let chain = chain4();
        let model = MobilityModel::constant();
        let p = SimplexPoint::from_slice(&[0.1, 0.4, 0.3, 0.2]).unwrap();
        let geo = LocalGeometry::new(&chain, &model, p).unwrap();
        let f = potentials();
        let sd = geo.second_directional(&f[0], &f[1], MConvention::Symmetrized);
        assert!(sd.w.iter().chain(&sd.m).chain(&sd.nabla_theta_l).all(|&x| x == 0.0));
        assert_eq!(riemann(&geo, [&f[0], &f[1], &f[2], &f[3]], MConvention::Symmetrized), 0.0);
        assert_eq!(riemann_explicit(&geo, [&f[0], &f[1], &f[2], &f[3]]), 0.0);
        assert!(gamma3(&geo, [&f[0], &f[1], &f[2], &f[3]]).amax() == 0.0);
    }

    #[test]
    fn routes_agree_and_gamma3_identity() {
        let chain = chain4();
        let p = SimplexPoint::from_slice(&[0.15, 0.35, 0.3, 0.2]).unwrap();
        for model in [MobilityModel::kl(), MobilityModel::alpha(-0.5).unwrap(), MobilityModel::geometric(0.8).unwrap()] {
            let geo = LocalGeometry::new(&chain, &model, p.clone()).unwrap();
            let f = potentials();
            let a = riemann(&geo, [&f[0], &f[1], &f[2], &f[3]], MConvention::Symmetrized);
            let b = riemann_explicit(&geo, [&f[0], &f[1], &f[2], &f[3]]);
            assert_relative_eq!(a, b, max_relative = 1e-10);

            let lhs: f64 = {
                let sd = geo.second_directional(&f[0], &f[2], MConvention::Symmetrized);
                2.0 * 0.5
                    * geo
                        .chain
                        .edges()
                        .iter()
                        .enumerate()
                        .map(|(e, edge)| edge.weight * (f[1][edge.j] - f[1][edge.i]) * (f[3][edge.j] - f[3][edge.i]) * sd.nabla_theta_l[e])
                        .sum::<f64>()
            };
            let rhs = 0.5 * gamma3(&geo, [&f[1], &f[3], &f[0], &f[2]]).sum();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        }
    }

    #[test]
    fn iterated_directional_symmetry() {
        let chain = chain4();
        let model = MobilityModel::kl();
        let p = SimplexPoint::from_slice(&[0.15, 0.35, 0.3, 0.2]).unwrap();
        let geo = LocalGeometry::new(&chain, &model, p).unwrap();
        let f = potentials();
        let abcd = weighted_form(&chain, &geo.iterated_directional(&f[1], &f[2]), &f[0], &f[3]);
        let dbca = weighted_form(&chain, &geo.iterated_directional(&f[1], &f[2]), &f[3], &f[0]);
        assert_relative_eq!(abcd, dbca, max_relative = 1e-13);
    }

    #[test]
    fn degenerate_plane() {
        let chain = chain4();
        let model = MobilityModel::kl();
        let p = SimplexPoint::from_slice(&[0.15, 0.35, 0.3, 0.2]).unwrap();
        let geo = LocalGeometry::new(&chain, &model, p).unwrap();
        let f = potentials();
        let twice = &f[0] * 2.0;
        assert!(matches!(
            sectional(&geo, &f[0], &twice, MConvention::Symmetrized),
            Err(Error::DegeneratePlane(_))
        ));
    }
}

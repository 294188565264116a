//! Curvature from the metric in the chart `x = (p_1, ..., p_{n-1})` by
//! finite differences.
//!
//! The chart metric is `G(x) = J^T R(theta(p)) J` with `J` the injection of
//! chart tangents into the zero-sum hyperplane. Christoffel symbols come from
//! central differences of `G` and their partials from central differences of
//! the symbols.

use nalgebra::{DMatrix, DVector};

use super::FrameTensor;
use crate::error::{Error, Result};
use crate::graph::ReversibleChain;
use crate::metric::OnsagerMatrix;
use crate::mobility::{MobilityModel, SimplexPoint};

/// Finite difference steps of the chart computation.
///
/// Both steps are multiplied by `sqrt(min(1, n * min_i p_i))`. Near the
/// boundary the metric varies on the scale of the smallest component, but
/// the nested differences amplify rounding by the product of the two steps,
/// so the steps shrink more slowly than that scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartOptions {
    pub metric_step: f64,
    pub christoffel_step: f64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            metric_step: 1e-5,
            christoffel_step: 1e-4,
        }
    }
}

/// Fully lowered curvature tensor `R_{mjkl}` in chart coordinates.
#[derive(Debug, Clone)]
pub struct ChartCurvature {
    dim: usize,
    metric: DMatrix<f64>,
    lowered: Vec<f64>,
}

impl ChartCurvature {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Chart metric at the base point.
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// `R_{mjkl} = g_{mi} R^i_{jkl}`.
    pub fn component(&self, m: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim;
        self.lowered[((m * d + j) * d + k) * d + l]
    }

    /// `<R(X, Y) Z, W>` for ambient tangent vectors; only their first `n - 1`
    /// entries are used as chart components.
    pub fn contract(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for m in 0..d {
            for j in 0..d {
                let wz = w[m] * z[j];
                if wz == 0.0 {
                    continue;
                }
                for k in 0..d {
                    for l in 0..d {
                        total += self.component(m, j, k, l) * wz * x[k] * y[l];
                    }
                }
            }
        }
        total
    }

    /// `T[a][b][c][d] = <R(e_a, e_b) e_c, e_d>` over the given tangent vectors.
    pub fn on_vectors(&self, vectors: &[DVector<f64>]) -> FrameTensor {
        let k = vectors.len();
        let mut values = vec![0.0; k * k * k * k];
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        values[((a * k + b) * k + c) * k + d] =
                            self.contract(&vectors[a], &vectors[b], &vectors[c], &vectors[d]);
                    }
                }
            }
        }
        FrameTensor { k, values }
    }

    /// Largest violation of the curvature symmetries in chart components.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let r = self.component(a, b, c, e);
                        worst = worst
                            .max((r + self.component(b, a, c, e)).abs())
                            .max((r + self.component(a, b, e, c)).abs())
                            .max((r - self.component(c, e, a, b)).abs())
                            .max((r + self.component(a, c, e, b) + self.component(a, e, b, c)).abs());
                    }
                }
            }
        }
        worst
    }
}

struct Chart<'a> {
    chain: &'a ReversibleChain,
    model: &'a MobilityModel,
    dim: usize,
}

impl Chart<'_> {
    fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim + 1;
        let mut p = DVector::zeros(n);
        for k in 0..self.dim {
            p[k] = x[k];
        }
        p[n - 1] = 1.0 - x.iter().sum::<f64>();
        let point = SimplexPoint::new(p)?;
        let theta = self.model.theta(self.chain, &point)?;
        let r = OnsagerMatrix::new(self.chain, &theta)?.pseudo_inverse();
        let d = self.dim;
        Ok(DMatrix::from_fn(d, d, |a, b| {
            r[(a, b)] - r[(a, n - 1)] - r[(n - 1, b)] + r[(n - 1, n - 1)]
        }))
    }

    /// `Gamma[i][k][l]` flattened.
    fn christoffel(&self, x: &[f64], h: f64) -> Result<Vec<f64>> {
        let d = self.dim;
        let g = self.metric(x)?;
        let ginv = g.clone().try_inverse().ok_or(Error::NearSingular(d))?;
        let mut dg = Vec::with_capacity(d);
        for k in 0..d {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            dg.push((self.metric(&up)? - self.metric(&down)?) / (2.0 * h));
        }
        let mut out = vec![0.0; d * d * d];
        for i in 0..d {
            for k in 0..d {
                for l in 0..d {
                    out[(i * d + k) * d + l] = 0.5
                        * (0..d)
                            .map(|m| ginv[(i, m)] * (dg[k][(m, l)] + dg[l][(m, k)] - dg[m][(k, l)]))
                            .sum::<f64>();
                }
            }
        }
        Ok(out)
    }
}

/// Chart curvature of the metric at `p`.
pub fn chart_curvature(
    chain: &ReversibleChain,
    model: &MobilityModel,
    p: &SimplexPoint,
    opts: &ChartOptions,
) -> Result<ChartCurvature> {
    let n = p.len();
    if n != chain.n() {
        return Err(Error::DimensionMismatch {
            expected: chain.n(),
            got: n,
        });
    }
    let d = n - 1;
    let chart = Chart { chain, model, dim: d };
    let scale = (n as f64 * p.min()).min(1.0).sqrt();
    let hg = opts.metric_step * scale;
    let hc = opts.christoffel_step * scale;
    let x: Vec<f64> = p.iter().take(d).copied().collect();
    let metric = chart.metric(&x)?;
    let gam = chart.christoffel(&x, hg)?;
    let mut dgam = Vec::with_capacity(d);
    for k in 0..d {
        let mut up = x.clone();
        let mut down = x.clone();
        up[k] += hc;
        down[k] -= hc;
        let a = chart.christoffel(&up, hg)?;
        let b = chart.christoffel(&down, hg)?;
        dgam.push(a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * hc)).collect::<Vec<f64>>());
    }
    let idx = |i: usize, k: usize, l: usize| (i * d + k) * d + l;
    // R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj} + Gamma^m_{lj} Gamma^i_{km} - Gamma^m_{kj} Gamma^i_{lm}
    let mut upper = vec![0.0; d * d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut r = dgam[k][idx(i, l, j)] - dgam[l][idx(i, k, j)];
                    for m in 0..d {
                        r += gam[idx(m, l, j)] * gam[idx(i, k, m)] - gam[idx(m, k, j)] * gam[idx(i, l, m)];
                    }
                    upper[idx(i, j, k) * d + l] = r;
                }
            }
        }
    }
    let mut lowered = vec![0.0; d * d * d * d];
    for m in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    lowered[idx(m, j, k) * d + l] = (0..d).map(|i| metric[(m, i)] * upper[idx(i, j, k) * d + l]).sum();
                }
            }
        }
    }
    Ok(ChartCurvature { dim: d, metric, lowered })
}

//! Reversible chains and the weighted discrete calculus on their graphs.
//!
//! Edges are stored once per unordered pair `(i, j)` with `i < j`. Edge fields
//! store the value for the orientation `i -> j`; the opposite orientation is
//! the negation. Sums written over ordered pairs therefore equal twice the
//! corresponding sum over stored edges for symmetric summands.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary entries at or below this value are rejected.
pub const MIN_STATIONARY: f64 = 1e-12;
/// Detailed balance tolerance, relative to the largest edge weight.
pub const DETAILED_BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub sqrt_weight: f64,
}

#[derive(Debug, Clone)]
pub struct ReversibleChain {
    rates: DMatrix<f64>,
    pi: DVector<f64>,
    omega: DMatrix<f64>,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, usize)>>,
}

impl ReversibleChain {
    /// Builds a chain from a rate matrix. Diagonal entries are ignored.
    pub fn from_rates(rates: DMatrix<f64>) -> Result<Self> {
        let n = rates.nrows();
        if n < 2 || rates.ncols() != n {
            return Err(Error::InvalidChain(format!(
                "rate matrix must be square with at least 2 states, got {}x{}",
                rates.nrows(),
                rates.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let q = rates[(i, j)];
                if i != j && (!q.is_finite() || q < 0.0) {
                    return Err(Error::InvalidChain(format!(
                        "rate ({}, {}) = {q} is not a nonnegative number",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        check_connected(&rates)?;
        let pi = stationary_distribution(&rates)?;

        let mut omega = DMatrix::zeros(n, n);
        let mut max_flux: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    max_flux = max_flux.max(rates[(i, j)] * pi[i]);
                }
            }
        }
        let mut edges = Vec::new();
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let forward = rates[(i, j)] * pi[i];
                let backward = rates[(j, i)] * pi[j];
                let defect = (forward - backward).abs() / max_flux;
                if defect > DETAILED_BALANCE_TOL {
                    return Err(Error::DetailedBalanceViolation {
                        i: i + 1,
                        j: j + 1,
                        defect,
                    });
                }
                let w = 0.5 * (forward + backward);
                if w > 0.0 {
                    omega[(i, j)] = w;
                    omega[(j, i)] = w;
                    let e = edges.len();
                    edges.push(Edge {
                        i,
                        j,
                        weight: w,
                        sqrt_weight: w.sqrt(),
                    });
                    neighbors[i].push((j, e));
                    neighbors[j].push((i, e));
                }
            }
        }
        Ok(Self {
            rates,
            pi,
            omega,
            edges,
            neighbors,
        })
    }

    /// Builds a chain from a symmetric weight matrix and a positive reference
    /// distribution, setting `Q_ij = omega_ij / pi_i`.
    pub fn from_weights(omega: &DMatrix<f64>, pi: &DVector<f64>) -> Result<Self> {
        let n = omega.nrows();
        if pi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: pi.len(),
            });
        }
        let total = pi.sum();
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    q[(i, j)] = omega[(i, j)] / (pi[i] / total);
                }
            }
        }
        Self::from_rates(q)
    }

    /// The monomolecular triangle reaction with rates
    /// `Q12=1, Q21=2, Q23=1, Q32=2, Q13=1, Q31=4`.
    pub fn triangle_reaction() -> Self {
        let q = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 2.0, 0.0, 1.0, 4.0, 2.0, 0.0]);
        Self::from_rates(q).expect("triangle reaction preset is reversible")
    }

    /// Three states on a path `1 - 2 - 3` with unit edge weights and uniform
    /// stationary distribution.
    pub fn lattice3() -> Self {
        let q = DMatrix::from_row_slice(3, 3, &[0.0, 3.0, 0.0, 3.0, 0.0, 3.0, 0.0, 3.0, 0.0]);
        Self::from_rates(q).expect("lattice preset is reversible")
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbours of `i` as `(j, edge index)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.neighbors[i]
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map(|&(_, e)| e)
    }

    /// Largest detailed balance residual `|Q_ij pi_i - Q_ji pi_j|`.
    pub fn detailed_balance_residual(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let r = self.rates[(i, j)] * self.pi[i] - self.rates[(j, i)] * self.pi[j];
                    worst = worst.max(r.abs());
                }
            }
        }
        worst
    }

    /// Largest stationarity residual of `pi` under the generator.
    pub fn stationarity_residual(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.rates[(j, i)] * self.pi[j] - self.rates[(i, j)] * self.pi[i])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// True when the chain is the three-state path with unit weights.
    pub fn is_lattice3(&self) -> bool {
        let tol = 1e-12;
        self.n() == 3
            && self.edges.len() == 2
            && (self.omega[(0, 1)] - 1.0).abs() < tol
            && (self.omega[(1, 2)] - 1.0).abs() < tol
            && self.omega[(0, 2)] == 0.0
    }
}

fn check_connected(rates: &DMatrix<f64>) -> Result<()> {
    let n = rates.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && j != i && (rates[(i, j)] > 0.0 || rates[(j, i)] > 0.0) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    match seen.iter().position(|&s| !s) {
        Some(k) => Err(Error::DisconnectedGraph(k + 1)),
        None => Ok(()),
    }
}

/// Solves `pi^T K = 0` with `sum(pi) = 1`, where `K` is the generator.
fn stationary_distribution(rates: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = rates.nrows();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[(i, j)] = rates[(j, i)];
                a[(i, i)] -= rates[(i, j)];
            }
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(Error::DegenerateStationary {
        index: 1,
        value: 0.0,
    })?;
    if let Some((index, &value)) = pi
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > MIN_STATIONARY))
    {
        return Err(Error::DegenerateStationary {
            index: index + 1,
            value,
        });
    }
    let total = pi.sum();
    Ok(pi / total)
}

/// An antisymmetric function on the edges, stored per unordered edge in the
/// orientation `i -> j` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(chain: &ReversibleChain) -> Self {
        Self {
            values: vec![0.0; chain.edges().len()],
        }
    }

    /// Value on the oriented edge `from -> to`, or zero when not an edge.
    pub fn get(&self, chain: &ReversibleChain, from: usize, to: usize) -> f64 {
        match chain.edge_index(from, to) {
            Some(e) if chain.edges()[e].i == from => self.values[e],
            Some(e) => -self.values[e],
            None => 0.0,
        }
    }
}

/// `(grad Phi)_ij = sqrt(omega_ij) (Phi_j - Phi_i)`.
pub fn grad(chain: &ReversibleChain, phi: &DVector<f64>) -> EdgeField {
    EdgeField {
        values: chain
            .edges()
            .iter()
            .map(|e| e.sqrt_weight * (phi[e.j] - phi[e.i]))
            .collect(),
    }
}

/// `div(v)_i = sum_j sqrt(omega_ij) v_ij`.
pub fn div(chain: &ReversibleChain, v: &EdgeField) -> DVector<f64> {
    let mut out = DVector::zeros(chain.n());
    for (e, edge) in chain.edges().iter().enumerate() {
        let flux = edge.sqrt_weight * v.values[e];
        out[edge.i] += flux;
        out[edge.j] -= flux;
    }
    out
}

/// Weighted graph Laplacian `div(grad Phi)`, nonpositive as a quadratic form.
pub fn laplacian(chain: &ReversibleChain, phi: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(chain.n());
    for i in 0..chain.n() {
        for &(j, e) in chain.neighbors(i) {
            out[i] += chain.edges()[e].weight * (phi[j] - phi[i]);
        }
    }
    out
}

/// Chain definition as read from a config file. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub n: usize,
    pub rates: Vec<(usize, usize, f64)>,
}

impl ChainSpec {
    pub fn build(&self) -> Result<ReversibleChain> {
        let mut q = DMatrix::zeros(self.n, self.n);
        for &(i, j, rate) in &self.rates {
            if i == 0 || j == 0 || i > self.n || j > self.n || i == j {
                return Err(Error::InvalidChain(format!(
                    "rate entry ({i}, {j}) is not an off-diagonal pair of states 1..={}",
                    self.n
                )));
            }
            q[(i - 1, j - 1)] = rate;
        }
        ReversibleChain::from_rates(q)
    }
}

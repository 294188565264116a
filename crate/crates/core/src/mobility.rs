//! Edge mobilities `theta_ij(p)` built from means of density ratios, with
//! analytic first and second partials and the paired f-divergences.
//!
//! Every built-in mobility has the form `theta_ij = k * m(s_i p_i, s_j p_j)`
//! for a symmetric mean `m`, per-vertex ratio scales `s` and a prefactor `k`.
//!
//! | kind      | mean `m(a, b)`                         | scaling `Stationary` | scaling `Uniform(c)` |
//! |-----------|----------------------------------------|----------------------|----------------------|
//! | KL        | `(a - b) / (ln a - ln b)`              | `s = 1/pi`, `k = 1`  | `s = c`, `k = 1`     |
//! | alpha     | `(a - b) / (f'(a) - f'(b))`            | `s = 1/pi`, `k = 1`  | `s = c`, `k = 1`     |
//! | geometric | `(a b)^beta`                           | `s = 1/pi`, `k = 1`  | `s = 1`, `k = c`     |
//! | custom    | user closure, partials by differences  | `s = 1/pi`, `k = 1`  | `s = c`, `k = 1`     |
//!
//! For the f-means the `Uniform(c)` scaling with `c = n` coincides with the
//! stationary scaling on a chain with uniform `pi`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ReversibleChain;

/// Components below this value are treated as lying on the boundary.
pub const BOUNDARY_EPS: f64 = 1e-9;
/// Tolerance on `sum(p) = 1` for user supplied points.
pub const SUM_TOL: f64 = 1e-12;
/// Central difference step for first partials of custom means.
pub const FD_STEP_FIRST: f64 = 1e-6;
/// Central difference step for second partials of custom means.
pub const FD_STEP_SECOND: f64 = 1e-4;

/// Relative gap `|b - a| / mean` below which divided differences are
/// evaluated by their series about the midpoint.
const SERIES_SWITCH: f64 = 0.05;
const SERIES_TERMS: usize = 8;

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(DVector<f64>);

impl SimplexPoint {
    pub fn new(p: DVector<f64>) -> Result<Self> {
        Self::with_tolerance(p, SUM_TOL)
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(p))
    }

    /// Validates with a custom tolerance on the total mass.
    pub fn with_tolerance(p: DVector<f64>, sum_tol: f64) -> Result<Self> {
        for (index, &value) in p.iter().enumerate() {
            if !(value >= BOUNDARY_EPS) {
                return Err(Error::BoundaryPoint {
                    index: index + 1,
                    value,
                });
            }
        }
        let total = p.sum();
        if (total - 1.0).abs() > sum_tol {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self(p))
    }

    /// Rescales a positive vector to unit mass before validating it.
    pub fn normalized(p: DVector<f64>) -> Result<Self> {
        let total = p.sum();
        Self::new(p / total)
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for SimplexPoint {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A symmetric mean `m(a, b)` together with its partials up to second order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanJet {
    pub m: f64,
    pub ma: f64,
    pub mb: f64,
    pub maa: f64,
    pub mab: f64,
    pub mbb: f64,
}

/// Mobility of one stored edge `(i, j)`, `i < j`, with partials in `p_i`, `p_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeJet {
    pub theta: f64,
    pub d_i: f64,
    pub d_j: f64,
    pub d_ii: f64,
    pub d_ij: f64,
    pub d_jj: f64,
}

/// Mobilities and their partials on every stored edge of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaJet {
    pub edges: Vec<EdgeJet>,
}

impl ThetaJet {
    pub fn theta(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.theta).collect()
    }
}

pub type MeanFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A user supplied mean. Partials are taken by central differences.
#[derive(Clone)]
pub struct CustomMean {
    pub name: String,
    pub mean: MeanFn,
}

impl fmt::Debug for CustomMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMean").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum MeanKind {
    KlLogMean,
    AlphaMean { alpha: f64 },
    GeometricMean { beta: f64 },
    Custom(CustomMean),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scaling {
    /// Ratios `p_i / pi_i` of the chain's stationary distribution.
    Stationary,
    /// A fixed constant `c`: ratios `c p_i` for f-means, prefactor `c` for
    /// the geometric mean.
    Uniform(f64),
}

#[derive(Debug, Clone)]
pub struct MobilityModel {
    kind: MeanKind,
    scaling: Scaling,
}

impl MobilityModel {
    pub fn kl() -> Self {
        Self {
            kind: MeanKind::KlLogMean,
            scaling: Scaling::Stationary,
        }
    }

    pub fn alpha(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || (alpha - 1.0).abs() < 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha}: the alpha mean requires a finite alpha different from 1"
            )));
        }
        Ok(Self {
            kind: MeanKind::AlphaMean { alpha },
            scaling: Scaling::Stationary,
        })
    }

    pub fn geometric(beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta = {beta} is not finite")));
        }
        Ok(Self {
            kind: MeanKind::GeometricMean { beta },
            scaling: Scaling::Stationary,
        })
    }

    /// Mobility identically equal to one, which yields a flat metric.
    pub fn constant() -> Self {
        Self {
            kind: MeanKind::GeometricMean { beta: 0.0 },
            scaling: Scaling::Stationary,
        }
    }

    pub fn custom(name: impl Into<String>, mean: MeanFn) -> Self {
        Self {
            kind: MeanKind::Custom(CustomMean {
                name: name.into(),
                mean,
            }),
            scaling: Scaling::Stationary,
        }
    }

    pub fn with_uniform_scale(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale c = {c} must be positive")));
        }
        self.scaling = Scaling::Uniform(c);
        Ok(self)
    }

    pub fn kind(&self) -> &MeanKind {
        &self.kind
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    /// Whether the model carries a convex generator `f` whose divergence is
    /// paired with the mobility.
    pub fn has_divergence(&self) -> bool {
        matches!(self.kind, MeanKind::KlLogMean | MeanKind::AlphaMean { .. })
    }

    pub fn label(&self) -> String {
        let base = match &self.kind {
            MeanKind::KlLogMean => "kl".to_string(),
            MeanKind::AlphaMean { alpha } => format!("alpha({alpha})"),
            MeanKind::GeometricMean { beta } => format!("geometric({beta})"),
            MeanKind::Custom(c) => format!("custom({})", c.name),
        };
        match self.scaling {
            Scaling::Stationary => base,
            Scaling::Uniform(c) => format!("{base}, c = {c}"),
        }
    }

    fn ratio_scale(&self, chain: &ReversibleChain, i: usize) -> f64 {
        match (self.scaling, &self.kind) {
            (Scaling::Stationary, _) => 1.0 / chain.pi()[i],
            (Scaling::Uniform(_), MeanKind::GeometricMean { .. }) => 1.0,
            (Scaling::Uniform(c), _) => c,
        }
    }

    fn prefactor(&self) -> f64 {
        match (self.scaling, &self.kind) {
            (Scaling::Uniform(c), MeanKind::GeometricMean { .. }) => c,
            _ => 1.0,
        }
    }

    /// The mean and its partials at `(a, b)`.
    pub fn mean_jet(&self, a: f64, b: f64) -> Result<MeanJet> {
        match &self.kind {
            MeanKind::GeometricMean { beta } => {
                let m = (a * b).powf(*beta);
                Ok(MeanJet {
                    m,
                    ma: beta * m / a,
                    mb: beta * m / b,
                    maa: beta * (beta - 1.0) * m / (a * a),
                    mab: beta * beta * m / (a * b),
                    mbb: beta * (beta - 1.0) * m / (b * b),
                })
            }
            MeanKind::KlLogMean | MeanKind::AlphaMean { .. } => {
                let d = self.divided_difference(a, b);
                if !(d.d > 0.0 && d.d.is_finite()) {
                    return Err(Error::NonconvexF(0.5 * (a + b)));
                }
                Ok(d.reciprocal())
            }
            MeanKind::Custom(c) => Ok(custom_jet(&c.mean, a, b)),
        }
    }

    /// Derivatives `g^(k)(z)` of `g = f'` for `k = 0..=order`.
    fn generator_derivatives(&self, z: f64, order: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(order + 1);
        match self.kind {
            MeanKind::KlLogMean => {
                out.push(z.ln());
                let mut fact = 1.0;
                for k in 1..=order {
                    if k > 1 {
                        fact *= (k - 1) as f64;
                    }
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    out.push(sign * fact / z.powi(k as i32));
                }
            }
            MeanKind::AlphaMean { alpha } => {
                let e = 0.5 * (alpha - 1.0);
                let scale = 2.0 / (alpha - 1.0);
                out.push(scale * (z.powf(e) - 1.0));
                let mut falling = 1.0;
                for k in 1..=order {
                    falling *= e - (k - 1) as f64;
                    out.push(scale * falling * z.powf(e - k as f64));
                }
            }
            _ => unreachable!("generator derivatives requested for a mean without f"),
        }
        out
    }

    /// `D(a, b) = (g(b) - g(a)) / (b - a)` and its partials.
    fn divided_difference(&self, a: f64, b: f64) -> DividedDifference {
        let mu = 0.5 * (a + b);
        let delta = 0.5 * (b - a);
        if delta.abs() <= SERIES_SWITCH * mu {
            let g = self.generator_derivatives(mu, 2 * SERIES_TERMS + 1);
            return DividedDifference::series(&g, delta);
        }
        let ga = self.generator_derivatives(a, 2);
        let gb = self.generator_derivatives(b, 2);
        let h = b - a;
        let d = (gb[0] - ga[0]) / h;
        let da = (d - ga[1]) / h;
        let db = (gb[1] - d) / h;
        DividedDifference {
            d,
            da,
            db,
            daa: (2.0 * da - ga[2]) / h,
            dab: (db - da) / h,
            dbb: (gb[2] - 2.0 * db) / h,
        }
    }

    /// Mobility with partials on every edge at `p`.
    pub fn theta_jet(&self, chain: &ReversibleChain, p: &SimplexPoint) -> Result<ThetaJet> {
        check_len(chain, p)?;
        let k = self.prefactor();
        let edges = chain
            .edges()
            .iter()
            .map(|e| {
                let si = self.ratio_scale(chain, e.i);
                let sj = self.ratio_scale(chain, e.j);
                let m = self.mean_jet(si * p[e.i], sj * p[e.j])?;
                Ok(EdgeJet {
                    theta: k * m.m,
                    d_i: k * si * m.ma,
                    d_j: k * sj * m.mb,
                    d_ii: k * si * si * m.maa,
                    d_ij: k * si * sj * m.mab,
                    d_jj: k * sj * sj * m.mbb,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ThetaJet { edges })
    }

    /// Mobility on every stored edge.
    pub fn theta(&self, chain: &ReversibleChain, p: &SimplexPoint) -> Result<Vec<f64>> {
        Ok(self.theta_jet(chain, p)?.theta())
    }

    fn edge_jet(
        &self,
        chain: &ReversibleChain,
        p: &SimplexPoint,
        i: usize,
        j: usize,
    ) -> Result<(EdgeJet, bool)> {
        check_len(chain, p)?;
        let e = chain.edge_index(i, j).ok_or_else(|| {
            Error::InvalidParameter(format!("({}, {}) is not an edge", i + 1, j + 1))
        })?;
        let jet = self.theta_jet(chain, p)?.edges[e];
        Ok((jet, chain.edges()[e].i == i))
    }

    /// `d theta_ij / d p_k` for `k` in `{i, j}` (0-based indices).
    pub fn theta_partial(
        &self,
        chain: &ReversibleChain,
        p: &SimplexPoint,
        (i, j): (usize, usize),
        k: usize,
    ) -> Result<f64> {
        if k != i && k != j {
            return Err(Error::UnsupportedVertex {
                i: i + 1,
                j: j + 1,
                vertex: k + 1,
            });
        }
        let (jet, forward) = self.edge_jet(chain, p, i, j)?;
        let low = if forward { i } else { j };
        Ok(if k == low { jet.d_i } else { jet.d_j })
    }

    /// `d^2 theta_ij / d p_k d p_l` for `k, l` in `{i, j}` (0-based indices).
    pub fn theta_second_partial(
        &self,
        chain: &ReversibleChain,
        p: &SimplexPoint,
        (i, j): (usize, usize),
        (k, l): (usize, usize),
    ) -> Result<f64> {
        for v in [k, l] {
            if v != i && v != j {
                return Err(Error::UnsupportedVertex {
                    i: i + 1,
                    j: j + 1,
                    vertex: v + 1,
                });
            }
        }
        let (jet, forward) = self.edge_jet(chain, p, i, j)?;
        let low = if forward { i } else { j };
        Ok(match (k == low, l == low) {
            (true, true) => jet.d_ii,
            (false, false) => jet.d_jj,
            _ => jet.d_ij,
        })
    }

    /// Convex generator `f` with `f(1) = 0` and its first two derivatives.
    pub fn generator(&self, z: f64) -> Result<(f64, f64, f64)> {
        match self.kind {
            MeanKind::KlLogMean => Ok((z * z.ln() - z + 1.0, z.ln(), 1.0 / z)),
            MeanKind::AlphaMean { alpha } => {
                let f = if (alpha + 1.0).abs() < 1e-12 {
                    z - 1.0 - z.ln()
                } else {
                    let t = 0.5 * (1.0 + alpha);
                    4.0 / (1.0 - alpha * alpha) * ((1.0 - t) + t * z - z.powf(t))
                };
                let g = self.generator_derivatives(z, 1);
                Ok((f, g[0], g[1]))
            }
            _ => Err(Error::NoDivergenceDefined),
        }
    }

    /// `D_f(p) = sum_i f(s_i p_i) / s_i`, the divergence from the reference
    /// measure `1/s` (the stationary distribution under stationary scaling).
    pub fn divergence(&self, chain: &ReversibleChain, p: &DVector<f64>) -> Result<f64> {
        check_dim(chain, p)?;
        let mut total = 0.0;
        for i in 0..chain.n() {
            let s = self.ratio_scale(chain, i);
            total += self.generator(s * p[i])?.0 / s;
        }
        Ok(total)
    }

    /// Euclidean gradient `(f'(s_i p_i))_i`.
    pub fn divergence_gradient(
        &self,
        chain: &ReversibleChain,
        p: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_dim(chain, p)?;
        let mut out = DVector::zeros(chain.n());
        for i in 0..chain.n() {
            let s = self.ratio_scale(chain, i);
            out[i] = self.generator(s * p[i])?.1;
        }
        Ok(out)
    }

    /// Diagonal of the Euclidean Hessian, `s_i f''(s_i p_i)`.
    pub fn divergence_hessian_diag(
        &self,
        chain: &ReversibleChain,
        p: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_dim(chain, p)?;
        let mut out = DVector::zeros(chain.n());
        for i in 0..chain.n() {
            let s = self.ratio_scale(chain, i);
            out[i] = s * self.generator(s * p[i])?.2;
        }
        Ok(out)
    }
}

fn check_len(chain: &ReversibleChain, p: &SimplexPoint) -> Result<()> {
    check_dim(chain, p)
}

fn check_dim(chain: &ReversibleChain, p: &DVector<f64>) -> Result<()> {
    if p.len() != chain.n() {
        return Err(Error::DimensionMismatch {
            expected: chain.n(),
            got: p.len(),
        });
    }
    Ok(())
}

struct DividedDifference {
    d: f64,
    da: f64,
    db: f64,
    daa: f64,
    dab: f64,
    dbb: f64,
}

impl DividedDifference {
    /// Midpoint expansion `D = sum_k g^(2k+1)(mu) delta^(2k) / (2k+1)!` with
    /// `mu = (a+b)/2`, `delta = (b-a)/2`, and its partials.
    fn series(g: &[f64], delta: f64) -> Self {
        let (mut d, mut d_mu, mut d_mumu) = (0.0, 0.0, 0.0);
        let (mut d_del, mut d_deldel, mut d_mudel) = (0.0, 0.0, 0.0);
        let mut fact = 1.0;
        for k in 0..SERIES_TERMS {
            let odd = 2 * k + 1;
            if k > 0 {
                fact *= (2 * k) as f64 * odd as f64;
            }
            let pow = delta.powi(2 * k as i32);
            d += g[odd] * pow / fact;
            d_mu += g[odd + 1] * pow / fact;
            d_mumu += g[odd + 2] * pow / fact;
            if k > 0 {
                let kk = 2.0 * k as f64;
                let pow1 = delta.powi(2 * k as i32 - 1);
                let pow2 = delta.powi(2 * k as i32 - 2);
                d_del += g[odd] * kk * pow1 / fact;
                d_deldel += g[odd] * kk * (kk - 1.0) * pow2 / fact;
                d_mudel += g[odd + 1] * kk * pow1 / fact;
            }
        }
        Self {
            d,
            da: 0.5 * (d_mu - d_del),
            db: 0.5 * (d_mu + d_del),
            daa: 0.25 * (d_mumu - 2.0 * d_mudel + d_deldel),
            dab: 0.25 * (d_mumu - d_deldel),
            dbb: 0.25 * (d_mumu + 2.0 * d_mudel + d_deldel),
        }
    }

    /// Partials of `1 / D`.
    fn reciprocal(&self) -> MeanJet {
        let d = self.d;
        let d2 = d * d;
        let d3 = d2 * d;
        MeanJet {
            m: 1.0 / d,
            ma: -self.da / d2,
            mb: -self.db / d2,
            maa: -self.daa / d2 + 2.0 * self.da * self.da / d3,
            mab: -self.dab / d2 + 2.0 * self.da * self.db / d3,
            mbb: -self.dbb / d2 + 2.0 * self.db * self.db / d3,
        }
    }
}

fn custom_jet(mean: &MeanFn, a: f64, b: f64) -> MeanJet {
    let m = mean(a, b);
    let (h1a, h1b) = (FD_STEP_FIRST * a, FD_STEP_FIRST * b);
    let (h2a, h2b) = (FD_STEP_SECOND * a, FD_STEP_SECOND * b);
    MeanJet {
        m,
        ma: (mean(a + h1a, b) - mean(a - h1a, b)) / (2.0 * h1a),
        mb: (mean(a, b + h1b) - mean(a, b - h1b)) / (2.0 * h1b),
        maa: (mean(a + h2a, b) - 2.0 * m + mean(a - h2a, b)) / (h2a * h2a),
        mab: (mean(a + h2a, b + h2b) - mean(a + h2a, b - h2b) - mean(a - h2a, b + h2b)
            + mean(a - h2a, b - h2b))
            / (4.0 * h2a * h2b),
        mbb: (mean(a, b + h2b) - 2.0 * m + mean(a, b - h2b)) / (h2b * h2b),
    }
}

/// Mobility declaration as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySpec {
    /// One of `kl`, `alpha`, `geometric`, `constant`.
    pub kind: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub c: Option<f64>,
    /// `stationary` or `uniform-scaled`; inferred from the presence of `c`.
    pub convention: Option<String>,
}

impl MobilitySpec {
    pub fn build(&self) -> Result<MobilityModel> {
        let param = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::InvalidParameter(format!("mobility kind `{}` needs `{name}`", self.kind)))
        };
        let model = match self.kind.as_str() {
            "kl" => MobilityModel::kl(),
            "alpha" => MobilityModel::alpha(param("alpha", self.alpha)?)?,
            "geometric" => MobilityModel::geometric(param("beta", self.beta)?)?,
            "constant" => MobilityModel::constant(),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown mobility kind `{other}` (expected kl, alpha, geometric or constant)"
                )))
            }
        };
        let uniform = match self.convention.as_deref() {
            None => self.c.is_some(),
            Some("stationary") => false,
            Some("uniform-scaled") => true,
            Some(other) => {
                return Err(Error::InvalidParameter(format!(
                    "unknown convention `{other}` (expected stationary or uniform-scaled)"
                )))
            }
        };
        match (uniform, self.c) {
            (true, Some(c)) => model.with_uniform_scale(c),
            (true, None) => Err(Error::InvalidParameter(
                "uniform-scaled convention needs `c`".into(),
            )),
            (false, Some(_)) => Err(Error::InvalidParameter(
                "`c` is only used by the uniform-scaled convention".into(),
            )),
            (false, None) => Ok(model),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform3() -> SimplexPoint {
        SimplexPoint::from_slice(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap()
    }

    #[test]
    fn kl_at_stationary_is_one() {
        let chain = ReversibleChain::triangle_reaction();
        let p = SimplexPoint::new(chain.pi().clone()).unwrap();
        for t in MobilityModel::kl().theta(&chain, &p).unwrap() {
            assert_relative_eq!(t, 1.0, epsilon = 1e-15);
        }
        for t in MobilityModel::geometric(0.5).unwrap().theta(&chain, &p).unwrap() {
            assert_relative_eq!(t, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn kl_uniform_scaled_value() {
        let chain = ReversibleChain::lattice3();
        let p = SimplexPoint::from_slice(&[0.5, 0.3, 0.2]).unwrap();
        let model = MobilityModel::kl().with_uniform_scale(3.0).unwrap();
        let theta = model.theta(&chain, &p).unwrap();
        assert_relative_eq!(theta[0], 3.0 * 0.2 / (0.5f64 / 0.3).ln(), epsilon = 1e-14);
        assert_relative_eq!(theta[0], 1.1745691, epsilon = 1e-7);
        let stationary = MobilityModel::kl().theta(&chain, &p).unwrap();
        assert_relative_eq!(theta[1], stationary[1], epsilon = 1e-14);
    }

    #[test]
    fn geometric_partials() {
        let chain = ReversibleChain::lattice3();
        let p = SimplexPoint::from_slice(&[0.5, 0.3, 0.2]).unwrap();
        let beta = 1.5;
        let model = MobilityModel::geometric(beta)
            .unwrap()
            .with_uniform_scale(3f64.powf(2.0 * beta))
            .unwrap();
        let jet = model.theta_jet(&chain, &p).unwrap().edges[0];
        assert_relative_eq!(jet.theta, 3f64.powf(3.0) * (0.15f64).powf(beta), epsilon = 1e-13);
        assert_relative_eq!(jet.d_i, beta * jet.theta / 0.5, epsilon = 1e-13);
        assert_relative_eq!(jet.d_ij, beta * beta * jet.theta / 0.15, epsilon = 1e-13);
        let stationary = MobilityModel::geometric(beta).unwrap();
        assert_relative_eq!(
            stationary.theta(&chain, &p).unwrap()[0],
            jet.theta,
            epsilon = 1e-13
        );
    }

    #[test]
    fn constant_mobility_is_flat() {
        let chain = ReversibleChain::triangle_reaction();
        let p = SimplexPoint::from_slice(&[0.2, 0.5, 0.3]).unwrap();
        for e in MobilityModel::constant().theta_jet(&chain, &p).unwrap().edges {
            assert_eq!((e.theta, e.d_i, e.d_j, e.d_ii, e.d_ij, e.d_jj), (1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn partial_index_checks() {
        let chain = ReversibleChain::triangle_reaction();
        let p = SimplexPoint::from_slice(&[0.2, 0.5, 0.3]).unwrap();
        let model = MobilityModel::kl();
        assert!(matches!(
            model.theta_partial(&chain, &p, (0, 1), 2),
            Err(Error::UnsupportedVertex { vertex: 3, .. })
        ));
        let a = model.theta_partial(&chain, &p, (0, 1), 0).unwrap();
        let b = model.theta_partial(&chain, &p, (1, 0), 0).unwrap();
        assert_eq!(a, b);
        let c = model.theta_second_partial(&chain, &p, (2, 1), (1, 2)).unwrap();
        let d = model.theta_second_partial(&chain, &p, (1, 2), (2, 1)).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn kl_divergence_value() {
        let chain = ReversibleChain::lattice3();
        let p = SimplexPoint::from_slice(&[0.5, 0.3, 0.2]).unwrap();
        let d = MobilityModel::kl().divergence(&chain, &p).unwrap();
        let expect = 0.5 * 1.5f64.ln() + 0.3 * 0.9f64.ln() + 0.2 * 0.6f64.ln();
        assert_relative_eq!(d, expect, epsilon = 1e-15);
        assert_relative_eq!(d, 0.0689593, epsilon = 1e-7);
        let at_pi = MobilityModel::kl().divergence(&chain, &uniform3()).unwrap();
        assert!(at_pi.abs() < 1e-15);
        let g = MobilityModel::kl().divergence_gradient(&chain, &uniform3()).unwrap();
        assert!(g.amax() < 1e-15);
    }

    #[test]
    fn geometric_has_no_divergence() {
        let chain = ReversibleChain::lattice3();
        let model = MobilityModel::geometric(1.0).unwrap();
        assert_eq!(
            model.divergence(&chain, &uniform3()).unwrap_err(),
            Error::NoDivergenceDefined
        );
    }

    #[test]
    fn alpha_minus_one_generator_limit() {
        let m = MobilityModel::alpha(-1.0).unwrap();
        let near = MobilityModel::alpha(-1.0 + 1e-7).unwrap();
        for z in [0.3, 1.0, 2.5] {
            let (f, fp, fpp) = m.generator(z).unwrap();
            assert_relative_eq!(f, z - 1.0 - z.ln(), epsilon = 1e-15);
            assert_relative_eq!(fp, 1.0 - 1.0 / z, epsilon = 1e-14);
            assert_relative_eq!(fpp, 1.0 / (z * z), epsilon = 1e-14);
            assert_relative_eq!(near.generator(z).unwrap().0, f, epsilon = 1e-6);
        }
        assert!(MobilityModel::alpha(1.0).is_err());
    }

    #[test]
    fn series_and_exact_branches_meet() {
        // The series branch is used while (b - a) / (b + a) <= 0.05, i.e. b / a <= 1.05 / 0.95.
        let switch = 1.05 / 0.95;
        for model in [MobilityModel::kl(), MobilityModel::alpha(-1.0).unwrap(), MobilityModel::alpha(4.0).unwrap()] {
            let a = 0.8;
            let below = model.mean_jet(a, a * (switch - 1e-9)).unwrap();
            let above = model.mean_jet(a, a * (switch + 1e-9)).unwrap();
            for (x, y) in [
                (below.m, above.m),
                (below.ma, above.ma),
                (below.mb, above.mb),
                (below.maa, above.maa),
                (below.mab, above.mab),
                (below.mbb, above.mbb),
            ] {
                assert_relative_eq!(x, y, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn equal_ratio_limit() {
        let model = MobilityModel::alpha(0.5).unwrap();
        let r: f64 = 0.7;
        let limit = 1.0 / r.powf((0.5 - 3.0) / 2.0);
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let gap = 10f64.powi(-k);
            let err = (model.mean_jet(r, r + gap).unwrap().m - limit).abs();
            assert!(err <= gap, "gap {gap}: error {err}");
            assert!(err <= prev.max(1e-15));
            prev = err;
        }
        assert_relative_eq!(model.mean_jet(r, r).unwrap().m, limit, epsilon = 1e-15);
    }

    #[test]
    fn spec_parsing_rules() {
        let spec = |kind: &str, c: Option<f64>, convention: Option<&str>| MobilitySpec {
            kind: kind.into(),
            alpha: Some(0.5),
            beta: Some(1.0),
            c,
            convention: convention.map(String::from),
        };
        assert_eq!(spec("kl", None, None).build().unwrap().scaling(), Scaling::Stationary);
        assert_eq!(
            spec("geometric", Some(9.0), None).build().unwrap().scaling(),
            Scaling::Uniform(9.0)
        );
        assert!(spec("kl", None, Some("uniform-scaled")).build().is_err());
        assert!(spec("kl", Some(3.0), Some("stationary")).build().is_err());
        assert!(spec("harmonic", None, None).build().is_err());
    }
}

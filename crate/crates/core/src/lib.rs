//! Riemannian geometry on the probability simplex of a reversible Markov chain.
//!
//! The metric is the pseudo-inverse of the Onsager response matrix
//! `L(theta) = sum_edges omega theta (e_i - e_j)(e_i - e_j)^T`, where the edge
//! mobility `theta` is a mean of the ratios `p_i / pi_i`. On top of this
//! metric the crate provides the gradient-flow form of the master equation,
//! the Levi-Civita connection, geodesics, parallel transport, Hessians and
//! the Riemann curvature tensor with independent cross-checks.
//!
//! ```
//! use onsager_core::{ReversibleChain, MobilityModel, SimplexPoint, LocalGeometry};
//!
//! let chain = ReversibleChain::triangle_reaction();
//! let model = MobilityModel::kl();
//! let p = SimplexPoint::from_slice(&[0.5, 0.3, 0.2]).unwrap();
//! let geo = LocalGeometry::new(&chain, &model, p).unwrap();
//! assert_eq!(geo.onsager.eigenvalues().len(), 2);
//! ```

// Negated comparisons are used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod connection;
pub mod curvature;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod metric;
pub mod mobility;
pub mod validation;

pub use connection::{
    geodesic_bvp, geodesic_ivp, parallel_transport, BvpOptions, BvpSolution, ConnectionValue, CurveSpec, GeodesicPath,
    TransportState,
};
pub use curvature::chart::{chart_curvature, ChartCurvature, ChartOptions};
pub use curvature::lattice3::{Lattice3Curvature, Lattice3Report, SweepRow};
pub use curvature::{analyze, riemann, riemann_explicit, sectional, CurvatureReport, FrameTensor, MConvention, TensorCache};
pub use dynamics::{integrate, DivergenceEnergy, Energy, LinearEnergy, Trajectory};
pub use error::{Error, Result};
pub use graph::{ChainSpec, Edge, EdgeField, ReversibleChain};
pub use metric::{arc_length, distance, LocalGeometry, OnsagerMatrix};
pub use mobility::{MeanKind, MobilityModel, MobilitySpec, Scaling, SimplexPoint};

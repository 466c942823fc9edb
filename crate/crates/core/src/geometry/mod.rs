//! Fixed-rank manifold embedded in `ℝ^{m×n}` with the Kronecker metric
//! `⟨X, Y⟩_B = ⟨E X D, Y⟩`. The identity metric gives the standard geometry.

mod factored;
mod metric;
mod point;
mod tangent;

pub use factored::FactoredMatrix;
pub use metric::{KroneckerMetric, Weight};
pub use point::{
    retract, truncate, truncate_dense, weighted_svd, weighted_svd_dense, FixedRankPoint,
    RetractionPlan, WeightedSvd, RANK_FLOOR,
};
pub use tangent::{project, project_dense, riemannian_gradient, transport, TangentVector};

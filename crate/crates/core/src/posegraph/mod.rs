//! Keyframe pose graph with confidence-gated robust point residuals.
//!
//! Node poses map keyframe camera coordinates into the object frame. For an
//! edge `(i, j)` and match `(m, n)` the residual is
//! `r = X_i[m] − pose_i⁻¹·pose_j·X_j[n]`, divided by `w = σ²/q`. Matches
//! with `q < q_min` or pixel confidence below `c_min` are dropped. The robust
//! cost of one match is `huber_δ(‖r‖) / w²`.

mod graph;
mod loops;
mod residual;
mod solver;
pub mod sparse;

pub use graph::{descriptor, GraphEdge, Keyframe, KeyframeKind, Match, PoseGraph, DESCRIPTOR_SIDE};
pub use loops::{detect_loop_closures, try_insert_keyframe, DescriptorRetriever, Insertion, MatchResult, Matcher, Retriever};
pub use residual::{edge_residuals, huber, match_weight, EdgeResidual, MatchWeight, SolverConfig};
pub use solver::{normal_equations, optimize, NormalEquations, OptimizeReport};

//! Design optimization: surrogate cost, inexact Newton-CG and continuation.

pub mod continuation;
pub mod cost;
pub mod incg;

pub use continuation::{
    adaptive_optimize, optimize_once, ContinuationConfig, CostObjective, OptimizeResult, OuterStep, ProgressRecord,
};
pub use cost::{quadratic_penalty, CostBreakdown, CostConfig, CostEvaluator, Evaluation, FrozenBases};
pub use incg::{incg_solve, IncgOptions, IncgResult, IterRecord, Objective};

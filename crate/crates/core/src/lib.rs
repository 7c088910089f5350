//! Communication-efficient distributed estimation for regularized GLMs.
//!
//! Data live on `m` machines as [`Shard`]s. Each outer iteration gathers local
//! gradients at the current iterate, builds a gradient-corrected local
//! objective (optionally with a proximal term `(α/2)‖θ − θ_t‖²`), and solves it
//! on one machine or on all machines followed by averaging.
//!
//! ```
//! use cease_core::{AlgoConfig, Cluster, GlmFamily, Penalty, Shard, Variant};
//!
//! let a = Shard::from_features(&[&[0.5], &[-1.0], &[2.0]], vec![1.0, 0.0, 1.0]).unwrap();
//! let b = Shard::from_features(&[&[1.5], &[0.0], &[-0.5]], vec![0.0, 1.0, 0.0]).unwrap();
//! let cluster = Cluster::new(vec![a, b], GlmFamily::Bernoulli, Penalty::l2(0.05)).unwrap();
//! let trace = cease_core::run(&cluster, &AlgoConfig::new(Variant::CeaseAvg, 0.1, 20)).unwrap();
//! let grad = cluster.global_gradient(trace.last()).unwrap();
//! assert!(grad.iter().zip(trace.last()).all(|(g, t)| (g + 0.1 * t).abs() < 1e-8));
//! ```

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod model;
pub mod quadratic;
pub mod solver;

pub use engine::{
    global_gradient, one_shot_average, reference_minimizer, run, run_with_clock, step, AlgoConfig, Clock, Cluster,
    Init, NoClock, RoundRecord, RunTrace, Variant,
};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{gradient, hessian, loss, prox_penalty, GlmFamily, Penalty, PenaltyKind, Shard};
pub use solver::{solve, Solution, SolverSettings, SurrogateProblem};

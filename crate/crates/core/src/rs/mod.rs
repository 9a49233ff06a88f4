//! Replica-symmetric fixed points by damped iteration over Gauss
//! quadrature.

pub mod quadrature;
pub mod solve;

pub use quadrature::{Quadrature, DEFAULT_ORDER};
pub use solve::{
    residual, solve, solve_perceptron, solve_sk, solve_sk_box, solve_st, RSSolution, RsInputs,
    SolverOptions,
};

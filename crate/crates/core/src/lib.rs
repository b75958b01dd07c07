//! Solver and simulation suite for adaptive optimal trade execution under
//! stochastic liquidity and volatility.
//!
//! A scalar Markov factor drives the temporary-impact coefficient and the
//! volatility of the traded asset. The value function of the penalized
//! execution problem factorizes as `z(t, y) |q|^(1+phi)`; `z` solves a
//! semilinear parabolic equation computed here by a monotone bracketing
//! iteration over Crank-Nicolson solves. On top of the solver sit the
//! optimal-strategy simulator, Monte Carlo experiment harness, and the
//! large-penalty (complete-execution) analysis.

pub mod config;
pub mod csvio;
pub mod error;
pub mod hamiltonian;
pub mod model;
pub mod montecarlo;
pub mod ode_bounds;
pub mod pde;
pub mod runner;
pub mod singular;
pub mod strategy;
pub mod threads;

pub use error::{Error, Result};

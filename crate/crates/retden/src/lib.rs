//! retden: parametric return-density estimation for tabular reinforcement
//! learning, with risk-sensitive quantile-criterion control.
//!
//! The library estimates the full conditional density of the discounted
//! return at every state-action pair, fitting a parametric family (Gaussian,
//! Laplace, or skewed Laplace) by stochastic natural-gradient TD updates.
//! Quantiles of the learned densities (values-at-risk of the return) then
//! drive q-Q learning / q-SARSA control. A grid-based distributional Bellman
//! operator and a quadrature implementation of the update integral serve as
//! independent oracles for the closed-form machinery.
//!
//! Modules:
//! - [`mdp`]: finite MDPs, the cliff-walk environment, reward generators.
//! - [`density`]: the three density families and their Fisher geometry.
//! - [`ng`]: natural-gradient TD updates, targets, and the numeric oracle.
//! - [`agent`]: policies, q-Q learners, and the Watkins / Q-hat baselines.
//! - [`bellman`]: grid densities and the exact distributional operator.
//! - [`experiment`]: seeded trials, Monte Carlo evaluation, aggregation.

pub mod agent;
pub mod bellman;
pub mod density;
pub mod error;
pub mod experiment;
mod linalg;
pub mod mdp;
pub mod ng;
pub mod quad;

pub use error::{Error, Result};

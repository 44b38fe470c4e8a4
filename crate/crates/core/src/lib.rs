//! Exact distributions, moments, first-passage laws and hitting probabilities
//! for population processes observed at random times:
//!
//! | process | definition |
//! |---------|------------|
//! | iterated birth | `Z(t) = B_α(B_λ(t))` |
//! | birth at Poisson times | `X(t) = B_α(N_λ(t))` |
//! | linear death at Poisson times | `Y(t) = D_μ(N_λ(t))` |
//! | sublinear death at Poisson times | `Ỹ(t) = D̃_μ(N_λ(t))` |
//!
//! where `B` is a Yule–Furry birth process, `N` a homogeneous Poisson process
//! and `D`, `D̃` the linear and sublinear pure-death processes.
//!
//! Every closed form is paired with an independent route (positive
//! conditioning series, quadrature, ODE integration or exact simulation)
//! so that the formulas can be cross-checked at run time; see [`verify`].

pub mod composed;
pub mod error;
pub mod laws;
pub mod passage;
pub mod quadrature;
pub mod series;
pub mod sim;
pub mod verify;

pub use composed::{ComposedModel, PmfTable};
pub use error::{Error, Result};
pub use laws::{BirthParams, DeathParams, PoissonParams};
pub use passage::HitProbResult;
pub use series::{Method, SeriesControl};
pub use sim::{EmpiricalEstimate, PathRecord, SimConfig};
pub use verify::OdeCheckReport;

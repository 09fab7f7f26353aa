//! Pseudo minimum phi-divergence estimation for binary logistic regression
//! with complex survey data.
//!
//! The crate is organised bottom-up:
//!
//! * [`divergence`]: the Cressie–Read family and phi-divergences between
//!   paired `2I`-cell probability vectors.
//! * [`glm`]: the logistic model, survey datasets and the probability
//!   vectors fed into the divergence objective.
//! * [`estimation`]: damped-Newton minimisation of the divergence, a
//!   weighted IRLS solver for the pseudo maximum likelihood estimator, and
//!   the sandwich covariance.
//! * [`overdispersed`]: cluster samplers with intra-cluster correlation
//!   (Dirichlet-multinomial, random-clumped, m-inflated).
//! * [`experiment`]: the Monte-Carlo RMSE study.
//! * [`io`]: CSV ingestion, config files, result tables and SVG plots.

pub mod data;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod glm;
pub mod io;
pub mod overdispersed;

pub use divergence::{phi_divergence, PhiSpec, ProbVector2I};
pub use error::{Error, Result};
pub use estimation::{fit_pmle_irls, fit_pmphi, FitOptions, FitResult, Method};
pub use glm::SurveyDataset;

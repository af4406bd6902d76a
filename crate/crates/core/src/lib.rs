//! Mobility-driven epidemic modeling and control.
//!
//! This crate fits an extended SEIR-style compartmental model to regional
//! mobility and death-count data, then computes optimal mobility-restriction
//! schedules by geometric programming. It is organized as follows:
//!
//! * [`posynomial`] — exact monomial/posynomial algebra with log-space
//!   evaluation, the shared representation between the epidemic model and
//!   the optimizer.
//! * [`epimodel`] — the discrete-time compartment dynamics, both as a numeric
//!   simulator and as symbolic posynomials in the control variables.
//! * [`mobility`] — the parametric map from mobility levels to the daily
//!   infection rate.
//! * [`learn`] — multitask calibration: shared clinical rates plus per-region
//!   mobility maps and initial conditions, fitted by Adam on a normalized
//!   death-prediction loss with analytic adjoint gradients.
//! * [`gpsolve`] — the two control programs (minimum discounted deaths under
//!   a budget, minimum budget under a hospitalization cap) and a log-barrier
//!   interior-point solver.
//! * [`data`] — CSV ingestion of public mobility/death datasets, region
//!   joining, and a synthetic-data generator used as the learning oracle.
//!
//! With the default `parallel` feature, independent training trials and
//! per-region batch gradients run on rayon; results are bit-identical to the
//! sequential fallback (`--no-default-features`).

pub mod data;
pub mod epimodel;
pub mod exec;
pub mod gpsolve;
pub mod learn;
pub mod mobility;
pub mod posynomial;

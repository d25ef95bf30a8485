//! EIKF-Net: explicit-implicit knowledge fusion forecasting for multivariate
//! sensor networks.
//!
//! The library learns a latent hypergraph over sensors while also exploiting
//! a predefined distance-kernel graph, fuses both representation streams
//! through gating, and produces multi-horizon point forecasts with optional
//! Gaussian predictive uncertainty. Everything runs on a small reverse-mode
//! autodiff substrate so gradients are exact and checkable against finite
//! differences.

pub mod cli;
pub mod data;
pub mod graph_repr;
pub mod hg_infer;
pub mod hg_repr;
pub mod model;
pub mod numeric;
pub mod projection;
pub mod temporal;
pub mod training;

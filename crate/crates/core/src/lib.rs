//! Bayesian joint VaR/ES forecasting with CAViaR-type recursions that use
//! overnight returns and realized volatility.
//!
//! The crate covers data ingestion ([`market`]), the model recursions
//! ([`model`]), the asymmetric-Laplace posterior ([`likelihood`]), an adaptive
//! MCMC sampler ([`mcmc`]), one-step-ahead rolling forecasts ([`forecast`]),
//! forecast evaluation ([`backtest`]) and a synthetic data generator with
//! known risk dynamics ([`simulate`]).

pub mod backtest;
pub mod error;
pub mod forecast;
pub mod likelihood;
pub mod market;
pub mod mcmc;
pub mod model;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use market::MarketSeries;
pub use model::{InitialState, ModelSpec, ParamVector, RiskPath, Variant};

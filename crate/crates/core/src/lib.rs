//! Export-diversity analysis of bilateral trade data.
//!
//! The pipeline runs from raw trade-flow and GDP tables to per-country
//! diversity panels ([`ingest`], [`diversity`]), logistic S-curve fits
//! ([`sigmoid_fit`]), three-stage classification ([`stages`]), and yearly
//! parameter series plus log-log power laws ([`dynamics`]). The [`cli`]
//! module backs the `tradecurve` binary.

pub mod cli;
pub mod diversity;
pub mod dynamics;
pub mod ingest;
pub mod sigmoid_fit;
pub mod stages;

pub use diversity::{normalize, profile, shannon_entropy, DiversityIndex, DiversityProfile};
pub use dynamics::{
    fit_power_law, fit_year, power_law_matrix, run_series, PowerLawFit, Variable, YearlyResult,
};
pub use ingest::{
    build_panel, parse_gdp_table, parse_trade_flows, Code, CountryObservation, GdpRecord, LogBase,
    Panel, TradeFlow,
};
pub use sigmoid_fit::{fit_logistic, logistic_eval, FitOptions, LogisticFit, LogisticParams};
pub use stages::{classify, critical_points, stage_counts, CriticalPoints, Stage};

//! Year-by-year S-curve fits and log-log power laws between diversity
//! variables.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::diversity::{DiversityError, DiversityIndex, MinMax};
use crate::ingest::{
    self, CountryObservation, Crosswalk, GdpRecord, GdpTable, IngestError, LogBase, Panel, TradeFlow,
};
use crate::sigmoid_fit::{fit_logistic, FitError, FitOptions, LogisticFit};
use crate::stages::{self, CriticalPoints, StageCounts, StageError};

/// One of the four per-country diversity measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    ExportGoods,
    ImportGoods,
    /// Distinct destination countries.
    ExporterPartners,
    /// Distinct source countries.
    ImporterPartners,
}

impl Variable {
    pub const ALL: [Variable; 4] = [
        Variable::ImporterPartners,
        Variable::ExporterPartners,
        Variable::ImportGoods,
        Variable::ExportGoods,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::ExportGoods => "export_goods",
            Variable::ImportGoods => "import_goods",
            Variable::ExporterPartners => "exporters",
            Variable::ImporterPartners => "importers",
        }
    }

    pub fn value(self, obs: &CountryObservation) -> f64 {
        let count = match self {
            Variable::ExportGoods => obs.export_goods,
            Variable::ImportGoods => obs.import_goods,
            Variable::ExporterPartners => obs.exporter_partners,
            Variable::ImporterPartners => obs.importer_partners,
        };
        count as f64
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "export_goods" => Ok(Variable::ExportGoods),
            "import_goods" => Ok(Variable::ImportGoods),
            "exporters" | "exporter_partners" => Ok(Variable::ExporterPartners),
            "importers" | "importer_partners" => Ok(Variable::ImporterPartners),
            other => Err(format!(
                "unknown variable `{other}` (expected export_goods, import_goods, exporters or importers)"
            )),
        }
    }
}

impl Serialize for Variable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{year}: {source}")]
    Fit {
        year: i32,
        #[source]
        source: FitError,
    },
    #[error("{year}: {source}")]
    Stage {
        year: i32,
        #[source]
        source: StageError,
    },
    #[error("{year}: {source}")]
    Normalize {
        year: i32,
        #[source]
        source: DiversityError,
    },
    #[error("every year in the range failed ({} failures)", failures.len())]
    AllYearsFailed { failures: Vec<YearFailure> },
    #[error("power law needs at least 3 positive pairs with two distinct X; {usable} usable, {excluded} excluded")]
    InsufficientData { usable: usize, excluded: usize },
    #[error("empty year range")]
    EmptyRange,
}

impl DynamicsError {
    pub fn kind(&self) -> &'static str {
        match self {
            DynamicsError::Ingest(e) => e.kind(),
            DynamicsError::Fit { source, .. } => source.kind(),
            DynamicsError::Stage { source, .. } => source.kind(),
            DynamicsError::Normalize { source, .. } => source.kind(),
            DynamicsError::AllYearsFailed { .. } => "AllYearsFailed",
            DynamicsError::InsufficientData { .. } => "InsufficientData",
            DynamicsError::EmptyRange => "EmptyRange",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearFailure {
    pub year: i32,
    pub error: &'static str,
    pub message: String,
}

impl YearFailure {
    fn new(year: i32, err: &DynamicsError) -> Self {
        YearFailure {
            year,
            error: err.kind(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearlyResult {
    pub year: i32,
    pub variable: Variable,
    pub fit: LogisticFit,
    pub critical_points: CriticalPoints,
    pub counts: StageCounts,
    /// Initial, acceleration and final shares of the panel.
    pub proportions: [f64; 3],
    pub normalized: bool,
    /// Range of the raw responses before any normalization.
    pub y_min: f64,
    pub y_max: f64,
}

impl YearlyResult {
    pub fn record(&self) -> SeriesRecord {
        let p = &self.fit.params;
        let cp = &self.critical_points;
        SeriesRecord {
            year: self.year,
            variable: self.variable,
            a: p.asymptote,
            k: p.rate,
            xm: p.midpoint,
            xl: cp.x_left,
            xr: cp.x_right,
            yl: cp.y_left,
            ym: cp.y_mid,
            yr: cp.y_right,
            r2: self.fit.r_squared,
            f: self.fit.f_value,
            proportions: self.proportions,
            normalized: self.normalized,
            y_min: self.y_min,
            y_max: self.y_max,
        }
    }
}

/// Flat serialized form of a [`YearlyResult`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRecord {
    pub year: i32,
    pub variable: Variable,
    #[serde(rename = "A")]
    pub a: f64,
    pub k: f64,
    #[serde(rename = "XM")]
    pub xm: f64,
    #[serde(rename = "XL")]
    pub xl: f64,
    #[serde(rename = "XR")]
    pub xr: f64,
    #[serde(rename = "YL")]
    pub yl: f64,
    #[serde(rename = "YM")]
    pub ym: f64,
    #[serde(rename = "YR")]
    pub yr: f64,
    pub r2: f64,
    pub f: f64,
    pub proportions: [f64; 3],
    pub normalized: bool,
    pub y_min: f64,
    pub y_max: f64,
}

/// The `(log GDP, y)` points a panel contributes for `variable`.
pub fn panel_points(panel: &Panel, variable: Variable) -> Vec<(f64, f64)> {
    panel
        .observations
        .iter()
        .map(|o| (o.log_gdp, variable.value(o)))
        .collect()
}

/// Fits one year's panel, optionally min-max normalizing the responses.
pub fn fit_panel(
    panel: &Panel,
    variable: Variable,
    normalize: bool,
    options: &FitOptions,
) -> Result<YearlyResult, DynamicsError> {
    let year = panel.year;
    let mut points = panel_points(panel, variable);
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if normalize {
        let mm = MinMax::of(&ys).map_err(|source| DynamicsError::Normalize { year, source })?;
        for p in &mut points {
            p.1 = mm.apply(p.1);
        }
    }
    let fit = fit_logistic(&points, options).map_err(|source| DynamicsError::Fit { year, source })?;
    let critical_points =
        stages::critical_points(&fit.params).map_err(|source| DynamicsError::Stage { year, source })?;
    let counts = stages::assign(&panel.observations, &critical_points).counts;
    Ok(YearlyResult {
        year,
        variable,
        proportions: counts.proportions(),
        fit,
        critical_points,
        counts,
        normalized: normalize,
        y_min,
        y_max,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn fit_year(
    trades: &[TradeFlow],
    gdp: &[GdpRecord],
    year: i32,
    variable: Variable,
    normalize: bool,
    log_base: LogBase,
    options: &FitOptions,
) -> Result<YearlyResult, DynamicsError> {
    let panel = ingest::build_panel(trades, gdp, year, log_base, None)?;
    fit_panel(&panel, variable, normalize, options)
}

/// Successful years in order plus the years that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub results: Vec<YearlyResult>,
    pub failures: Vec<YearFailure>,
}

impl Series {
    pub fn records(&self) -> Vec<SeriesRecord> {
        self.results.iter().map(YearlyResult::record).collect()
    }
}

/// Runs [`fit_panel`] for every year in `years`, in parallel.
///
/// A year whose panel cannot be built or whose fit fails becomes a gap
/// recorded in [`Series::failures`]. The output does not depend on thread
/// scheduling.
pub fn run_series_with<F>(
    years: RangeInclusive<i32>,
    variable: Variable,
    normalize: bool,
    options: &FitOptions,
    panel_for: F,
) -> Result<Series, DynamicsError>
where
    F: Fn(i32) -> Result<Panel, IngestError> + Sync,
{
    if years.is_empty() {
        return Err(DynamicsError::EmptyRange);
    }
    let outcomes: Vec<(i32, Result<YearlyResult, DynamicsError>)> = years
        .into_par_iter()
        .map(|year| {
            let result = panel_for(year)
                .map_err(DynamicsError::from)
                .and_then(|panel| fit_panel(&panel, variable, normalize, options));
            (year, result)
        })
        .collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (year, outcome) in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push(YearFailure::new(year, &e)),
        }
    }
    if results.is_empty() {
        return Err(DynamicsError::AllYearsFailed { failures });
    }
    Ok(Series { results, failures })
}

#[allow(clippy::too_many_arguments)]
pub fn run_series(
    trades: &[TradeFlow],
    gdp: &[GdpRecord],
    years: RangeInclusive<i32>,
    variable: Variable,
    normalize: bool,
    log_base: LogBase,
    options: &FitOptions,
) -> Result<Series, DynamicsError> {
    let mut index = DiversityIndex::new(Crosswalk::new());
    index.extend(trades.iter().filter(|f| years.contains(&f.year)));
    let table = GdpTable::from_records(gdp);
    run_series_with(years, variable, normalize, options, |year| {
        ingest::join_panel(&index, &table, year, log_base)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    SuperLinear,
    Linear,
    SubLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub c: f64,
    pub gamma: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Pairs dropped for a non-positive coordinate.
    pub excluded: usize,
}

impl PowerLawFit {
    pub fn scaling(&self) -> Scaling {
        if self.gamma > 1.0 {
            Scaling::SuperLinear
        } else if self.gamma < 1.0 {
            Scaling::SubLinear
        } else {
            Scaling::Linear
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c * x.powf(self.gamma)
    }
}

/// Fits `Y = c X^gamma` by ordinary least squares on `(ln X, ln Y)`.
pub fn fit_power_law(pairs: &[(f64, f64)]) -> Result<PowerLawFit, DynamicsError> {
    let logs: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let excluded = pairs.len() - logs.len();
    let insufficient = DynamicsError::InsufficientData {
        usable: logs.len(),
        excluded,
    };
    if logs.len() < 3 {
        return Err(insufficient);
    }
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &logs {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(insufficient);
    }
    let gamma = sxy / sxx;
    let intercept = mean_y - gamma * mean_x;
    let ss_res: f64 = logs
        .iter()
        .map(|&(x, y)| (y - intercept - gamma * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(PowerLawFit {
        c: intercept.exp(),
        gamma,
        r_squared,
        n_points: logs.len(),
        excluded,
    })
}

/// The six `(X, Y)` cross-relations, in reporting order.
pub const POWER_LAW_PAIRS: [(Variable, Variable); 6] = [
    (Variable::ImporterPartners, Variable::ExporterPartners),
    (Variable::ImporterPartners, Variable::ExportGoods),
    (Variable::ImportGoods, Variable::ExporterPartners),
    (Variable::ImportGoods, Variable::ExportGoods),
    (Variable::ImporterPartners, Variable::ImportGoods),
    (Variable::ExporterPartners, Variable::ExportGoods),
];

#[derive(Debug)]
pub struct PowerLawEntry {
    pub x: Variable,
    pub y: Variable,
    pub result: Result<PowerLawFit, DynamicsError>,
}

pub fn fit_pair(panel: &[CountryObservation], x: Variable, y: Variable) -> PowerLawEntry {
    let pairs: Vec<(f64, f64)> = panel.iter().map(|o| (x.value(o), y.value(o))).collect();
    PowerLawEntry {
        x,
        y,
        result: fit_power_law(&pairs),
    }
}

/// Fits every pair of [`POWER_LAW_PAIRS`]; a failing pair does not affect
/// the others.
pub fn power_law_matrix(panel: &[CountryObservation]) -> Vec<PowerLawEntry> {
    POWER_LAW_PAIRS
        .iter()
        .map(|&(x, y)| fit_pair(panel, x, y))
        .collect()
}

//! Diversity measures computed from trade flows.
//!
//! Counts only consider flows with strictly positive value: a zero-value
//! line is a reporting artifact rather than trade.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{Code, Crosswalk, TradeFlow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiversityError {
    #[error("{country} has no positive-value exports in {year}")]
    NoExports { country: String, year: i32 },
    #[error("cannot normalize: all values equal {value}")]
    DegenerateRange { value: f64 },
    #[error("cannot normalize an empty or non-finite sequence")]
    InvalidValues,
}

impl DiversityError {
    pub fn kind(&self) -> &'static str {
        match self {
            DiversityError::NoExports { .. } => "NoExports",
            DiversityError::DegenerateRange { .. } => "DegenerateRange",
            DiversityError::InvalidValues => "InvalidValues",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityProfile {
    pub country: Code,
    pub year: i32,
    /// Distinct categories exported.
    pub export_goods: usize,
    /// Distinct categories imported.
    pub import_goods: usize,
    /// Distinct destination countries.
    pub exporter_partners: usize,
    /// Distinct source countries.
    pub importer_partners: usize,
    /// Entropy of export value shares over categories, in nats.
    pub shannon_export: Option<f64>,
}

/// Diversity profile of `country` in `year` over an in-memory slice.
pub fn profile(trades: &[TradeFlow], country: &str, year: i32) -> DiversityProfile {
    let mut export_goods = HashSet::new();
    let mut import_goods = HashSet::new();
    let mut destinations = HashSet::new();
    let mut sources = HashSet::new();
    for f in trades.iter().filter(|f| f.year == year && f.value > 0.0) {
        if f.exporter.as_str() == country {
            export_goods.insert(&f.category);
            destinations.insert(&f.importer);
        }
        if f.importer.as_str() == country {
            import_goods.insert(&f.category);
            sources.insert(&f.exporter);
        }
    }
    DiversityProfile {
        country: Code::from(country),
        year,
        export_goods: export_goods.len(),
        import_goods: import_goods.len(),
        exporter_partners: destinations.len(),
        importer_partners: sources.len(),
        shannon_export: shannon_entropy(trades, country, year).ok(),
    }
}

/// Shannon entropy of `country`'s export value shares across categories.
///
/// Exact duplicate rows are counted once.
pub fn shannon_entropy(trades: &[TradeFlow], country: &str, year: i32) -> Result<f64, DiversityError> {
    let mut seen = HashSet::new();
    let mut by_category: HashMap<&str, Vec<f64>> = HashMap::new();
    for f in trades {
        if f.year != year || f.exporter.as_str() != country || f.value <= 0.0 {
            continue;
        }
        let key = (
            f.importer.as_str(),
            f.category.as_str(),
            f.value.to_bits(),
            f.quantity.map(f64::to_bits),
        );
        if seen.insert(key) {
            by_category.entry(f.category.as_str()).or_default().push(f.value);
        }
    }
    // Sorted summation keeps the result independent of row and hash order.
    let mut values: Vec<f64> = by_category
        .into_values()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            v.iter().sum()
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(DiversityError::NoExports {
            country: country.to_string(),
            year,
        });
    }
    let h = -values
        .iter()
        .map(|v| {
            let p = v / total;
            p * p.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Min-max scaling onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn of(values: &[f64]) -> Result<Self, DiversityError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(DiversityError::InvalidValues);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return Err(DiversityError::DegenerateRange { value: min });
        }
        Ok(MinMax { min, max })
    }

    pub fn apply(&self, value: f64) -> f64 {
        (value - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, scaled: f64) -> f64 {
        self.min + scaled * (self.max - self.min)
    }
}

pub fn normalize(values: &[f64]) -> Result<Vec<f64>, DiversityError> {
    let mm = MinMax::of(values)?;
    Ok(values.iter().map(|&v| mm.apply(v)).collect())
}

#[derive(Debug, Default)]
struct YearSets {
    /// (country, category) pairs, exporter side.
    exports: HashSet<(u32, u32)>,
    /// (country, category) pairs, importer side.
    imports: HashSet<(u32, u32)>,
    /// (exporter, importer) links.
    links: HashSet<(u32, u32)>,
    categories: HashSet<u32>,
}

/// Incremental diversity counts for many countries and years.
///
/// Flows are consumed one at a time, so a whole trade file can be indexed
/// without holding its rows in memory. Country codes pass through the
/// crosswalk before counting; flows that map onto a single country are
/// dropped.
#[derive(Debug, Default)]
pub struct DiversityIndex {
    crosswalk: Crosswalk,
    country_ids: HashMap<Code, u32>,
    countries: Vec<Code>,
    category_ids: HashMap<Code, u32>,
    years: BTreeMap<i32, YearSets>,
}

impl DiversityIndex {
    pub fn new(crosswalk: Crosswalk) -> Self {
        DiversityIndex {
            crosswalk,
            ..Self::default()
        }
    }

    fn country_id(&mut self, code: &Code) -> u32 {
        let code = self.crosswalk.resolve(code);
        if let Some(&id) = self.country_ids.get(code) {
            return id;
        }
        let id = self.countries.len() as u32;
        self.countries.push(code.clone());
        self.country_ids.insert(code.clone(), id);
        id
    }

    fn category_id(&mut self, code: &Code) -> u32 {
        let next = self.category_ids.len() as u32;
        *self.category_ids.entry(code.clone()).or_insert(next)
    }

    pub fn insert(&mut self, flow: &TradeFlow) {
        if flow.value.is_nan() || flow.value <= 0.0 {
            return;
        }
        let exporter = self.country_id(&flow.exporter);
        let importer = self.country_id(&flow.importer);
        if exporter == importer {
            return;
        }
        let category = self.category_id(&flow.category);
        let sets = self.years.entry(flow.year).or_default();
        sets.exports.insert((exporter, category));
        sets.imports.insert((importer, category));
        sets.links.insert((exporter, importer));
        sets.categories.insert(category);
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.years.keys().copied()
    }

    pub fn total_categories(&self, year: i32) -> usize {
        self.years.get(&year).map_or(0, |s| s.categories.len())
    }

    /// Profiles of every country trading in `year`, sorted by code.
    /// Entropy is not tracked here and is always `None`.
    pub fn profiles(&self, year: i32) -> Vec<DiversityProfile> {
        let Some(sets) = self.years.get(&year) else {
            return Vec::new();
        };
        let mut counts: HashMap<u32, [usize; 4]> = HashMap::new();
        for &(c, _) in &sets.exports {
            counts.entry(c).or_default()[0] += 1;
        }
        for &(c, _) in &sets.imports {
            counts.entry(c).or_default()[1] += 1;
        }
        for &(e, i) in &sets.links {
            counts.entry(e).or_default()[2] += 1;
            counts.entry(i).or_default()[3] += 1;
        }
        let mut out: Vec<DiversityProfile> = counts
            .into_iter()
            .map(|(id, [eg, ig, ep, ip])| DiversityProfile {
                country: self.countries[id as usize].clone(),
                year,
                export_goods: eg,
                import_goods: ig,
                exporter_partners: ep,
                importer_partners: ip,
                shannon_export: None,
            })
            .collect();
        out.sort_by(|a, b| a.country.cmp(&b.country));
        out
    }
}

impl<'a> Extend<&'a TradeFlow> for DiversityIndex {
    fn extend<I: IntoIterator<Item = &'a TradeFlow>>(&mut self, iter: I) {
        for flow in iter {
            self.insert(flow);
        }
    }
}

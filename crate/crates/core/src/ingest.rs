//! Trade-flow, GDP and crosswalk parsing, and the country-year panel join.
//!
//! Parsing is a single streaming pass over delimited text. Rows that fail
//! validation never abort a parse: they are counted in a [`ParseReport`]
//! together with a bounded sample of line numbers and reasons. Only an
//! unreadable source, a header that does not match the declared schema, or
//! a keyed-table conflict is fatal.

use std::borrow::Borrow;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, Read};
use std::ops::{Deref, RangeInclusive};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use csv::ByteRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diversity::DiversityIndex;

pub const TRADE_HEADER: [&str; 6] = ["year", "exporter", "importer", "sitc", "value", "quantity"];
pub const GDP_HEADER: [&str; 3] = ["year", "country", "gdp"];
pub const CROSSWALK_HEADER: [&str; 2] = ["from", "to"];

/// Upper bound on the number of bad rows echoed back in a report.
pub const MAX_BAD_SAMPLES: usize = 20;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    UnreadableSource {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("duplicate GDP record for ({year}, {country})")]
    DuplicateKey { year: i32, country: String },
    #[error("crosswalk maps `{from}` more than once")]
    DuplicateMapping { from: String },
    #[error("no country has both trade flows and GDP in {year}")]
    EmptyPanel { year: i32 },
}

impl IngestError {
    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::UnreadableSource { .. } => "UnreadableSource",
            IngestError::SchemaMismatch { .. } => "SchemaMismatch",
            IngestError::DuplicateKey { .. } => "DuplicateKey",
            IngestError::DuplicateMapping { .. } => "DuplicateMapping",
            IngestError::EmptyPanel { .. } => "EmptyPanel",
        }
    }

    fn io(path: Option<&Path>, source: io::Error) -> Self {
        IngestError::UnreadableSource {
            path: path.map_or_else(|| PathBuf::from("<stream>"), Path::to_path_buf),
            source,
        }
    }

    fn csv(err: csv::Error) -> Self {
        let source = match err.into_kind() {
            csv::ErrorKind::Io(e) => e,
            other => io::Error::new(io::ErrorKind::InvalidData, format!("{other:?}")),
        };
        IngestError::io(None, source)
    }
}

/// Interned string token used for country codes and goods categories.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Code(Arc<str>);

impl Code {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Deref for Code {
    type Target = str;
    fn deref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Code {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Code {
    fn from(s: &str) -> Self {
        Code(Arc::from(s))
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

/// Hands out shared [`Code`]s so that repeated tokens share one allocation.
#[derive(Debug, Default)]
pub(crate) struct Interner(HashSet<Code>);

impl Interner {
    pub(crate) fn intern(&mut self, s: &str) -> Code {
        if let Some(code) = self.0.get(s) {
            return code.clone();
        }
        let code = Code::from(s);
        self.0.insert(code.clone());
        code
    }
}

/// One bilateral trade record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeFlow {
    pub year: i32,
    pub exporter: Code,
    pub importer: Code,
    /// Goods classification code, e.g. a 4-digit SITC heading.
    pub category: Code,
    /// Thousands of current USD, as distributed.
    pub value: f64,
    pub quantity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GdpRecord {
    pub year: i32,
    pub country: Code,
    /// Current USD.
    pub gdp: f64,
}

/// Column layout and row filter for trade files.
#[derive(Debug, Clone)]
pub struct TradeFileFormat {
    pub delimiter: u8,
    /// Rows outside this range are skipped without being counted as bad.
    pub years: Option<RangeInclusive<i32>>,
}

impl Default for TradeFileFormat {
    fn default() -> Self {
        TradeFileFormat {
            delimiter: b',',
            years: None,
        }
    }
}

impl TradeFileFormat {
    pub fn with_years(years: RangeInclusive<i32>) -> Self {
        TradeFileFormat {
            years: Some(years),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows_total: u64,
    pub rows_bad: u64,
    pub bad_samples: Vec<BadRow>,
}

impl ParseReport {
    fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.rows_bad += 1;
        if self.bad_samples.len() < MAX_BAD_SAMPLES {
            self.bad_samples.push(BadRow {
                line,
                reason: reason.into(),
            });
        }
    }
}

/// Parsed payload together with the row-level report.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub data: T,
    pub report: ParseReport,
}

fn csv_reader<R: Read>(source: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .buffer_capacity(1 << 20)
        .from_reader(source)
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IngestError> {
    let header = reader.byte_headers().map_err(IngestError::csv)?;
    let found: Vec<String> = header
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let f = String::from_utf8_lossy(f);
            let f = if i == 0 { f.trim_start_matches('\u{feff}') } else { &f };
            f.trim().to_string()
        })
        .collect();
    if found.iter().map(String::as_str).eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(IngestError::SchemaMismatch {
            expected: expected.join(","),
            found: found.join(","),
        })
    }
}

fn text_field<'a>(record: &'a ByteRecord, index: usize, name: &str) -> Result<&'a str, String> {
    let raw = record
        .get(index)
        .ok_or_else(|| format!("missing field `{name}`"))?;
    std::str::from_utf8(raw)
        .map(str::trim)
        .map_err(|_| format!("field `{name}` is not valid UTF-8"))
}

fn token_field<'a>(record: &'a ByteRecord, index: usize, name: &str) -> Result<&'a str, String> {
    let s = text_field(record, index, name)?;
    if s.is_empty() {
        Err(format!("empty `{name}`"))
    } else {
        Ok(s)
    }
}

fn number_field<T: FromStr>(record: &ByteRecord, index: usize, name: &str) -> Result<T, String> {
    let s = text_field(record, index, name)?;
    s.parse::<T>()
        .map_err(|_| format!("`{name}` is not a number: {s:?}"))
}

fn check_width(record: &ByteRecord, width: usize) -> Result<(), String> {
    if record.len() == width {
        Ok(())
    } else {
        Err(format!("expected {width} fields, found {}", record.len()))
    }
}

fn line_of(record: &ByteRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Streaming reader over a trade CSV.
///
/// Yields each well-formed [`TradeFlow`]; malformed rows go to the report.
/// Iteration only yields `Err` when the underlying source fails.
pub struct TradeFlowReader<R: Read> {
    reader: csv::Reader<R>,
    record: ByteRecord,
    format: TradeFileFormat,
    report: ParseReport,
    interner: Interner,
    failed: bool,
}

impl<R: Read> TradeFlowReader<R> {
    pub fn new(source: R, format: TradeFileFormat) -> Result<Self, IngestError> {
        let mut reader = csv_reader(source, format.delimiter);
        check_header(&mut reader, &TRADE_HEADER)?;
        Ok(TradeFlowReader {
            reader,
            record: ByteRecord::new(),
            format,
            report: ParseReport::default(),
            interner: Interner::default(),
            failed: false,
        })
    }

    pub fn report(&self) -> &ParseReport {
        &self.report
    }

    pub fn into_report(self) -> ParseReport {
        self.report
    }

    /// `Ok(None)` means the row is valid but outside the year filter.
    fn decode(&mut self) -> Result<Option<TradeFlow>, String> {
        let rec = &self.record;
        check_width(rec, TRADE_HEADER.len())?;
        let year: i32 = number_field(rec, 0, "year")?;
        if let Some(years) = &self.format.years {
            if !years.contains(&year) {
                return Ok(None);
            }
        }
        let exporter = token_field(rec, 1, "exporter")?;
        let importer = token_field(rec, 2, "importer")?;
        if exporter == importer {
            return Err(format!("exporter equals importer ({exporter})"));
        }
        let category = token_field(rec, 3, "sitc")?;
        let value: f64 = number_field(rec, 4, "value")?;
        if !value.is_finite() || value < 0.0 {
            return Err(format!("value must be finite and non-negative, got {value}"));
        }
        let quantity = match text_field(rec, 5, "quantity")? {
            "" => None,
            _ => {
                let q: f64 = number_field(rec, 5, "quantity")?;
                if !q.is_finite() || q < 0.0 {
                    return Err(format!("quantity must be finite and non-negative, got {q}"));
                }
                Some(q)
            }
        };
        Ok(Some(TradeFlow {
            year,
            exporter: self.interner.intern(exporter),
            importer: self.interner.intern(importer),
            category: self.interner.intern(category),
            value,
            quantity,
        }))
    }
}

impl<R: Read> Iterator for TradeFlowReader<R> {
    type Item = Result<TradeFlow, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            match self.reader.read_byte_record(&mut self.record) {
                Ok(false) => return None,
                Ok(true) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(IngestError::csv(e)));
                }
            }
            self.report.rows_total += 1;
            match self.decode() {
                Ok(Some(flow)) => return Some(Ok(flow)),
                Ok(None) => {}
                Err(reason) => {
                    let line = line_of(&self.record);
                    self.report.reject(line, reason);
                }
            }
        }
    }
}

pub fn parse_trade_flows<R: Read>(
    source: R,
    format: &TradeFileFormat,
) -> Result<Parsed<Vec<TradeFlow>>, IngestError> {
    let mut reader = TradeFlowReader::new(source, format.clone())?;
    let flows = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok(Parsed {
        data: flows,
        report: reader.into_report(),
    })
}

pub fn open_source(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|e| IngestError::io(Some(path), e))
}

/// Attaches `path` to a stream-level read failure.
pub fn with_path(err: IngestError, path: &Path) -> IngestError {
    match err {
        IngestError::UnreadableSource { source, .. } => IngestError::io(Some(path), source),
        other => other,
    }
}

pub fn read_trade_file(path: &Path, format: &TradeFileFormat) -> Result<Parsed<Vec<TradeFlow>>, IngestError> {
    parse_trade_flows(open_source(path)?, format).map_err(|e| with_path(e, path))
}

/// Streams a trade file straight into a [`DiversityIndex`] without keeping
/// the rows.
pub fn index_trade_file(
    path: &Path,
    format: &TradeFileFormat,
    crosswalk: Crosswalk,
) -> Result<(DiversityIndex, ParseReport), IngestError> {
    let mut reader = TradeFlowReader::new(open_source(path)?, format.clone()).map_err(|e| with_path(e, path))?;
    let mut index = DiversityIndex::new(crosswalk);
    for flow in reader.by_ref() {
        index.insert(&flow.map_err(|e| with_path(e, path))?);
    }
    Ok((index, reader.into_report()))
}

pub fn parse_gdp_table<R: Read>(source: R) -> Result<Parsed<Vec<GdpRecord>>, IngestError> {
    let mut reader = csv_reader(source, b',');
    check_header(&mut reader, &GDP_HEADER)?;
    let mut report = ParseReport::default();
    let mut interner = Interner::default();
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut rec = ByteRecord::new();
    while reader.read_byte_record(&mut rec).map_err(IngestError::csv)? {
        report.rows_total += 1;
        let decoded = (|| {
            check_width(&rec, GDP_HEADER.len())?;
            let year: i32 = number_field(&rec, 0, "year")?;
            let country = token_field(&rec, 1, "country")?;
            let gdp: f64 = number_field(&rec, 2, "gdp")?;
            if !(gdp.is_finite() && gdp > 0.0) {
                return Err(format!("gdp must be finite and positive, got {gdp}"));
            }
            Ok((year, country, gdp))
        })();
        match decoded {
            Ok((year, country, gdp)) => {
                let country = interner.intern(country);
                if !seen.insert((year, country.clone())) {
                    return Err(IngestError::DuplicateKey {
                        year,
                        country: country.to_string(),
                    });
                }
                records.push(GdpRecord { year, country, gdp });
            }
            Err(reason) => report.reject(line_of(&rec), reason),
        }
    }
    Ok(Parsed {
        data: records,
        report,
    })
}

pub fn read_gdp_file(path: &Path) -> Result<Parsed<Vec<GdpRecord>>, IngestError> {
    parse_gdp_table(open_source(path)?).map_err(|e| with_path(e, path))
}

/// Maps trade-data country codes onto GDP-table codes.
///
/// Codes without an entry pass through unchanged.
#[derive(Debug, Clone, Default)]
pub struct Crosswalk {
    map: HashMap<Code, Code>,
}

impl Crosswalk {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: &str, to: &str) -> Result<(), IngestError> {
        if self.map.contains_key(from) {
            return Err(IngestError::DuplicateMapping {
                from: from.to_string(),
            });
        }
        self.map.insert(Code::from(from), Code::from(to));
        Ok(())
    }

    pub fn resolve<'a>(&'a self, code: &'a Code) -> &'a Code {
        self.map.get(code.as_str()).unwrap_or(code)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn parse_crosswalk<R: Read>(source: R) -> Result<Parsed<Crosswalk>, IngestError> {
    let mut reader = csv_reader(source, b',');
    check_header(&mut reader, &CROSSWALK_HEADER)?;
    let mut report = ParseReport::default();
    let mut crosswalk = Crosswalk::new();
    let mut rec = ByteRecord::new();
    while reader.read_byte_record(&mut rec).map_err(IngestError::csv)? {
        report.rows_total += 1;
        let decoded = check_width(&rec, 2).and_then(|_| {
            Ok((token_field(&rec, 0, "from")?, token_field(&rec, 1, "to")?))
        });
        match decoded {
            Ok((from, to)) => crosswalk.insert(from, to)?,
            Err(reason) => report.reject(line_of(&rec), reason),
        }
    }
    Ok(Parsed {
        data: crosswalk,
        report,
    })
}

pub fn read_crosswalk_file(path: &Path) -> Result<Parsed<Crosswalk>, IngestError> {
    parse_crosswalk(open_source(path)?).map_err(|e| with_path(e, path))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum LogBase {
    #[default]
    Ten,
    Natural,
}

impl LogBase {
    pub fn log(self, value: f64) -> f64 {
        match self {
            LogBase::Ten => value.log10(),
            LogBase::Natural => value.ln(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Ten => "10",
            LogBase::Natural => "e",
        }
    }
}

impl FromStr for LogBase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "10" => Ok(LogBase::Ten),
            "e" => Ok(LogBase::Natural),
            other => Err(format!("unknown log base `{other}` (expected `10` or `e`)")),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Joined per-country-per-year point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountryObservation {
    pub country: Code,
    pub year: i32,
    pub log_gdp: f64,
    pub export_goods: usize,
    pub import_goods: usize,
    pub exporter_partners: usize,
    pub importer_partners: usize,
}

/// GDP records indexed by year and country.
#[derive(Debug, Clone, Default)]
pub struct GdpTable {
    by_year: HashMap<i32, HashMap<Code, f64>>,
}

impl GdpTable {
    /// Records are assumed unique per (year, country); later rows win.
    pub fn from_records(records: &[GdpRecord]) -> Self {
        let mut by_year: HashMap<i32, HashMap<Code, f64>> = HashMap::new();
        for r in records {
            by_year.entry(r.year).or_default().insert(r.country.clone(), r.gdp);
        }
        GdpTable { by_year }
    }

    pub fn get(&self, year: i32, country: &str) -> Option<f64> {
        self.by_year.get(&year)?.get(country).copied()
    }

    pub fn countries_in(&self, year: i32) -> usize {
        self.by_year.get(&year).map_or(0, HashMap::len)
    }
}

/// All observations for one year, sorted by country code.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub year: i32,
    pub observations: Vec<CountryObservation>,
    /// Countries with trade but no GDP record, sorted.
    pub excluded: Vec<Code>,
    /// Distinct positive-value categories traded anywhere that year.
    pub total_categories: usize,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Joins one year of diversity profiles with GDP.
pub fn join_panel(
    index: &DiversityIndex,
    gdp: &GdpTable,
    year: i32,
    log_base: LogBase,
) -> Result<Panel, IngestError> {
    let mut observations = Vec::new();
    let mut excluded = Vec::new();
    for p in index.profiles(year) {
        match gdp.get(year, &p.country) {
            Some(value) => observations.push(CountryObservation {
                country: p.country,
                year,
                log_gdp: log_base.log(value),
                export_goods: p.export_goods,
                import_goods: p.import_goods,
                exporter_partners: p.exporter_partners,
                importer_partners: p.importer_partners,
            }),
            None => excluded.push(p.country),
        }
    }
    if observations.is_empty() {
        return Err(IngestError::EmptyPanel { year });
    }
    Ok(Panel {
        year,
        observations,
        excluded,
        total_categories: index.total_categories(year),
    })
}

/// Builds the observation panel for `year` from in-memory flows.
///
/// A country enters the panel only when it has at least one positive-value
/// flow that year and a GDP record for the same year.
pub fn build_panel(
    trades: &[TradeFlow],
    gdp: &[GdpRecord],
    year: i32,
    log_base: LogBase,
    crosswalk: Option<&Crosswalk>,
) -> Result<Panel, IngestError> {
    let mut index = DiversityIndex::new(crosswalk.cloned().unwrap_or_default());
    index.extend(trades.iter().filter(|f| f.year == year));
    let table = GdpTable::from_records(gdp);
    join_panel(&index, &table, year, log_base)
}

//! `tradecurve` command-line frontend.
//!
//! Every command computes all of its outputs in memory first and then
//! writes each file to a temporary name in the output directory before
//! renaming it into place, so a failed or interrupted run never leaves a
//! partial file behind.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::diversity::{self, DiversityIndex};
use crate::dynamics::{self, DynamicsError, SeriesRecord, Variable};
use crate::ingest::{
    self, Code, Crosswalk, GdpTable, IngestError, LogBase, Panel, ParseReport, TradeFileFormat,
};
use crate::sigmoid_fit::{self, FitOptions, LogisticParams};
use crate::stages::{self, PerStage};

pub const THREADS_ENV: &str = "TRADECURVE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "tradecurve", version, about = "S-curves of export diversity against log GDP")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one year's logistic curve.
    Fit(FitArgs),
    /// Classify one year's countries into the three stages.
    Stages(FitArgs),
    /// Fit every year of a range.
    Series(SeriesArgs),
    /// Power laws between pairs of diversity variables.
    Powerlaw(PowerlawArgs),
    /// Per-country diversity profiles, including export entropy.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Trade CSV: year,exporter,importer,sitc,value,quantity
    #[arg(long)]
    pub trades: PathBuf,
    /// GDP CSV: year,country,gdp
    #[arg(long)]
    pub gdp: PathBuf,
    /// Code crosswalk CSV: from,to
    #[arg(long)]
    pub crosswalk: Option<PathBuf>,
    #[arg(long = "log-base", default_value = "10", value_parser = ["10", "e"])]
    pub log_base: String,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl Inputs {
    fn log_base(&self) -> LogBase {
        self.log_base.parse().expect("validated by clap")
    }
}

#[derive(Debug, Args)]
pub struct FitFlags {
    #[arg(long = "max-iter", default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Manual starting point as A,k,XM.
    #[arg(long, value_parser = parse_init)]
    pub init: Option<LogisticParams>,
}

impl FitFlags {
    fn options(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            init: self.init,
        }
    }
}

#[derive(Debug, Args)]
pub struct NormalizeFlags {
    /// Min-max normalize the response to [0, 1] before fitting.
    #[arg(long, conflicts_with = "raw")]
    pub normalize: bool,
    /// Fit raw counts.
    #[arg(long)]
    pub raw: bool,
}

impl NormalizeFlags {
    fn resolve(&self, default: bool) -> bool {
        if self.normalize {
            true
        } else if self.raw {
            false
        } else {
            default
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub year: i32,
    #[arg(long, default_value = "export_goods", value_parser = Variable::from_str)]
    pub variable: Variable,
    #[command(flatten)]
    pub norm: NormalizeFlags,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Inclusive range A:B, or a single year.
    #[arg(long, value_parser = parse_years)]
    pub years: YearRange,
    #[arg(long, default_value = "export_goods", value_parser = Variable::from_str)]
    pub variable: Variable,
    #[command(flatten)]
    pub norm: NormalizeFlags,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args)]
pub struct PowerlawArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub year: i32,
    /// Restrict to one pair, written X:Y.
    #[arg(long, value_parser = parse_pair)]
    pub pair: Option<(Variable, Variable)>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub year: i32,
    /// Restrict to one country code.
    #[arg(long)]
    pub country: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl YearRange {
    pub fn range(self) -> RangeInclusive<i32> {
        self.first..=self.last
    }
}

fn parse_years(s: &str) -> Result<YearRange, String> {
    let (a, b) = s.split_once(':').unwrap_or((s, s));
    let first: i32 = a.trim().parse().map_err(|_| format!("bad start year `{a}`"))?;
    let last: i32 = b.trim().parse().map_err(|_| format!("bad end year `{b}`"))?;
    if first > last {
        return Err(format!("empty year range {first}:{last}"));
    }
    Ok(YearRange { first, last })
}

fn parse_init(s: &str) -> Result<LogisticParams, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number `{p}`")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, k, xm] if a > 0.0 && k > 0.0 && xm.is_finite() => Ok(LogisticParams::new(a, k, xm)),
        [_, _, _] => Err("A and k must be positive".into()),
        _ => Err(format!("expected A,k,XM, got `{s}`")),
    }
}

fn parse_pair(s: &str) -> Result<(Variable, Variable), String> {
    let (x, y) = s.split_once(':').ok_or_else(|| format!("expected X:Y, got `{s}`"))?;
    Ok((x.parse()?, y.parse()?))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Fit(#[from] sigmoid_fit::FitError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Ingest(e) => e.kind(),
            CliError::Dynamics(e) => e.kind(),
            CliError::Fit(e) => e.kind(),
            CliError::Output { .. } => "OutputError",
            CliError::Config(_) => "InvalidConfig",
        }
    }

    /// 2 for configuration problems, 1 for data and I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

/// Files produced by a command, written together by [`Outputs::commit`].
#[derive(Debug, Default)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable output");
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
    }

    fn text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.files.iter().map(|(n, _)| self.dir.join(n)).collect()
    }

    fn check_distinct(&self, inputs: &[&Path]) -> Result<(), CliError> {
        let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
        let inputs: Vec<PathBuf> = inputs.iter().map(|p| canon(p)).collect();
        for out in self.paths() {
            if inputs.contains(&canon(&out)) {
                return Err(CliError::Config(format!(
                    "output {} would overwrite an input",
                    out.display()
                )));
            }
        }
        Ok(())
    }

    fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let dir = &self.dir;
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.clone(),
            source,
        })?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            write_atomic(&path, &bytes).map_err(|source| CliError::Output {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::Builder::new().prefix(".tradecurve-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct LoadReport {
    trades: ParseReport,
    gdp: ParseReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    crosswalk: Option<ParseReport>,
    /// Countries with trade flows but no GDP record, per year.
    excluded_countries: BTreeMap<i32, Vec<Code>>,
}

struct Loaded {
    index: DiversityIndex,
    gdp: GdpTable,
    report: LoadReport,
}

fn load_crosswalk(inputs: &Inputs) -> Result<(Crosswalk, Option<ParseReport>), CliError> {
    match &inputs.crosswalk {
        Some(path) => {
            let parsed = ingest::read_crosswalk_file(path)?;
            Ok((parsed.data, Some(parsed.report)))
        }
        None => Ok((Crosswalk::new(), None)),
    }
}

fn load(inputs: &Inputs, years: RangeInclusive<i32>) -> Result<Loaded, CliError> {
    let (crosswalk, crosswalk_report) = load_crosswalk(inputs)?;
    let gdp = ingest::read_gdp_file(&inputs.gdp)?;
    let (index, trades) =
        ingest::index_trade_file(&inputs.trades, &TradeFileFormat::with_years(years), crosswalk)?;
    Ok(Loaded {
        index,
        gdp: GdpTable::from_records(&gdp.data),
        report: LoadReport {
            trades,
            gdp: gdp.report,
            crosswalk: crosswalk_report,
            excluded_countries: BTreeMap::new(),
        },
    })
}

impl Loaded {
    fn panel(&mut self, year: i32, log_base: LogBase) -> Result<Panel, CliError> {
        let panel = ingest::join_panel(&self.index, &self.gdp, year, log_base)?;
        self.report.excluded_countries.insert(year, panel.excluded.clone());
        Ok(panel)
    }
}

fn input_paths(inputs: &Inputs) -> Vec<&Path> {
    let mut v = vec![inputs.trades.as_path(), inputs.gdp.as_path()];
    if let Some(c) = &inputs.crosswalk {
        v.push(c.as_path());
    }
    v
}

/// What a successful command reports on stdout.
#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
    pub written: Vec<PathBuf>,
}

fn finish(inputs: &Inputs, outputs: Outputs, summary: String) -> Result<Outcome, CliError> {
    outputs.check_distinct(&input_paths(inputs))?;
    let written = outputs.commit()?;
    Ok(Outcome { summary, written })
}

/// Full-precision number cell for TSV/CSV output.
fn num(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Serialize)]
struct FitReport {
    #[serde(flatten)]
    record: SeriesRecord,
    log_base: &'static str,
    n_points: usize,
    iterations: usize,
    converged: bool,
    stage_counts: PerStage<usize>,
    mean_abs_residual: PerStage<Option<f64>>,
}

fn curve_rows(out: &mut String, year: Option<i32>, panel: &Panel, result: &dynamics::YearlyResult) {
    let scale = |y: f64| {
        if result.normalized {
            (y - result.y_min) / (result.y_max - result.y_min)
        } else {
            y
        }
    };
    for o in &panel.observations {
        let y = scale(result.variable.value(o));
        if let Some(year) = year {
            let _ = write!(out, "{year}\t");
        }
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            o.country,
            num(o.log_gdp),
            num(y),
            num(result.fit.params.eval(o.log_gdp))
        );
    }
}

struct SingleYearFit {
    loaded: Loaded,
    panel: Panel,
    result: dynamics::YearlyResult,
}

fn fit_single(args: &FitArgs, default_normalize: bool) -> Result<SingleYearFit, CliError> {
    let mut loaded = load(&args.inputs, args.year..=args.year)?;
    let panel = loaded.panel(args.year, args.inputs.log_base())?;
    let normalize = args.norm.resolve(default_normalize);
    let result = dynamics::fit_panel(&panel, args.variable, normalize, &args.fit.options())?;
    Ok(SingleYearFit { loaded, panel, result })
}

pub fn cmd_fit(args: &FitArgs) -> Result<Outcome, CliError> {
    let SingleYearFit { loaded, panel, result } = fit_single(args, false)?;
    let mut points = dynamics::panel_points(&panel, args.variable);
    if result.normalized {
        let mm = diversity::MinMax { min: result.y_min, max: result.y_max };
        points.iter_mut().for_each(|p| p.1 = mm.apply(p.1));
    }
    let diag = sigmoid_fit::fit_diagnostics(&result.fit, &points)?;
    let report = FitReport {
        record: result.record(),
        log_base: args.inputs.log_base().as_str(),
        n_points: result.fit.n_points,
        iterations: result.fit.iterations,
        converged: result.fit.converged,
        stage_counts: diag.counts,
        mean_abs_residual: diag.mean_abs_residual,
    };
    let mut curve = String::from("country\tx\ty_observed\ty_fitted\n");
    curve_rows(&mut curve, None, &panel, &result);

    let mut outputs = Outputs::new(&args.inputs.out);
    outputs.json("fit.json", &report);
    outputs.text("fit_curve.tsv", curve);
    outputs.json("parse_report.json", &loaded.report);
    let p = &result.fit.params;
    let summary = format!(
        "{} {}: A={} k={} XM={} R2={} n={}",
        args.year, args.variable, p.asymptote, p.rate, p.midpoint, result.fit.r_squared, result.fit.n_points
    );
    finish(&args.inputs, outputs, summary)
}

#[derive(Debug, Serialize)]
struct StageCountsReport {
    year: i32,
    variable: Variable,
    n_initial: usize,
    n_acceleration: usize,
    n_final: usize,
    total: usize,
}

pub fn cmd_stages(args: &FitArgs) -> Result<Outcome, CliError> {
    let SingleYearFit { loaded, panel, result } = fit_single(args, false)?;
    let summary = stages::assign(&panel.observations, &result.critical_points);
    let mut csv = String::from("country,year,x,stage\n");
    for a in &summary.assignments {
        let _ = writeln!(csv, "{},{},{},{}", a.country, a.year, num(a.x), a.stage);
    }
    let c = summary.counts;
    let counts = StageCountsReport {
        year: args.year,
        variable: args.variable,
        n_initial: c.initial,
        n_acceleration: c.acceleration,
        n_final: c.final_,
        total: c.total(),
    };
    let mut outputs = Outputs::new(&args.inputs.out);
    outputs.text("stages.csv", csv);
    outputs.json("stage_counts.json", &counts);
    outputs.json("parse_report.json", &loaded.report);
    finish(
        &args.inputs,
        outputs,
        format!("({},{},{})", c.initial, c.acceleration, c.final_),
    )
}

pub fn cmd_series(args: &SeriesArgs) -> Result<Outcome, CliError> {
    let years = args.years.range();
    let log_base = args.inputs.log_base();
    let mut loaded = load(&args.inputs, years.clone())?;
    let normalize = args.norm.resolve(true);
    let options = args.fit.options();

    let panels: HashMap<i32, Result<Panel, IngestError>> = years
        .clone()
        .map(|y| (y, ingest::join_panel(&loaded.index, &loaded.gdp, y, log_base)))
        .collect();
    for (year, panel) in &panels {
        if let Ok(p) = panel {
            loaded.report.excluded_countries.insert(*year, p.excluded.clone());
        }
    }
    let series = dynamics::run_series_with(years, args.variable, normalize, &options, |y| match &panels[&y] {
        Ok(p) => Ok(p.clone()),
        Err(_) => Err(IngestError::EmptyPanel { year: y }),
    })?;

    let records = series.records();
    let mut r2 = String::from("year\tr2\n");
    let mut params = String::from("year\tA\tk\tXM\n");
    let mut points = String::from("year\tXL\tXM\tXR\tYL\tYM\tYR\n");
    let mut props = String::from("year\tinitial\tacceleration\tfinal\n");
    for r in &records {
        let _ = writeln!(r2, "{}\t{}", r.year, num(r.r2));
        let _ = writeln!(params, "{}\t{}\t{}\t{}", r.year, num(r.a), num(r.k), num(r.xm));
        let _ = writeln!(
            points,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.year,
            num(r.xl),
            num(r.xm),
            num(r.xr),
            num(r.yl),
            num(r.ym),
            num(r.yr)
        );
        let [pi, pa, pf] = r.proportions;
        let _ = writeln!(props, "{}\t{}\t{}\t{}", r.year, num(pi), num(pa), num(pf));
    }
    let mut curves = String::from("year\tcountry\tx\ty_observed\ty_fitted\n");
    for result in &series.results {
        if let Ok(panel) = &panels[&result.year] {
            curve_rows(&mut curves, Some(result.year), panel, result);
        }
    }

    let mut outputs = Outputs::new(&args.inputs.out);
    outputs.json("series.json", &records);
    outputs.json("series_failures.json", &series.failures);
    outputs.text("fig2_curves.tsv", curves);
    outputs.text("fig2_r2.tsv", r2);
    outputs.text("fig3_params.tsv", params);
    outputs.text("fig4_critical_points.tsv", points);
    outputs.text("fig5_proportions.tsv", props);
    outputs.json("parse_report.json", &loaded.report);
    let summary = format!(
        "{} years fitted, {} skipped",
        series.results.len(),
        series.failures.len()
    );
    finish(&args.inputs, outputs, summary)
}

#[derive(Debug, Serialize)]
struct PowerLawRecord {
    x: Variable,
    y: Variable,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    excluded: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaling: Option<dynamics::Scaling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

impl From<&dynamics::PowerLawEntry> for PowerLawRecord {
    fn from(e: &dynamics::PowerLawEntry) -> Self {
        let mut rec = PowerLawRecord {
            x: e.x,
            y: e.y,
            c: None,
            gamma: None,
            r2: None,
            n_points: None,
            excluded: None,
            scaling: None,
            error: None,
            message: None,
        };
        match &e.result {
            Ok(fit) => {
                rec.c = Some(fit.c);
                rec.gamma = Some(fit.gamma);
                rec.r2 = Some(fit.r_squared);
                rec.n_points = Some(fit.n_points);
                rec.excluded = Some(fit.excluded);
                rec.scaling = Some(fit.scaling());
            }
            Err(err) => {
                rec.error = Some(err.kind());
                rec.message = Some(err.to_string());
            }
        }
        rec
    }
}

pub fn cmd_powerlaw(args: &PowerlawArgs) -> Result<Outcome, CliError> {
    let mut loaded = load(&args.inputs, args.year..=args.year)?;
    let panel = loaded.panel(args.year, args.inputs.log_base())?;
    let entries = match args.pair {
        Some((x, y)) => vec![dynamics::fit_pair(&panel.observations, x, y)],
        None => dynamics::power_law_matrix(&panel.observations),
    };
    if entries.iter().all(|e| e.result.is_err()) {
        let first = entries.into_iter().next().expect("at least one pair");
        return Err(first.result.unwrap_err().into());
    }
    let records: Vec<PowerLawRecord> = entries.iter().map(PowerLawRecord::from).collect();
    let ok = entries.iter().filter(|e| e.result.is_ok()).count();
    let mut outputs = Outputs::new(&args.inputs.out);
    outputs.json("powerlaw.json", &records);
    outputs.json("parse_report.json", &loaded.report);
    finish(
        &args.inputs,
        outputs,
        format!("{ok} of {} pairs fitted", entries.len()),
    )
}

pub fn cmd_profile(args: &ProfileArgs) -> Result<Outcome, CliError> {
    let (crosswalk, crosswalk_report) = load_crosswalk(&args.inputs)?;
    let format = TradeFileFormat::with_years(args.year..=args.year);
    let parsed = ingest::read_trade_file(&args.inputs.trades, &format)?;
    let gdp = ingest::read_gdp_file(&args.inputs.gdp)?;
    let table = GdpTable::from_records(&gdp.data);

    let mut index = DiversityIndex::new(crosswalk.clone());
    index.extend(parsed.data.iter());
    let mut by_exporter: HashMap<Code, Vec<ingest::TradeFlow>> = HashMap::new();
    for flow in &parsed.data {
        let mut flow = flow.clone();
        flow.exporter = crosswalk.resolve(&flow.exporter).clone();
        flow.importer = crosswalk.resolve(&flow.importer).clone();
        if flow.exporter != flow.importer {
            by_exporter.entry(flow.exporter.clone()).or_default().push(flow);
        }
    }

    let mut csv = String::from(
        "country,year,export_goods,import_goods,exporters,importers,shannon_export,log_gdp\n",
    );
    let mut rows = 0usize;
    for p in index.profiles(args.year) {
        if args.country.as_deref().is_some_and(|c| c != p.country.as_str()) {
            continue;
        }
        let entropy = by_exporter
            .get(&p.country)
            .and_then(|flows| diversity::shannon_entropy(flows, &p.country, args.year).ok());
        let log_gdp = table.get(args.year, &p.country).map(|g| args.inputs.log_base().log(g));
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            p.country,
            p.year,
            p.export_goods,
            p.import_goods,
            p.exporter_partners,
            p.importer_partners,
            opt(entropy),
            opt(log_gdp)
        );
        rows += 1;
    }
    if rows == 0 {
        return Err(IngestError::EmptyPanel { year: args.year }.into());
    }
    let report = LoadReport {
        trades: parsed.report,
        gdp: gdp.report,
        crosswalk: crosswalk_report,
        excluded_countries: BTreeMap::new(),
    };
    let mut outputs = Outputs::new(&args.inputs.out);
    outputs.text("profiles.csv", csv);
    outputs.json("parse_report.json", &report);
    finish(&args.inputs, outputs, format!("{rows} profiles"))
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Stages(a) => cmd_stages(a),
        Command::Series(a) => cmd_series(a),
        Command::Powerlaw(a) => cmd_powerlaw(a),
        Command::Profile(a) => cmd_profile(a),
    }
}

/// Reads the thread cap from the environment, if set and valid.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = thread_cap().and_then(|cap| {
        if let Some(n) = cap {
            // Fails only if a pool already exists, in which case it is kept.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        execute(&cli)
    });
    match outcome {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

//! Panel loading, reference-date sweeps and report serialization.
//!
//! # Input format
//!
//! UTF-8 CSV. The header row is `date,<ticker1>,<ticker2>,...`; each following
//! row holds an ISO-8601 date (`YYYY-MM-DD`) and one decimal close price per
//! ticker. An empty cell is a missing price. Rows may appear in any order.
//!
//! # Reports
//!
//! JSON reports are a single object with a `meta` object and a `series`
//! array holding one block per reference date. CSV reports are a directory
//! with `meta.csv`, `dispersion.csv`, `tail.csv` and `events.csv`. Numbers are
//! written in shortest round-trip form, so reading a report back reproduces
//! every value bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

use crate::panel::{
    dispersion_series, normalize_panel, DispersionSeries, MissingDataPolicy, PanelError,
    PricePanel, SurvivalCurve,
};
use crate::sim::{RowSource, SweepRow};
use crate::tail::{detect_extremes, tail_series, ExtremeKind, KPolicy, TailSeries};
use crate::Date;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: u64,
        column: usize,
        reason: String,
    },
    #[error("line {line}: duplicate date {date} (first seen on line {first_line})")]
    DuplicateDate {
        date: Date,
        line: u64,
        first_line: u64,
    },
    #[error("line {line}, column {column}: non-positive price {value}")]
    NonPositivePrice {
        line: u64,
        column: usize,
        value: f64,
    },
    #[error("no trading day in {0}")]
    NoDateInYear(i32),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl IoError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(line: u64, column: usize, reason: impl Into<String>) -> Self {
        Self::Parse {
            line,
            column,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvFormat {
    pub delimiter: u8,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

pub fn load_price_panel(path: &Path, format: CsvFormat) -> Result<PricePanel, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    read_price_panel(io::BufReader::new(file), format)
}

pub fn read_price_panel<R: Read>(reader: R, format: CsvFormat) -> Result<PricePanel, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(format.delimiter)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec?,
        None => return Err(IoError::parse(1, 1, "missing header row")),
    };
    let first = header.get(0).unwrap_or("").trim_start_matches('\u{feff}');
    if first != "date" {
        return Err(IoError::parse(
            1,
            1,
            format!("first header field must be `date`, found `{first}`"),
        ));
    }
    let mut tickers = Vec::with_capacity(header.len().saturating_sub(1));
    for (i, t) in header.iter().enumerate().skip(1) {
        if t.is_empty() {
            return Err(IoError::parse(1, i + 1, "empty ticker name"));
        }
        if tickers.iter().any(|seen: &String| seen == t) {
            return Err(IoError::parse(1, i + 1, format!("duplicate ticker `{t}`")));
        }
        tickers.push(t.to_owned());
    }

    let mut rows: Vec<(Date, u64, Vec<Option<f64>>)> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != tickers.len() + 1 {
            return Err(IoError::parse(
                line,
                rec.len().min(tickers.len() + 1),
                format!("expected {} fields, found {}", tickers.len() + 1, rec.len()),
            ));
        }
        let date = parse_date(&rec[0]).ok_or_else(|| {
            IoError::parse(
                line,
                1,
                format!("invalid date `{}` (expected YYYY-MM-DD)", &rec[0]),
            )
        })?;
        let mut prices = Vec::with_capacity(tickers.len());
        for (i, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() {
                prices.push(None);
                continue;
            }
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| IoError::parse(line, i + 1, format!("invalid price `{cell}`")))?;
            if value <= 0.0 {
                return Err(IoError::NonPositivePrice {
                    line,
                    column: i + 1,
                    value,
                });
            }
            prices.push(Some(value));
        }
        rows.push((date, line, prices));
    }

    rows.sort_by_key(|r| r.0);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            let (first_line, line) = (pair[0].1.min(pair[1].1), pair[0].1.max(pair[1].1));
            return Err(IoError::DuplicateDate {
                date: pair[0].0,
                line,
                first_line,
            });
        }
    }
    let (dates, prices): (Vec<Date>, Vec<Vec<Option<f64>>>) =
        rows.into_iter().map(|(d, _, p)| (d, p)).unzip();
    Ok(PricePanel::new(dates, tickers, prices)?)
}

/// Strict `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Option<Date> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    Date::parse_from_str(s, DATE_FORMAT).ok()
}

/// Writes a panel in the input format.
pub fn write_price_panel(panel: &PricePanel, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str("date");
    for t in panel.tickers() {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for (date, row) in panel.dates().iter().zip(panel.prices()) {
        out.push_str(&date.format(DATE_FORMAT).to_string());
        for p in row {
            out.push(',');
            if let Some(p) = p {
                out.push_str(&p.to_string());
            }
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// One reference date of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub t_ref: Date,
    pub dispersion: DispersionSeries,
    pub tail: TailSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    pub n_tickers: usize,
    pub n_dates: usize,
    pub first_date: Option<Date>,
    pub last_date: Option<Date>,
}

impl Universe {
    pub fn of(panel: &PricePanel) -> Self {
        Self {
            n_tickers: panel.n_tickers(),
            n_dates: panel.n_dates(),
            first_date: panel.dates().first().copied(),
            last_date: panel.dates().last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub universe: Universe,
    pub policy: MissingDataPolicy,
    pub k_policy: KPolicy,
}

/// Normalizes the panel at every reference date and computes the dispersion
/// and Hill series for each. Reference dates are sorted and deduplicated.
pub fn tref_sweep(
    panel: &PricePanel,
    t_refs: &[Date],
    policy: MissingDataPolicy,
    k_policy: KPolicy,
) -> Result<SweepResult, IoError> {
    let mut t_refs = t_refs.to_vec();
    t_refs.sort();
    t_refs.dedup();
    if let Some(&missing) = t_refs.iter().find(|d| panel.date_index(**d).is_none()) {
        return Err(PanelError::RefDateAbsent(missing).into());
    }
    let entries = t_refs
        .par_iter()
        .map(|&t_ref| {
            let perf = normalize_panel(panel, t_ref, policy)?;
            Ok(SweepEntry {
                t_ref,
                dispersion: dispersion_series(&perf),
                tail: tail_series(&perf, k_policy),
            })
        })
        .collect::<Result<Vec<_>, PanelError>>()?;
    Ok(SweepResult {
        entries,
        universe: Universe::of(panel),
        policy,
        k_policy,
    })
}

/// First trading day of each year, as found in the panel.
pub fn first_trading_days(panel: &PricePanel, years: &[i32]) -> Result<Vec<Date>, IoError> {
    use chrono::Datelike;
    years
        .iter()
        .map(|&y| {
            panel
                .dates()
                .iter()
                .copied()
                .find(|d| d.year() == y)
                .ok_or(IoError::NoDateInYear(y))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    Csv,
    #[default]
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    pub missing_policy: Option<MissingDataPolicy>,
    pub k_policy: Option<String>,
    pub window: Option<usize>,
    pub seed: Option<u64>,
}

impl ReportMeta {
    pub fn new() -> Self {
        Self {
            tool: "crossdisp".to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            missing_policy: None,
            k_policy: None,
            window: None,
            seed: None,
        }
    }
}

impl Default for ReportMeta {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub date: Date,
    pub count: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub date: Date,
    pub n: usize,
    pub k: Option<usize>,
    pub alpha_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub date: Date,
    /// `alpha` or `variance`.
    pub series: String,
    pub kind: ExtremeKind,
    pub value: f64,
    pub window: usize,
}

/// Results for one reference date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBlock {
    pub t_ref: Date,
    pub dispersion: Vec<DispersionRow>,
    pub tail: Vec<TailRow>,
    pub events: Vec<EventRow>,
}

impl SeriesBlock {
    /// Assembles a block; with `window` set, local extremes of the Hill and
    /// variance series are added when the series is long enough.
    pub fn build(
        t_ref: Date,
        dispersion: &DispersionSeries,
        tail: &TailSeries,
        window: Option<usize>,
    ) -> Self {
        let disp_rows = (0..dispersion.len())
            .map(|i| DispersionRow {
                date: dispersion.dates[i],
                count: dispersion.count[i],
                mean: dispersion.mean[i],
                variance: dispersion.variance[i],
            })
            .collect();
        let tail_rows = tail
            .dates
            .iter()
            .zip(&tail.estimates)
            .enumerate()
            .map(|(i, (&date, est))| TailRow {
                date,
                n: est.map_or_else(|| dispersion.count.get(i).copied().unwrap_or(0), |e| e.n),
                k: est.map(|e| e.k),
                alpha_hat: est.map(|e| e.alpha_hat),
            })
            .collect();

        let mut events = Vec::new();
        if let Some(w) = window {
            for (name, dates, values) in [
                ("alpha", &tail.dates, tail.alpha_values()),
                ("variance", &dispersion.dates, dispersion.variance.clone()),
            ] {
                // Too-short series simply yield no events.
                if let Ok(found) = detect_extremes(dates, &values, w) {
                    events.extend(found.into_iter().map(|e| EventRow {
                        date: e.date,
                        series: name.to_owned(),
                        kind: e.kind,
                        value: e.value,
                        window: e.window,
                    }));
                }
            }
        }
        Self {
            t_ref,
            dispersion: disp_rows,
            tail: tail_rows,
            events,
        }
    }

    pub fn dispersion_series(&self) -> DispersionSeries {
        DispersionSeries {
            dates: self.dispersion.iter().map(|r| r.date).collect(),
            mean: self.dispersion.iter().map(|r| r.mean).collect(),
            variance: self.dispersion.iter().map(|r| r.variance).collect(),
            count: self.dispersion.iter().map(|r| r.count).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: ReportMeta,
    pub series: Vec<SeriesBlock>,
}

impl Report {
    pub fn from_sweep(sweep: &SweepResult, window: Option<usize>) -> Self {
        let mut meta = ReportMeta::new();
        meta.missing_policy = Some(sweep.policy);
        meta.k_policy = Some(sweep.k_policy.to_string());
        meta.window = window;
        Self {
            meta,
            series: sweep
                .entries
                .iter()
                .map(|e| SeriesBlock::build(e.t_ref, &e.dispersion, &e.tail, window))
                .collect(),
        }
    }
}

const DISPERSION_HEADER: &str = "t_ref,date,count,mean,variance";
const TAIL_HEADER: &str = "t_ref,date,n,k,alpha_hat";
const EVENTS_HEADER: &str = "t_ref,date,series,kind,value,window";
const META_HEADER: &str = "key,value";

/// Writes `report` to `path`: a JSON file, or a directory of CSV files.
pub fn write_report(report: &Report, path: &Path, format: ReportFormat) -> Result<(), IoError> {
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            write_atomic(path, text.as_bytes())
        }
        ReportFormat::Csv => {
            fs::create_dir_all(path).map_err(|e| IoError::io(path, e))?;
            let files = render_csv(report);
            for (name, body) in files {
                write_atomic(&path.join(name), body.as_bytes())?;
            }
            Ok(())
        }
    }
}

fn render_csv(report: &Report) -> [(&'static str, String); 4] {
    let mut meta = format!("{META_HEADER}\n");
    let m = &report.meta;
    let mut kv = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            meta.push_str(&format!("{k},{v}\n"));
        }
    };
    kv("tool", Some(m.tool.clone()));
    kv("version", Some(m.version.clone()));
    kv("missing_policy", m.missing_policy.map(|p| p.to_string()));
    kv("k_policy", m.k_policy.as_ref().map(|p| format!("\"{p}\"")));
    kv("window", m.window.map(|w| w.to_string()));
    kv("seed", m.seed.map(|s| s.to_string()));

    let mut disp = format!("{DISPERSION_HEADER}\n");
    let mut tail = format!("{TAIL_HEADER}\n");
    let mut events = format!("{EVENTS_HEADER}\n");
    for block in &report.series {
        let t_ref = block.t_ref;
        for r in &block.dispersion {
            disp.push_str(&format!(
                "{t_ref},{},{},{},{}\n",
                r.date,
                r.count,
                opt(r.mean),
                opt(r.variance)
            ));
        }
        for r in &block.tail {
            tail.push_str(&format!(
                "{t_ref},{},{},{},{}\n",
                r.date,
                r.n,
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                opt(r.alpha_hat)
            ));
        }
        for e in &block.events {
            events.push_str(&format!(
                "{t_ref},{},{},{},{},{}\n",
                e.date, e.series, e.kind, e.value, e.window
            ));
        }
    }
    [
        ("meta.csv", meta),
        ("dispersion.csv", disp),
        ("tail.csv", tail),
        ("events.csv", events),
    ]
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn read_report_json(path: &Path) -> Result<Report, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads the series of a CSV report directory. Blocks come back in `t_ref` order.
pub fn read_report_csv(dir: &Path) -> Result<Vec<SeriesBlock>, IoError> {
    let mut blocks: BTreeMap<Date, SeriesBlock> = BTreeMap::new();

    let read = |name: &str, header: &str| -> Result<Vec<(u64, csv::StringRecord)>, IoError> {
        let path = dir.join(name);
        let file = fs::File::open(&path).map_err(|e| IoError::io(&path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(file);
        let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        if found != header {
            return Err(IoError::parse(
                1,
                1,
                format!("{name}: unexpected header `{found}`"),
            ));
        }
        rdr.records()
            .map(|r| {
                let r = r?;
                Ok((r.position().map_or(0, |p| p.line()), r))
            })
            .collect()
    };

    let date = |line: u64, col: usize, s: &str| {
        parse_date(s).ok_or_else(|| IoError::parse(line, col, format!("invalid date `{s}`")))
    };
    let float = |line: u64, col: usize, s: &str| -> Result<Option<f64>, IoError> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| IoError::parse(line, col, format!("invalid number `{s}`")))
    };
    let int = |line: u64, col: usize, s: &str| -> Result<usize, IoError> {
        s.parse()
            .map_err(|_| IoError::parse(line, col, format!("invalid integer `{s}`")))
    };

    let disp = read("dispersion.csv", DISPERSION_HEADER)?;
    let tail = read("tail.csv", TAIL_HEADER)?;
    let events = read("events.csv", EVENTS_HEADER)?;

    let mut disp_rows = Vec::new();
    for (line, r) in disp {
        disp_rows.push((
            date(line, 1, &r[0])?,
            DispersionRow {
                date: date(line, 2, &r[1])?,
                count: int(line, 3, &r[2])?,
                mean: float(line, 4, &r[3])?,
                variance: float(line, 5, &r[4])?,
            },
        ));
    }
    let mut tail_rows = Vec::new();
    for (line, r) in tail {
        tail_rows.push((
            date(line, 1, &r[0])?,
            TailRow {
                date: date(line, 2, &r[1])?,
                n: int(line, 3, &r[2])?,
                k: if r[3].is_empty() {
                    None
                } else {
                    Some(int(line, 4, &r[3])?)
                },
                alpha_hat: float(line, 5, &r[4])?,
            },
        ));
    }
    let mut event_rows = Vec::new();
    for (line, r) in events {
        let kind = match &r[3] {
            "local-minimum" => ExtremeKind::LocalMinimum,
            "local-maximum" => ExtremeKind::LocalMaximum,
            other => return Err(IoError::parse(line, 4, format!("invalid kind `{other}`"))),
        };
        event_rows.push((
            date(line, 1, &r[0])?,
            EventRow {
                date: date(line, 2, &r[1])?,
                series: r[2].to_owned(),
                kind,
                value: float(line, 5, &r[4])?
                    .ok_or_else(|| IoError::parse(line, 5, "missing value"))?,
                window: int(line, 6, &r[5])?,
            },
        ));
    }

    let entry = |blocks: &mut BTreeMap<Date, SeriesBlock>, t_ref: Date| {
        blocks.entry(t_ref).or_insert_with(|| SeriesBlock {
            t_ref,
            dispersion: Vec::new(),
            tail: Vec::new(),
            events: Vec::new(),
        });
    };
    for (t, r) in disp_rows {
        entry(&mut blocks, t);
        blocks.get_mut(&t).expect("inserted").dispersion.push(r);
    }
    for (t, r) in tail_rows {
        entry(&mut blocks, t);
        blocks.get_mut(&t).expect("inserted").tail.push(r);
    }
    for (t, r) in event_rows {
        entry(&mut blocks, t);
        blocks.get_mut(&t).expect("inserted").events.push(r);
    }
    Ok(blocks.into_values().collect())
}

/// Two-column `z,survival` step points of a survival curve.
pub fn write_survival_csv(curve: &SurvivalCurve, path: &Path) -> Result<(), IoError> {
    let mut out = String::from("z,survival\n");
    for (z, s) in curve.step_points() {
        out.push_str(&format!("{z},{s}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// `k,alpha_hat` rows of a Hill k-sweep; failed `k` values get an empty estimate.
pub fn write_hill_sweep_csv(rows: &[(usize, Option<f64>)], path: &Path) -> Result<(), IoError> {
    let mut out = String::from("k,alpha_hat\n");
    for (k, a) in rows {
        out.push_str(&format!("{k},{}\n", opt(*a)));
    }
    write_atomic(path, out.as_bytes())
}

const TABLE_HEADER: &str = "n,rho,sigma,reps,seed,source,analytic,mean_vn,se_vn,var_vn";

/// Renders a simulation sweep as CSV text.
pub fn render_sim_table_csv(rows: &[SweepRow], reps: usize, seed: u64) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in rows {
        let (src, mean, se, var) = match (&r.source, &r.simulated) {
            (RowSource::Simulated, Some(s)) => (
                "simulated",
                s.mean_vn.to_string(),
                s.se_vn.to_string(),
                s.var_vn.to_string(),
            ),
            _ => ("analytic", String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{reps},{seed},{src},{},{mean},{se},{var}\n",
            r.n, r.rho, r.sigma, r.analytic
        ));
    }
    out
}

#[derive(Serialize)]
struct SimTableDoc<'a> {
    meta: ReportMeta,
    rows: &'a [SweepRow],
}

pub fn write_sim_table(
    rows: &[SweepRow],
    reps: usize,
    seed: u64,
    path: &Path,
    format: ReportFormat,
) -> Result<(), IoError> {
    let body = match format {
        ReportFormat::Csv => render_sim_table_csv(rows, reps, seed),
        ReportFormat::Json => {
            let mut meta = ReportMeta::new();
            meta.seed = Some(seed);
            let mut s = serde_json::to_string_pretty(&SimTableDoc { meta, rows })?;
            s.push('\n');
            s
        }
    };
    write_atomic(path, body.as_bytes())
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let file_name = path.file_name().ok_or_else(|| {
        IoError::io(
            path,
            io::Error::new(io::ErrorKind::InvalidInput, "not a file path"),
        )
    })?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(IoError::io(path, e));
    }
    Ok(())
}

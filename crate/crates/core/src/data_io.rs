//! Measurement tables, log-spaced size grids, and on-disk formats.
//!
//! Tables are comma-separated with a header row. Measurement files carry the
//! columns `size`, `seed`, `accuracy` and optionally `split`, in any order.
//! Extrapolation files start with `# key=value` metadata lines.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{Extrapolation, FittedModel};
use crate::gp_core::CurveDataset;
use crate::math_stats::TruncNormal;
use crate::priors::{PriorConfig, SigmaCalibration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Pilot,
    ShortRange,
    LongRange,
    Coverage,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Pilot => "pilot",
            Split::ShortRange => "short_range",
            Split::LongRange => "long_range",
            Split::Coverage => "coverage",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "pilot" => Ok(Split::Pilot),
            "short_range" | "short" => Ok(Split::ShortRange),
            "long_range" | "long" => Ok(Split::LongRange),
            "coverage" => Ok(Split::Coverage),
            other => Err(Error::Format(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub size: u64,
    pub seed: String,
    pub accuracy: f64,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementTable {
    rows: Vec<Measurement>,
}

impl MeasurementTable {
    pub fn new(rows: Vec<Measurement>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if r.size == 0 {
                return Err(Error::Domain("sizes must be positive".into()));
            }
            if !(0.0..=1.0).contains(&r.accuracy) {
                return Err(Error::Domain(format!(
                    "accuracy {} at size {} outside [0, 1]",
                    r.accuracy, r.size
                )));
            }
            if !seen.insert((r.size, r.seed.as_str())) {
                return Err(Error::Format(format!("duplicate row for size {} seed '{}'", r.size, r.seed)));
            }
        }
        Ok(MeasurementTable { rows })
    }

    pub fn rows(&self) -> &[Measurement] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows tagged with `split`; untagged rows are excluded.
    pub fn filter_split(&self, split: Split) -> MeasurementTable {
        MeasurementTable {
            rows: self.rows.iter().filter(|r| r.split == Some(split)).cloned().collect(),
        }
    }

    pub fn has_splits(&self) -> bool {
        self.rows.iter().any(|r| r.split.is_some())
    }
}

/// Seed-averaged curve plus the raw replicates per size (sorted by seed id).
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub sizes: Vec<f64>,
    pub means: Vec<f64>,
    pub replicates: Vec<Vec<f64>>,
}

impl Aggregated {
    pub fn dataset(&self) -> Result<CurveDataset> {
        CurveDataset::new(self.sizes.clone(), self.means.clone())
    }
}

pub fn aggregate_replicates(table: &MeasurementTable) -> Result<Aggregated> {
    if table.is_empty() {
        return Err(Error::Empty("measurement table has no rows".into()));
    }
    let mut by_size: BTreeMap<u64, Vec<(&str, f64)>> = BTreeMap::new();
    for r in table.rows() {
        by_size.entry(r.size).or_default().push((&r.seed, r.accuracy));
    }
    let mut out = Aggregated {
        sizes: Vec::with_capacity(by_size.len()),
        means: Vec::with_capacity(by_size.len()),
        replicates: Vec::with_capacity(by_size.len()),
    };
    for (size, mut reps) in by_size {
        reps.sort_by(|a, b| a.0.cmp(b.0));
        let ys: Vec<f64> = reps.into_iter().map(|(_, y)| y).collect();
        out.sizes.push(size as f64);
        out.means.push(ys.iter().sum::<f64>() / ys.len() as f64);
        out.replicates.push(ys);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpacingMode {
    InclusiveEndpoints,
    ExclusiveStart,
}

/// Geometric grid of integer sizes between `min_size` and `max_size`,
/// rounded half to even. Neighbors that collide after rounding are dropped.
pub fn log_spaced_sizes(min_size: u64, max_size: u64, count: usize, mode: SpacingMode) -> Result<Vec<u64>> {
    if min_size < 1 || min_size >= max_size {
        return Err(Error::Domain(format!(
            "need 1 <= min_size < max_size, got {min_size} and {max_size}"
        )));
    }
    if count < 2 {
        return Err(Error::Domain(format!("count must be at least 2, got {count}")));
    }
    let (lo, hi) = (min_size as f64, max_size as f64);
    let (steps, ks) = match mode {
        SpacingMode::InclusiveEndpoints => (count - 1, 0..count),
        SpacingMode::ExclusiveStart => (count, 1..count + 1),
    };
    let log_ratio = (hi / lo).ln() / steps as f64;
    let last = ks.end - 1;
    let mut out: Vec<u64> = Vec::with_capacity(count);
    for k in ks {
        let v = if k == 0 {
            min_size
        } else if k == last {
            max_size
        } else {
            (lo * (log_ratio * k as f64).exp()).round_ties_even() as u64
        };
        if out.last().is_some_and(|&prev| prev >= v) {
            log::warn!("size {v} collides with its neighbor after rounding; dropped");
            continue;
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader)
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => parse_err(line, format!("{kind:?}")),
    }
}

fn parse_size(text: &str, line: u64) -> Result<u64> {
    if let Ok(v) = text.parse::<u64>() {
        return Ok(v);
    }
    match text.parse::<f64>() {
        Ok(v) if v >= 1.0 && v.fract() == 0.0 && v < 2f64.powi(53) => Ok(v as u64),
        _ => Err(parse_err(line, format!("size '{text}' is not a positive integer"))),
    }
}

pub fn parse_measurements<R: Read>(reader: R) -> Result<MeasurementTable> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| {
        header_index(&headers, name).ok_or_else(|| parse_err(1, format!("missing column '{name}'")))
    };
    let (size_col, seed_col, acc_col) = (col("size")?, col("seed")?, col("accuracy")?);
    let split_col = header_index(&headers, "split");

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let size = parse_size(&rec[size_col], line)?;
        if size == 0 {
            return Err(parse_err(line, "size must be positive"));
        }
        let seed = rec[seed_col].to_string();
        let accuracy: f64 = rec[acc_col]
            .parse()
            .map_err(|_| parse_err(line, format!("accuracy '{}' is not a number", &rec[acc_col])))?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(parse_err(line, format!("accuracy {accuracy} outside [0, 1]")));
        }
        let split = match split_col.map(|c| &rec[c]) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<Split>().map_err(|e| parse_err(line, e.to_string()))?),
        };
        if !seen.insert((size, seed.clone())) {
            return Err(parse_err(line, format!("duplicate row for size {size} seed '{seed}'")));
        }
        rows.push(Measurement {
            size,
            seed,
            accuracy,
            split,
        });
    }
    MeasurementTable::new(rows)
}

pub fn read_measurements(path: &Path) -> Result<MeasurementTable> {
    parse_measurements(File::open(path)?)
}

/// Formats `v` with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_size(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        fmt_num(v)
    }
}

pub fn write_measurements<W: Write>(table: &MeasurementTable, out: W) -> Result<()> {
    let with_split = table.has_splits();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["size", "seed", "accuracy"];
    if with_split {
        header.push("split");
    }
    w.write_record(&header).map_err(csv_error)?;
    for r in table.rows() {
        let mut rec = vec![r.size.to_string(), r.seed.clone(), fmt_num(r.accuracy)];
        if with_split {
            rec.push(r.split.map(|s| s.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One query size of an extrapolation. `mu` and `sd` are the untruncated
/// Gaussian parameters; `mean` is the mean after truncation to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationRow {
    pub size: f64,
    pub mean: f64,
    pub mu: f64,
    pub sd: f64,
    pub intervals: Vec<(f64, f64)>,
}

impl ExtrapolationRow {
    pub fn marginal(&self) -> Result<TruncNormal> {
        TruncNormal::unit_interval(self.mu, self.sd)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtrapolationTable {
    pub metadata: BTreeMap<String, String>,
    pub levels: Vec<f64>,
    pub rows: Vec<ExtrapolationRow>,
}

impl ExtrapolationTable {
    pub fn from_extrapolation(ex: &Extrapolation, metadata: BTreeMap<String, String>) -> Self {
        let p = &ex.predictive;
        let rows = (0..p.len())
            .map(|i| ExtrapolationRow {
                size: p.query_sizes[i],
                mean: p.marginals[i].mean(),
                mu: p.marginals[i].loc,
                sd: p.marginals[i].scale,
                intervals: ex.intervals[i].clone(),
            })
            .collect();
        ExtrapolationTable {
            metadata,
            levels: ex.levels.clone(),
            rows,
        }
    }

    pub fn marginals(&self) -> Result<Vec<TruncNormal>> {
        self.rows.iter().map(ExtrapolationRow::marginal).collect()
    }
}

/// Standard metadata for tables produced from a fitted model.
pub fn model_metadata(model: &FittedModel) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("family".to_string(), model.family.short_name().to_string()),
        ("prior_digest".to_string(), model.prior.digest()),
        ("seed".to_string(), model.fit_config.seed.to_string()),
        ("truncated".to_string(), "true".to_string()),
        ("intervals".to_string(), "central".to_string()),
    ])
}

pub fn write_extrapolation<W: Write>(table: &ExtrapolationTable, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for (k, v) in &table.metadata {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::Format(format!("metadata entry '{k}' cannot be written")));
        }
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["size".to_string(), "mean".into(), "mu".into(), "sd".into()];
    for l in &table.levels {
        header.push(format!("lo_{l}"));
        header.push(format!("hi_{l}"));
    }
    w.write_record(&header).map_err(csv_error)?;
    for r in &table.rows {
        if r.intervals.len() != table.levels.len() {
            return Err(Error::LengthMismatch {
                left: r.intervals.len(),
                right: table.levels.len(),
            });
        }
        let mut rec = vec![fmt_size(r.size), fmt_num(r.mean), fmt_num(r.mu), fmt_num(r.sd)];
        for &(lo, hi) in &r.intervals {
            rec.push(fmt_num(lo));
            rec.push(fmt_num(hi));
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_extrapolation<R: Read>(mut reader: R) -> Result<ExtrapolationTable> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut metadata = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let Some(entry) = line.trim_start().strip_prefix('#') else { continue };
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| parse_err(i as u64 + 1, "metadata line must be '# key=value'"))?;
        metadata.insert(k.trim().to_string(), v.trim().to_string());
    }

    let mut rdr = csv_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| header_index(&headers, name).ok_or_else(|| parse_err(1, format!("missing column '{name}'")));
    let (size_col, mean_col, mu_col, sd_col) = (col("size")?, col("mean")?, col("mu")?, col("sd")?);
    let mut levels = Vec::new();
    let mut level_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(l) = h.strip_prefix("lo_") {
            let level: f64 = l.parse().map_err(|_| parse_err(1, format!("bad level column '{h}'")))?;
            let hi = col(&format!("hi_{l}"))?;
            levels.push(level);
            level_cols.push((i, hi));
        }
    }

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("'{}' is not a number", &rec[c])))
        };
        rows.push(ExtrapolationRow {
            size: num(size_col)?,
            mean: num(mean_col)?,
            mu: num(mu_col)?,
            sd: num(sd_col)?,
            intervals: level_cols.iter().map(|&(a, b)| Ok((num(a)?, num(b)?))).collect::<Result<_>>()?,
        });
    }
    Ok(ExtrapolationTable { metadata, levels, rows })
}

pub fn read_extrapolation(path: &Path) -> Result<ExtrapolationTable> {
    parse_extrapolation(File::open(path)?)
}

pub fn save_extrapolation(table: &ExtrapolationTable, path: &Path) -> Result<()> {
    write_extrapolation(table, File::create(path)?)
}

pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(model).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    let text = std::fs::read_to_string(path)?;
    let model: FittedModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    CurveDataset::new(model.data.sizes().to_vec(), model.data.accuracies().to_vec())?;
    model.params.check()?;
    model.prior.validate()?;
    Ok(model)
}

/// Prior configuration together with the calibration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorFile {
    pub digest: String,
    pub prior: PriorConfig,
    pub calibration: Option<SigmaCalibration>,
}

impl PriorFile {
    pub fn new(prior: PriorConfig, calibration: Option<SigmaCalibration>) -> Self {
        PriorFile {
            digest: prior.digest(),
            prior,
            calibration,
        }
    }
}

pub fn save_prior(file: &PriorFile, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(file).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_prior(path: &Path) -> Result<PriorFile> {
    let text = std::fs::read_to_string(path)?;
    let file: PriorFile = toml::from_str(&text).map_err(|e| Error::Parse {
        line: e
            .span()
            .map(|s| text[..s.start].matches('\n').count() + 1)
            .unwrap_or(0),
        message: e.message().to_string(),
    })?;
    file.prior.validate()?;
    Ok(file)
}

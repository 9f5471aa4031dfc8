//! File formats: comma-separated series and chain tables with a header row,
//! JSON for structured records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dists::BulkKind;
use crate::error::{Error, Result};
use crate::model::{Changepoints, ModelState};
use crate::sampler::{Chain, ChainConfig, ProposalScales};

/// Header names tried, case-insensitively, when no column is requested.
const VALUE_COLUMNS: [&str; 6] = ["x", "value", "close", "adj close", "price", "return"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub values: Vec<f64>,
    /// Rows skipped for an empty, unparseable or non-finite value.
    pub dropped: usize,
    pub column: String,
}

fn pick_column(headers: &csv::StringRecord, column: Option<&str>) -> Result<usize> {
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if let Some(c) = column {
        return names
            .iter()
            .position(|h| h.eq_ignore_ascii_case(c))
            .ok_or_else(|| Error::Data(format!("no column '{c}' in header [{}]", names.join(", "))));
    }
    if names.len() == 1 {
        return Ok(0);
    }
    VALUE_COLUMNS
        .iter()
        .find_map(|v| names.iter().position(|h| h.eq_ignore_ascii_case(v)))
        .ok_or_else(|| {
            Error::Data(format!("cannot tell which of [{}] holds the values; name one explicitly", names.join(", ")))
        })
}

/// Reads one numeric column of a headed CSV.
pub fn read_series<R: Read>(reader: R, column: Option<&str>) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Data("missing header row".into()));
    }
    let idx = pick_column(&headers, column)?;
    let mut values = Vec::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let rec = rec?;
        match rec.get(idx).and_then(|s| s.trim().parse::<f64>().ok()) {
            Some(v) if v.is_finite() => values.push(v),
            _ => dropped += 1,
        }
    }
    Ok(Series { values, dropped, column: headers[idx].trim().to_string() })
}

pub fn read_series_file(path: &Path, column: Option<&str>) -> Result<Series> {
    read_series(BufReader::new(open(path)?), column)
}

/// Writes `t,x` rows with 1-based `t`, plus a 1-based `regime` column when
/// changepoints are given.
pub fn write_series<W: Write>(writer: W, x: &[f64], regimes: Option<&Changepoints>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    match regimes {
        Some(_) => w.write_record(["t", "x", "regime"])?,
        None => w.write_record(["t", "x"])?,
    }
    for (i, v) in x.iter().enumerate() {
        let t = i + 1;
        match regimes {
            Some(c) => w.write_record([t.to_string(), v.to_string(), (c.regime_of(t)? + 1).to_string()])?,
            None => w.write_record([t.to_string(), v.to_string()])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_file(path: &Path, x: &[f64], regimes: Option<&Changepoints>) -> Result<()> {
    write_series(BufWriter::new(create(path)?), x, regimes)
}

/// Posterior samples read back from a chain table.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTable {
    pub kind: BulkKind,
    pub k: usize,
    pub l: usize,
    pub samples: Vec<ModelState>,
}

/// One row per sample in the column order of [`ModelState::param_names`].
/// Values use the shortest representation that parses back exactly.
pub fn write_chain<W: Write>(writer: W, kind: BulkKind, k: usize, l: usize, samples: &[ModelState]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ModelState::param_names(kind, k, l))?;
    for s in samples {
        if s.k() != k || s.l() != l || s.bulk.kind() != kind {
            return Err(Error::Domain("sample shape differs from the chain header".into()));
        }
        w.write_record(s.to_vector().iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_chain_file(path: &Path, chain: &Chain) -> Result<()> {
    let c = &chain.config;
    write_chain(BufWriter::new(create(path)?), c.kind, c.k, c.l, &chain.samples)
}

/// Recovers `(kind, k, l)` from a chain header; the header must match
/// [`ModelState::param_names`] exactly.
pub fn chain_shape(header: &[&str]) -> Result<(BulkKind, usize, usize)> {
    let k = header.iter().filter(|h| h.starts_with("xi_")).count();
    let l = header.iter().filter(|h| h.starts_with("w_")).count();
    let kind = if header.contains(&"eta_1") {
        BulkKind::Gamma
    } else if header.contains(&"delta2_1") {
        BulkKind::Normal
    } else {
        return Err(Error::Parse("chain header has neither eta_1 nor delta2_1".into()));
    };
    if k == 0 || l == 0 || ModelState::param_names(kind, k, l) != header {
        return Err(Error::Parse(format!("unrecognized chain header [{}]", header.join(", "))));
    }
    Ok((kind, k, l))
}

/// Reads a chain table for a series of length `n`.
pub fn read_chain<R: Read>(reader: R, n: usize) -> Result<ChainTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let header: Vec<&str> = headers.iter().map(str::trim).collect();
    let (kind, k, l) = chain_shape(&header)?;
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("chain row {}: {e}", i + 1)))?;
        let s = ModelState::from_vector(kind, k, l, n, &v)
            .map_err(|e| Error::Parse(format!("chain row {}: {e}", i + 1)))?;
        samples.push(s);
    }
    Ok(ChainTable { kind, k, l, samples })
}

pub fn read_chain_file(path: &Path, n: usize) -> Result<ChainTable> {
    read_chain(BufReader::new(open(path)?), n)
}

/// Split R-hat of one parameter across chains; `None` when infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: Option<f64>,
}

impl NamedValue {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value: value.is_finite().then_some(value) }
    }
}

/// Diagnostics stored beside each chain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub config: ChainConfig,
    /// Fingerprint of the series the chain was fitted to.
    pub data_hash: String,
    pub n: usize,
    pub acceptance: Vec<(String, Option<f64>)>,
    pub scales_final: ProposalScales,
    pub empty_regimes: Vec<bool>,
    pub logpost_trace: Vec<f64>,
}

impl ChainRecord {
    pub fn new(chain: &Chain, data_hash: &str, n: usize, empty_regimes: Vec<bool>) -> Self {
        Self {
            config: chain.config.clone(),
            data_hash: data_hash.to_string(),
            n,
            acceptance: chain.acceptance.named(chain.config.kind),
            scales_final: chain.scales_final.clone(),
            empty_regimes,
            logpost_trace: chain.logpost_trace.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

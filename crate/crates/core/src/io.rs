//! File formats: returns and metadata CSV, estimates and partition JSON,
//! archive JSONL, run configuration TOML and the run manifest.
//!
//! Floats are written in shortest round-trip form, so every numeric field
//! reloads bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{MetricsReport, SweepResult};
use crate::archive::{Archive, EliteRecord};
use crate::behavior::BehaviorDescriptor;
use crate::cvt::CvtPartition;
use crate::engine::{QdConfig, Snapshot};
use crate::error::{Error, Result};
use crate::estimation::ReturnsWindow;
use crate::fitness::Reference;
use crate::optimizer::FrontierPoint;
use crate::types::{AssetUniverse, Estimates, Portfolio, RiskReturnPoint};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

// ---------------------------------------------------------------- returns CSV

/// Reads a single `date,<series>` column of daily market returns whose dates
/// equal `dates` exactly.
pub fn read_market_csv(path: &Path, dates: &[NaiveDate]) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || !headers[0].trim().eq_ignore_ascii_case("date") {
        return Err(Error::Parse(format!("{}: header must be `date,<series>`", path.display())));
    }
    let mut series = Vec::with_capacity(dates.len());
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Parse(format!("{}: row {}: {what}", path.display(), line + 2));
        let date = NaiveDate::parse_from_str(row.get(0).unwrap_or("").trim(), "%Y-%m-%d")
            .map_err(|e| bad(&format!("bad date: {e}")))?;
        if dates.get(line) != Some(&date) {
            return Err(bad(&format!("date {date} does not match the returns window")));
        }
        let v: f64 = row.get(1).unwrap_or("").trim().parse().map_err(|_| bad("bad return"))?;
        series.push(v);
    }
    if series.len() != dates.len() {
        return Err(Error::DimensionMismatch {
            expected: dates.len(),
            actual: series.len(),
        });
    }
    Ok(series)
}

/// Reads `date,<asset1>,...` with ISO dates and decimal daily returns.
pub fn read_returns_csv(path: &Path) -> Result<ReturnsWindow> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || !headers[0].trim().eq_ignore_ascii_case("date") {
        return Err(Error::Parse(format!(
            "{}: header must be `date,<asset>,<asset>,...`",
            path.display()
        )));
    }
    let assets: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut returns = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != headers.len() {
            return Err(Error::Parse(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line + 2,
                row.len(),
                headers.len()
            )));
        }
        let date = NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d")
            .map_err(|e| Error::Parse(format!("{}: row {}: bad date: {e}", path.display(), line + 2)))?;
        dates.push(date);
        for field in row.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{}: row {}: bad return `{field}`", path.display(), line + 2)))?;
            returns.push(v);
        }
    }
    ReturnsWindow::new(assets, dates, returns)
}

pub fn write_returns_csv(path: &Path, win: &ReturnsWindow) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["date".to_string()];
    header.extend(win.assets().iter().cloned());
    w.write_record(&header)?;
    for (d, row) in win.dates().iter().zip(win.rows()) {
        let mut rec = vec![d.format("%Y-%m-%d").to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// --------------------------------------------------------------- metadata CSV

#[derive(Debug, Serialize, Deserialize)]
struct MetadataRow {
    asset: String,
    sector: String,
    market_cap: f64,
}

/// Reads `asset,sector,market_cap` and orders the universe like `assets`.
pub fn read_metadata_csv(path: &Path, assets: &[String]) -> Result<AssetUniverse> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows: Vec<MetadataRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    let mut sectors = Vec::with_capacity(assets.len());
    let mut caps = Vec::with_capacity(assets.len());
    for a in assets {
        let row = rows
            .iter()
            .find(|r| r.asset.trim() == a)
            .ok_or_else(|| Error::Parse(format!("{}: no metadata for asset `{a}`", path.display())))?;
        sectors.push(row.sector.trim().to_string());
        caps.push(row.market_cap);
    }
    AssetUniverse::from_labels(assets.to_vec(), &sectors, caps)
}

pub fn write_metadata_csv(path: &Path, u: &AssetUniverse) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for i in 0..u.len() {
        w.serialize(MetadataRow {
            asset: u.names()[i].clone(),
            sector: u.sector_names()[u.sector_of()[i]].clone(),
            market_cap: u.market_cap()[i],
        })?;
    }
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------- estimates JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub assets: Vec<String>,
    /// Annual expected returns, decimal.
    pub mu: Vec<f64>,
    /// Annual covariance rows, decimal.
    pub sigma: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub returns_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_model: Option<String>,
}

impl EstimatesFile {
    pub fn new(assets: Vec<String>, est: &Estimates) -> Self {
        EstimatesFile {
            assets,
            mu: est.mu().to_vec(),
            sigma: est.sigma_rows(),
            returns_model: None,
            covariance_model: None,
        }
    }

    pub fn estimates(&self) -> Result<Estimates> {
        if self.assets.len() != self.mu.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mu.len(),
                actual: self.assets.len(),
            });
        }
        Estimates::from_rows(self.mu.clone(), &self.sigma)
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn load_estimates(path: &Path) -> Result<(EstimatesFile, Estimates)> {
    let file: EstimatesFile = load_json(path)?;
    let est = file.estimates()?;
    Ok((file, est))
}

/// Checksum of the numeric content, independent of file formatting.
pub fn estimates_checksum(est: &Estimates) -> String {
    let body = serde_json::to_vec(&(est.mu(), est.sigma())).expect("finite floats serialize");
    sha256_hex(&body)
}

pub fn universe_checksum(u: &AssetUniverse) -> String {
    sha256_hex(&serde_json::to_vec(u).expect("universe serializes"))
}

pub fn save_partition(path: &Path, p: &CvtPartition) -> Result<()> {
    save_json(path, p)
}

pub fn load_partition(path: &Path) -> Result<CvtPartition> {
    load_json(path)
}

// --------------------------------------------------------------- archive JSONL

/// First line of an archive file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub config: QdConfig,
    pub reference: Reference,
    /// How the reference was derived, e.g. `max-sharpe`.
    pub reference_rule: String,
    pub assets: Vec<String>,
    pub estimates_sha256: String,
    pub universe_sha256: String,
    pub eval_count: u64,
    pub partition: CvtPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordLine {
    niche: usize,
    centroid: Vec<f64>,
    weights: Portfolio,
    bd: Vec<f64>,
    fitness: f64,
    mu: f64,
    sigma: f64,
    near_optimal: bool,
}

/// Archive metadata that is not derivable from the archive itself.
pub struct ArchiveContext<'a> {
    pub config: &'a QdConfig,
    pub reference_rule: &'a str,
    pub assets: &'a [String],
    pub est: &'a Estimates,
    pub universe: &'a AssetUniverse,
}

pub fn write_archive(path: &Path, a: &Archive, ctx: &ArchiveContext<'_>) -> Result<()> {
    let mut w = create(path)?;
    let header = ArchiveHeader {
        config: ctx.config.clone(),
        reference: a.reference().clone(),
        reference_rule: ctx.reference_rule.to_string(),
        assets: ctx.assets.to_vec(),
        estimates_sha256: estimates_checksum(ctx.est),
        universe_sha256: universe_checksum(ctx.universe),
        eval_count: a.eval_count(),
        partition: a.partition().clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (niche, r) in a.iter() {
        let line = RecordLine {
            niche,
            centroid: a.partition().centroid(niche).to_vec(),
            weights: r.weights.clone(),
            bd: r.bd.0.clone(),
            fitness: r.fitness,
            mu: r.rr.mu,
            sigma: r.rr.sigma,
            near_optimal: r.near_optimal,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads an archive, checking that record flags agree with the stored
/// reference and, when given, that `est` matches the recorded checksum.
pub fn read_archive(path: &Path, est: Option<&Estimates>) -> Result<(ArchiveHeader, Archive)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty archive file", path.display())))??;
    let header: ArchiveHeader = serde_json::from_str(&first)?;
    if let Some(est) = est {
        let found = estimates_checksum(est);
        if found != header.estimates_sha256 {
            return Err(Error::ChecksumMismatch {
                what: "estimates".into(),
                expected: header.estimates_sha256.clone(),
                found,
            });
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RecordLine = serde_json::from_str(&line)?;
        let rr = RiskReturnPoint {
            mu: r.mu,
            sigma: r.sigma,
        };
        if header.reference.contains(rr) != r.near_optimal {
            return Err(Error::Parse(format!(
                "{}: record {} near-optimal flag disagrees with the reference",
                path.display(),
                i + 1
            )));
        }
        records.push((
            r.niche,
            EliteRecord {
                weights: r.weights,
                bd: BehaviorDescriptor(r.bd),
                fitness: r.fitness,
                rr,
                near_optimal: r.near_optimal,
            },
        ));
    }
    let archive = Archive::from_records(
        header.partition.clone(),
        header.reference.clone(),
        header.eval_count,
        records,
    )?;
    Ok((header, archive))
}

// ------------------------------------------------------------------ run config

/// A run configuration file: every `QdConfig` key plus data locations and
/// the reference rule, as flat TOML.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub qd: QdConfig,
    pub estimates: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub reference: Option<String>,
}

const RUN_KEYS: [&str; 3] = ["estimates", "metadata", "reference"];

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Parse(format!("config: {e}")))?;
        let mut take = |key: &str| -> Result<Option<String>> {
            match table.remove(key) {
                None => Ok(None),
                Some(toml::Value::String(s)) => Ok(Some(s)),
                Some(other) => Err(Error::Parse(format!("config: `{key}` must be a string, got {other}"))),
            }
        };
        let [estimates, metadata, reference] = RUN_KEYS.map(&mut take);
        let resolve = |p: Option<String>| p.map(|p| base.join(p));
        let qd: QdConfig = table.try_into().map_err(|e| Error::Parse(format!("config: {e}")))?;
        Ok(RunConfig {
            qd,
            estimates: resolve(estimates?),
            metadata: resolve(metadata?),
            reference: reference?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

// -------------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: QdConfig,
    pub estimates_sha256: String,
    pub universe_sha256: String,
    pub archive_path: PathBuf,
    pub archive_sha256: String,
    pub metrics_path: Option<PathBuf>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    /// Recomputes the archive file checksum against the recorded one.
    pub fn verify(&self, base: &Path) -> Result<()> {
        let found = file_sha256(&base.join(&self.archive_path))?;
        if found != self.archive_sha256 {
            return Err(Error::ChecksumMismatch {
                what: self.archive_path.display().to_string(),
                expected: self.archive_sha256.clone(),
                found,
            });
        }
        Ok(())
    }
}

/// Stable identifier derived from the configuration and input checksums.
pub fn run_id(cfg: &QdConfig, estimates_sha256: &str, universe_sha256: &str) -> String {
    let body = serde_json::to_vec(&(cfg, estimates_sha256, universe_sha256)).expect("config serializes");
    sha256_hex(&body)[..16].to_string()
}

// ------------------------------------------------------------- tabular outputs

pub fn write_snapshots_csv(path: &Path, snapshots: &[Snapshot]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for s in snapshots {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshots_csv(path: &Path) -> Result<Vec<Snapshot>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_frontier_csv(path: &Path, points: &[FrontierPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let n = points.first().map_or(0, |p| p.weights.len());
    let mut header = vec!["gamma".to_string(), "sigma".into(), "mu".into()];
    header.extend((1..=n).map(|i| format!("w{i}")));
    w.write_record(&header)?;
    for p in points {
        let mut rec = vec![p.gamma.to_string(), p.rr.sigma.to_string(), p.rr.mu.to_string()];
        rec.extend(p.weights.weights().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv(path: &Path, m: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["metric", "param", "value"])?;
    for (metric, param, value) in m.tidy_rows() {
        w.write_record([metric, param, value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per window length, one column per constant.
pub fn write_sweep_csv(path: &Path, s: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["T".to_string()];
    header.extend(s.c_grid.iter().map(|c| format!("c={c}")));
    w.write_record(&header)?;
    for (t, row) in s.t_grid.iter().zip(&s.coverage) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

//! Accuracy and feedback metrics, and the CSV / JSON report files.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::harness::EpisodeRecord;
use crate::{timefmt, Error, Result};

pub const CSV_HEADER: [&str; 6] = ["index", "timestamp", "first_correct", "negatives", "proposals", "latency_us"];

/// What the metrics need from one episode; recoverable from a CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub first_correct: bool,
    pub negatives: usize,
    pub proposals: usize,
}

impl Outcome {
    /// Every proposal but the last was rejected and the last was accepted.
    pub fn satisfied(&self) -> bool {
        self.proposals == self.negatives + 1
    }
}

fn nonempty(outcomes: &[Outcome], what: &'static str) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::UndefinedMetric(what));
    }
    Ok(outcomes.len() as f64)
}

/// Share of requests satisfied by the first proposal.
pub fn fda(outcomes: &[Outcome]) -> Result<f64> {
    let n = nonempty(outcomes, "FDA of an empty run")?;
    Ok(outcomes.iter().filter(|o| o.first_correct).count() as f64 / n)
}

/// Mean number of negative feedbacks per request.
pub fn afr(outcomes: &[Outcome]) -> Result<f64> {
    let n = nonempty(outcomes, "AFR of an empty run")?;
    Ok(outcomes.iter().map(|o| o.negatives).sum::<usize>() as f64 / n)
}

/// Share of requests satisfied by one of the first two proposals.
pub fn within_two(outcomes: &[Outcome]) -> Result<f64> {
    let n = nonempty(outcomes, "within-two rate of an empty run")?;
    Ok(outcomes.iter().filter(|o| o.satisfied() && o.proposals <= 2).count() as f64 / n)
}

/// FDA over the trailing `window` requests at each index; the first
/// `window - 1` points average over the available prefix.
pub fn sliding_fda(outcomes: &[Outcome], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut hits = 0usize;
    let mut out = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        hits += o.first_correct as usize;
        if i >= window {
            hits -= outcomes[i - window].first_correct as usize;
        }
        out.push(hits as f64 / (i + 1).min(window) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub requests: usize,
    pub first_correct: usize,
    pub satisfied: usize,
    pub unsatisfied: usize,
    pub negatives: usize,
    pub proposals: usize,
    pub fda: f64,
    pub afr: f64,
    pub within_two: f64,
    pub window: usize,
    pub sliding_fda: Vec<f64>,
}

impl MetricsReport {
    pub fn compute(outcomes: &[Outcome], window: usize) -> Result<Self> {
        let satisfied = outcomes.iter().filter(|o| o.satisfied()).count();
        Ok(Self {
            requests: outcomes.len(),
            first_correct: outcomes.iter().filter(|o| o.first_correct).count(),
            satisfied,
            unsatisfied: outcomes.len() - satisfied,
            negatives: outcomes.iter().map(|o| o.negatives).sum(),
            proposals: outcomes.iter().map(|o| o.proposals).sum(),
            fda: fda(outcomes)?,
            afr: afr(outcomes)?,
            within_two: within_two(outcomes)?,
            window,
            sliding_fda: sliding_fda(outcomes, window),
        })
    }

    pub fn from_records(records: &[EpisodeRecord], window: usize) -> Result<Self> {
        Self::compute(&records.iter().map(EpisodeRecord::outcome).collect::<Vec<_>>(), window)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub requests: usize,
    pub mean_response_us: f64,
    pub p50_response_us: u64,
    pub p95_response_us: u64,
    pub p99_response_us: u64,
    pub max_response_us: u64,
    pub mean_feedback_us: f64,
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencySummary {
    pub fn compute(records: &[EpisodeRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::UndefinedMetric("latency of an empty run"));
        }
        let n = records.len() as f64;
        let mut response: Vec<u64> = records.iter().map(|r| r.latency_us).collect();
        response.sort_unstable();
        Ok(Self {
            requests: records.len(),
            mean_response_us: response.iter().sum::<u64>() as f64 / n,
            p50_response_us: percentile(&response, 50.0),
            p95_response_us: percentile(&response, 95.0),
            p99_response_us: percentile(&response, 99.0),
            max_response_us: *response.last().unwrap_or(&0),
            mean_feedback_us: records.iter().map(|r| r.feedback_latency_us).sum::<u64>() as f64 / n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvRow {
    pub index: usize,
    pub timestamp: String,
    pub first_correct: u8,
    pub negatives: usize,
    pub proposals: usize,
    pub latency_us: u64,
}

impl CsvRow {
    pub fn outcome(&self) -> Outcome {
        Outcome { first_correct: self.first_correct == 1, negatives: self.negatives, proposals: self.proposals }
    }
}

pub fn write_csv<W: Write>(w: W, records: &[EpisodeRecord]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        let t = timefmt::from_micros(r.timestamp).map(|t| timefmt::format(&t)).unwrap_or_default();
        out.serialize(CsvRow {
            index: r.index,
            timestamp: t,
            first_correct: r.first_correct() as u8,
            negatives: r.negatives,
            proposals: r.proposals.len(),
            latency_us: r.latency_us,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a report CSV, checking the header and that the indices run 0..n.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<CsvRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse { line: 1, message: format!("unexpected CSV header {header:?}") });
    }
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row: CsvRow = row?;
        if row.index != i || row.first_correct > 1 {
            return Err(Error::Parse { line: i + 2, message: "bad index or flag".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

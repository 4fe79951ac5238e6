//! Metrics rows and the CSV files the harness emits. The schemas are fixed:
//!
//! per-slot file: `t,scheme,inst_delay_s,cum_delay_s,global_reward,hit_local,hit_neighbor,hit_cloud,seed`
//! summary file:  `scheme,S,T,seed,mean_delay_s,tail_mean_delay_s`

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::Scheme;
use crate::Result;

pub const METRICS_HEADER: &str =
    "t,scheme,inst_delay_s,cum_delay_s,global_reward,hit_local,hit_neighbor,hit_cloud,seed";
pub const SUMMARY_HEADER: &str = "scheme,S,T,seed,mean_delay_s,tail_mean_delay_s";

/// One recorded sample: a scheme's metrics at one time slot.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    pub scheme: Scheme,
    /// Instantaneous popularity-weighted delay objective, seconds.
    pub inst_delay_s: f64,
    /// Running mean of the instantaneous delay up to `t`.
    pub cum_delay_s: f64,
    pub global_reward: f64,
    pub hit_local: f64,
    pub hit_neighbor: f64,
    pub hit_cloud: f64,
    pub seed: u64,
}

impl MetricsRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.t,
            self.scheme,
            self.inst_delay_s,
            self.cum_delay_s,
            self.global_reward,
            self.hit_local,
            self.hit_neighbor,
            self.hit_cloud,
            self.seed
        )
    }
}

/// Horizon-level summary of one scheme in one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub cache_capacity: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Mean instantaneous delay over the whole horizon, seconds.
    pub mean_delay_s: f64,
    /// Mean over the final quarter of the horizon, seconds.
    pub tail_mean_delay_s: f64,
}

impl SchemeSummary {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scheme,
            self.cache_capacity,
            self.horizon,
            self.seed,
            self.mean_delay_s,
            self.tail_mean_delay_s
        )
    }
}

/// Line-buffered CSV sink for metrics rows.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_csv())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    /// Flushes what exists and drops a sibling marker naming the failure, so
    /// a partial file is never mistaken for a finished run.
    pub fn mark_incomplete(mut self, reason: &str) {
        let _ = self.out.flush();
        let marker = self.path.with_extension("INCOMPLETE");
        let _ = std::fs::write(marker, format!("{reason}\n"));
    }
}

pub fn write_summaries(path: &Path, summaries: &[SchemeSummary]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in summaries {
        writeln!(out, "{}", s.to_csv())?;
    }
    out.flush()?;
    Ok(())
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "iteration,meta_loss,wall_ms";
pub const REPORT_HEADER: &str = "task_id,accuracy";

/// Per-episode accuracies with their mean and 95% confidence half-width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
    pub wall_ms: u64,
}

/// Sample mean and sample standard deviation (n − 1 denominator; 0 for n = 1).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl EpisodeReport {
    /// Normal-approximation interval: `1.96 · sd / √n`.
    pub fn from_accuracies(accuracies: Vec<f64>, wall_ms: u64) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::Config("a report needs at least one episode".into()));
        }
        if accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Numerics("accuracy outside [0, 1]".into()));
        }
        let (mean, sd) = mean_sd(&accuracies);
        let n = accuracies.len();
        Ok(EpisodeReport { ci95: 1.96 * sd / (n as f64).sqrt(), mean, n, accuracies, wall_ms })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for (i, a) in self.accuracies.iter().enumerate() {
            let _ = writeln!(out, "{i},{a}");
        }
        out
    }

    pub fn summary(&self) -> String {
        format!("accuracy {:.2}% ± {:.2}% over {} episodes", 100.0 * self.mean, 100.0 * self.ci95, self.n)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// One row of the meta-training metrics file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub meta_loss: f64,
    pub wall_ms: u64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.iteration, r.meta_loss, r.wall_ms);
    }
    out
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bmlp::EpochMetrics;

use crate::error::{CliError, Result};

pub const METRICS_HEADER: &str = "epoch,layer,local_error_rate,E,p_r,cp_updates,test_accuracy,wall_ms";

/// One CSV row per layer. Epochs are numbered from 1; `E` and `p_r` are
/// epoch-wide, `p_r` being the probability in effect during the epoch.
pub fn metrics_rows(m: &EpochMetrics, timing: bool) -> Vec<String> {
    let wall = if timing { m.wall_ms } else { 0 };
    m.layers
        .iter()
        .enumerate()
        .map(|(l, lm)| {
            let acc = lm.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
            format!(
                "{},{},{},{},{},{},{},{}",
                m.epoch + 1,
                l + 1,
                lm.local_error_rate,
                m.error_fraction,
                m.p_r,
                lm.cp_updates,
                acc,
                wall
            )
        })
        .collect()
}

/// Streams metrics rows to a file, flushing after each epoch.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
    timing: bool,
}

impl MetricsWriter {
    pub fn create(path: &Path, timing: bool) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = Self { path: path.to_path_buf(), out: BufWriter::new(file), timing };
        w.line(METRICS_HEADER)?;
        w.flush()?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| CliError::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }

    pub fn record(&mut self, m: &EpochMetrics) -> Result<()> {
        for row in metrics_rows(m, self.timing) {
            self.line(&row)?;
        }
        self.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bmlp::train::LayerEpochMetrics;

    #[test]
    fn row_layout() {
        let m = EpochMetrics {
            epoch: 0,
            p_r: 0.5,
            error_fraction: 0.25,
            layers: vec![
                LayerEpochMetrics { local_error_rate: 0.5, cp_updates: 7, ..Default::default() },
                LayerEpochMetrics {
                    local_error_rate: 0.25,
                    cp_updates: 3,
                    test_accuracy: Some(0.75),
                    ..Default::default()
                },
            ],
            wall_ms: 12,
        };
        assert_eq!(metrics_rows(&m, true), vec!["1,1,0.5,0.25,0.5,7,,12", "1,2,0.25,0.25,0.5,3,0.75,12"]);
        assert_eq!(metrics_rows(&m, false)[1], "1,2,0.25,0.25,0.5,3,0.75,0");
    }
}

//! CSV loss logging with a fixed schema.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One logged adversarial-training step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossRow {
    pub step: u64,
    pub loss_gen: f64,
    pub loss_adv: f64,
    pub loss_pix: f64,
    pub loss_clf: f64,
    pub loss_dis: f64,
}

/// Appends [`LossRow`]s to a CSV file with the header
/// `step,loss_gen,loss_adv,loss_pix,loss_clf,loss_dis`.
pub struct LossLog {
    writer: csv::Writer<File>,
}

impl LossLog {
    pub fn create(path: impl AsRef<Path>) -> Result<LossLog> {
        let file = File::create(path.as_ref())
            .map_err(|e| crate::error::TrainError::io(path.as_ref(), e))?;
        let writer = csv::WriterBuilder::new().has_headers(true).from_writer(file);
        Ok(LossLog { writer })
    }

    pub fn log(&mut self, row: &LossRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush().map_err(|e| crate::error::TrainError::io("loss log", e))?;
        Ok(())
    }
}

/// Reads a loss CSV back (for plots and tests).
pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<LossRow>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_log_round_trips_with_expected_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("losses.csv");
        let mut log = LossLog::create(&path).unwrap();
        log.log(&LossRow {
            step: 1,
            loss_gen: 2.02,
            loss_adv: 1.0,
            loss_pix: 0.1,
            loss_clf: 2.0,
            loss_dis: 0.165,
        })
        .unwrap();
        log.log(&LossRow {
            step: 2,
            loss_gen: 1.9,
            loss_adv: 0.9,
            loss_pix: 0.09,
            loss_clf: 1.8,
            loss_dis: 0.2,
        })
        .unwrap();
        drop(log);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,loss_gen,loss_adv,loss_pix,loss_clf,loss_dis\n"));
        let rows = read_loss_log(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].step, 1);
        assert!((rows[1].loss_adv - 0.9).abs() < 1e-12);
    }
}

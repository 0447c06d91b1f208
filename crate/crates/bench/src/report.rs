//! Evaluation report rows, CSV emission, and the rendered text table.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Whether the scoring classifier's class set equals the attacker-known set
/// or strictly contains it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    Complete,
    Partial,
}

impl std::fmt::Display for Overlap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Overlap::Complete => "complete",
            Overlap::Partial => "partial",
        })
    }
}

/// Whether the evaluation images come from attacker-known camera models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    In,
    Out,
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Distribution::In => "in",
            Distribution::Out => "out",
        })
    }
}

/// One aggregated evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub classifier_arch: String,
    pub preproc: String,
    pub overlap: Overlap,
    pub distribution: Distribution,
    pub attack: String,
    pub tsr: f64,
    pub usr: f64,
    pub mean_psnr: f64,
    pub n_images: usize,
    pub n_pairs: usize,
}

impl EvalRow {
    /// A targeted success is always an untargeted one (`y′ ≠ y`), so any
    /// row violating `usr ≥ tsr` indicates a scoring bug.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tsr", self.tsr), ("usr", self.usr)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BenchError::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.usr + 1e-12 < self.tsr {
            return Err(BenchError::Config(format!(
                "usr {} < tsr {} in row {}/{}",
                self.usr, self.tsr, self.classifier_arch, self.preproc
            )));
        }
        Ok(())
    }
}

/// Renders rows grouped by `(arch, preproc)` in first-appearance order,
/// success rates as percentages with the untargeted rate in parentheses.
pub fn render_table(rows: &[EvalRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(BenchError::Config("no rows to render".into()));
    }
    let mut groups: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.classifier_arch.clone(), r.preproc.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut out = String::new();
    for (arch, preproc) in &groups {
        writeln!(out, "{arch} / {preproc}").unwrap();
        for r in rows.iter().filter(|r| &r.classifier_arch == arch && &r.preproc == preproc) {
            writeln!(
                out,
                "  {:<8} {:<4} {:<10} TSR {:5.1} ({:5.1})  PSNR {:6.2} dB  [images {}, pairs {}]",
                r.overlap.to_string(),
                r.distribution.to_string(),
                r.attack,
                100.0 * r.tsr,
                100.0 * r.usr,
                r.mean_psnr,
                r.n_images,
                r.n_pairs,
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Writes the CSV artifact and returns the rendered table for display.
pub fn emit_report(rows: &[EvalRow], csv_path: impl AsRef<Path>) -> Result<String> {
    if rows.is_empty() {
        return Err(BenchError::Config("no rows to emit".into()));
    }
    for r in rows {
        r.validate()?;
    }
    let path = csv_path.as_ref();
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;
    render_table(rows)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<EvalRow>> {
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
    use tempfile::tempdir;

    fn row(arch: &str, preproc: &str, tsr: f64, usr: f64) -> EvalRow {
        EvalRow {
            classifier_arch: arch.into(),
            preproc: preproc.into(),
            overlap: Overlap::Complete,
            distribution: Distribution::In,
            attack: "cama".into(),
            tsr,
            usr,
            mean_psnr: 35.71,
            n_images: 10,
            n_pairs: 20,
        }
    }

    #[test]
    fn single_row_emits_header_plus_one_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("report.csv");
        emit_report(&[row("small", "rgb", 0.5, 0.6)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("classifier_arch,preproc,overlap,distribution,attack"));
    }

    #[test]
    fn csv_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let rows = vec![
            row("small", "rgb", 0.912, 0.934),
            row("resnet18", "fd", 1.0 / 3.0, 2.0 / 3.0),
        ];
        emit_report(&rows, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), rows);
    }

    #[test]
    fn table_groups_follow_input_arch_order() {
        let rows = vec![
            row("vgg16", "rgb", 0.2, 0.3),
            row("small", "hp", 0.4, 0.5),
            row("vgg16", "rgb", 0.6, 0.7),
        ];
        let table = render_table(&rows).unwrap();
        let vgg = table.find("vgg16 / rgb").unwrap();
        let small = table.find("small / hp").unwrap();
        assert!(vgg < small);
        // Both vgg rows render under the one group header.
        assert_eq!(table.matches("vgg16 / rgb").count(), 1);
        assert!(table.contains("TSR  20.0 ( 30.0)"));
    }

    #[test]
    fn usr_below_tsr_is_rejected() {
        let bad = row("small", "rgb", 0.8, 0.5);
        assert!(bad.validate().is_err());
        let dir = tempdir().unwrap();
        assert!(emit_report(&[bad], dir.path().join("r.csv")).is_err());
    }

    #[test]
    fn empty_reports_are_rejected() {
        assert!(render_table(&[]).is_err());
        let dir = tempdir().unwrap();
        assert!(emit_report(&[], dir.path().join("r.csv")).is_err());
    }
}

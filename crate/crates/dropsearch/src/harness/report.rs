//! Candidate reports: letter-coded genome rendering and the CSV/JSON output
//! files, with a fixed column order of
//! `genome,letters,accuracy_pct,ece_pct,ape_nats,latency_ms,aim,pareto`.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evosearch::{AimWeights, CandidateRecord};
use crate::supernet::{GenomeConfig, SupernetSpec};

/// Renders a genome in letter code, one letter per slot (B/R/K/M), joined by
/// dashes, e.g. `B-B-M`.
pub fn letters(spec: &SupernetSpec, genome: &GenomeConfig) -> Result<String> {
    spec.check_genome(genome)?;
    let parts: Vec<String> = spec
        .slots
        .iter()
        .zip(genome.choices.iter())
        .map(|(slot, &c)| slot.choices[c].kind.letter().to_string())
        .collect();
    Ok(parts.join("-"))
}

/// Inverse of [`letters`]: resolves each letter against the slot's choice
/// list. Slot choice lists never repeat a kind, so this is a bijection.
pub fn parse_letters(spec: &SupernetSpec, code: &str) -> Result<GenomeConfig> {
    let parts: Vec<&str> = code.split('-').map(str::trim).collect();
    if parts.len() != spec.slots.len() {
        return Err(Error::InvalidParam {
            name: "genome",
            message: format!(
                "'{code}' has {} letters but the supernet has {} slots",
                parts.len(),
                spec.slots.len()
            ),
        });
    }
    let mut choices = Vec::with_capacity(parts.len());
    for (slot, part) in spec.slots.iter().zip(parts.iter()) {
        let mut letter_chars = part.chars();
        let letter = letter_chars.next().filter(|_| letter_chars.next().is_none());
        let letter = letter.ok_or_else(|| Error::InvalidParam {
            name: "genome",
            message: format!("'{part}' is not a single letter code"),
        })?;
        let index = slot
            .choices
            .iter()
            .position(|c| c.kind.letter() == letter.to_ascii_uppercase())
            .ok_or_else(|| Error::InvalidParam {
                name: "genome",
                message: format!(
                    "slot {} offers no '{letter}' choice (available: {})",
                    slot.slot_index,
                    slot.choices.iter().map(|c| c.kind.letter()).collect::<String>()
                ),
            })?;
        choices.push(index);
    }
    Ok(GenomeConfig::new(choices))
}

/// One line of a report file.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub genome: String,
    pub letters: String,
    pub accuracy_pct: f64,
    pub ece_pct: f64,
    pub ape_nats: f64,
    pub latency_ms: f64,
    pub aim: f64,
    pub pareto: bool,
}

impl ReportRow {
    pub fn from_record(
        spec: &SupernetSpec,
        record: &CandidateRecord,
        pareto: bool,
    ) -> Result<ReportRow> {
        Ok(ReportRow {
            genome: record.genome.key(),
            letters: letters(spec, &record.genome)?,
            accuracy_pct: record.metrics.accuracy_pct,
            ece_pct: record.metrics.ece_pct,
            ape_nats: record.metrics.ape_nats,
            latency_ms: record.metrics.latency_ms,
            aim: record.aim,
            pareto,
        })
    }
}

/// Builds rows for `records`, flagging membership in `pareto_set`.
pub fn rows_with_pareto_flags(
    spec: &SupernetSpec,
    records: &[CandidateRecord],
    pareto_set: &[CandidateRecord],
) -> Result<Vec<ReportRow>> {
    records
        .iter()
        .map(|r| {
            let flag = pareto_set.iter().any(|p| p.genome == r.genome);
            ReportRow::from_record(spec, r, flag)
        })
        .collect()
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    writer
        .write_record([
            "genome",
            "letters",
            "accuracy_pct",
            "ece_pct",
            "ape_nats",
            "latency_ms",
            "aim",
            "pareto",
        ])
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for row in rows {
        writer
            .write_record([
                row.genome.clone(),
                row.letters.clone(),
                row.accuracy_pct.to_string(),
                row.ece_pct.to_string(),
                row.ape_nats.to_string(),
                row.latency_ms.to_string(),
                row.aim.to_string(),
                row.pareto.to_string(),
            ])
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// JSON mirror of a report: run weights plus all rows.
#[derive(Debug, Serialize)]
pub struct ReportJson<'a> {
    pub aim_weights: &'a AimWeights,
    pub rows: &'a [ReportRow],
}

pub fn write_report_json(path: &Path, weights: &AimWeights, rows: &[ReportRow]) -> Result<()> {
    crate::hwmodel::write_json(path, &ReportJson { aim_weights: weights, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dropout::{DropoutKind, DropoutParams};
    use crate::metrics::EvalMetrics;
    use crate::nn::{LayerSpec, NetworkSpec};

    fn letter_spec() -> SupernetSpec {
        let backbone = NetworkSpec::new(
            vec![8],
            vec![
                LayerSpec::Linear { out_features: 8 },
                LayerSpec::DropoutSlot { slot_index: 0 },
                LayerSpec::DropoutSlot { slot_index: 1 },
                LayerSpec::DropoutSlot { slot_index: 2 },
                LayerSpec::Linear { out_features: 4 },
            ],
        )
        .unwrap();
        let all4: Vec<(DropoutKind, DropoutParams)> = DropoutKind::ALL
            .iter()
            .map(|&k| (k, DropoutParams { rate: 0.25, block_size: 1, mask_count: 4, seed: 1 }))
            .collect();
        SupernetSpec::new(backbone, vec![(0, all4.clone()), (1, all4.clone()), (2, all4)]).unwrap()
    }

    #[test]
    fn letters_follow_the_choice_lists() {
        let spec = letter_spec();
        let code = letters(&spec, &GenomeConfig::new(vec![0, 0, 3])).unwrap();
        assert_eq!(code, "B-B-M");
        assert_eq!(letters(&spec, &GenomeConfig::new(vec![1, 2, 0])).unwrap(), "R-K-B");
    }

    #[test]
    fn letters_round_trip_every_genome() {
        let spec = letter_spec();
        for genome in spec.enumerate_genomes() {
            let code = letters(&spec, &genome).unwrap();
            assert_eq!(parse_letters(&spec, &code).unwrap(), genome);
        }
    }

    #[test]
    fn parse_rejects_unknown_letters_and_bad_arity() {
        let spec = letter_spec();
        assert!(parse_letters(&spec, "B-B").is_err());
        assert!(parse_letters(&spec, "B-B-X").is_err());
        assert!(parse_letters(&spec, "BB-B-M").is_err());
    }

    #[test]
    fn csv_has_the_fixed_header_and_reconstructable_aims() {
        let spec = letter_spec();
        let weights = AimWeights { eta: 1.0, mu: 1.0, beta: 1.0, lambda: 0.1 };
        let records: Vec<CandidateRecord> = [(91.0, 5.0, 0.8, 15.0), (88.0, 2.0, 1.1, 9.0)]
            .iter()
            .enumerate()
            .map(|(i, &(acc, ece, ape, lat))| {
                let metrics = EvalMetrics {
                    accuracy_pct: acc,
                    ece_pct: ece,
                    ape_nats: ape,
                    latency_ms: lat,
                };
                CandidateRecord {
                    genome: GenomeConfig::new(vec![i, 0, 3]),
                    aim: crate::evosearch::aim_score(&metrics, &weights),
                    metrics,
                }
            })
            .collect();
        let rows = rows_with_pareto_flags(&spec, &records, &records[1..2].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "genome,letters,accuracy_pct,ece_pct,ape_nats,latency_ms,aim,pareto"
        );
        for (line, row) in lines.zip(rows.iter()) {
            let fields: Vec<&str> = line.split(',').collect();
            let acc: f64 = fields[2].parse().unwrap();
            let ece: f64 = fields[3].parse().unwrap();
            let ape: f64 = fields[4].parse().unwrap();
            let lat: f64 = fields[5].parse().unwrap();
            let aim: f64 = fields[6].parse().unwrap();
            let recon = weights.eta * acc - weights.mu * ece + weights.beta * ape - weights.lambda * lat;
            assert!((recon - aim).abs() <= 1e-9);
            assert_eq!(fields[7], row.pareto.to_string());
        }
    }
}

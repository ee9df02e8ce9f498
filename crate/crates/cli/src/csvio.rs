//! CSV emission and ingestion.
//!
//! All experiment subcommands emit result rows under one fixed header. Files
//! are written through a single writer into a temporary sibling and renamed
//! into place, so a results file is either complete or absent. Output bytes
//! are deterministic: rows are pre-ordered by the caller and floats use the
//! shortest round-trip representation.
//!
//! `wall_time_ms` is always 0: recording real timings would break the
//! byte-identical-rerun contract, and the column is kept so the schema stays
//! stable for downstream tooling.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::{CliError, CliResult};

/// Exact header of every result CSV.
pub const RESULT_HEADER: &str =
    "sampler,budget,replicate,terminal_reward,nfe_denoiser,nfe_reward,wall_time_ms,seed";

/// One emitted result row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Arm label (sampler family, spec string, or study arm name).
    pub sampler: String,
    /// Budget multiplier relative to one ancestral pass.
    pub budget: u32,
    /// Replicate index, starting at 0.
    pub replicate: u32,
    /// Terminal reward of the produced sequence.
    pub terminal_reward: f64,
    /// Denoiser evaluations consumed.
    pub nfe_denoiser: u64,
    /// Reward evaluations consumed.
    pub nfe_reward: u64,
    /// Always 0; see the module docs.
    pub wall_time_ms: u64,
    /// Master seed of the experiment.
    pub seed: u64,
}

impl ResultRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.sampler,
            self.budget,
            self.replicate,
            self.terminal_reward,
            self.nfe_denoiser,
            self.nfe_reward,
            self.wall_time_ms,
            self.seed
        )
    }

    fn parse_line(line: &str, lineno: usize) -> CliResult<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(CliError::Usage(format!(
                "csv line {lineno}: expected 8 fields, got {}",
                fields.len()
            )));
        }
        let num = |idx: usize, what: &str| -> CliResult<u64> {
            fields[idx].parse().map_err(|e| {
                CliError::Usage(format!("csv line {lineno}: bad {what} `{}`: {e}", fields[idx]))
            })
        };
        let reward: f64 = fields[3].parse().map_err(|e| {
            CliError::Usage(format!(
                "csv line {lineno}: bad terminal_reward `{}`: {e}",
                fields[3]
            ))
        })?;
        Ok(ResultRow {
            sampler: fields[0].to_string(),
            budget: num(1, "budget")? as u32,
            replicate: num(2, "replicate")? as u32,
            terminal_reward: reward,
            nfe_denoiser: num(4, "nfe_denoiser")?,
            nfe_reward: num(5, "nfe_reward")?,
            wall_time_ms: num(6, "wall_time_ms")?,
            seed: num(7, "seed")?,
        })
    }
}

/// Writes `header` and `lines` to `path` atomically (temp file + rename),
/// creating parent directories as needed.
pub fn write_csv(path: &Path, header: &str, lines: &[String]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let file = fs::File::create(&tmp)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", tmp.display())))?;
        let mut w = std::io::BufWriter::new(file);
        let io_err =
            |e: std::io::Error| CliError::Usage(format!("cannot write {}: {e}", tmp.display()));
        writeln!(w, "{header}").map_err(io_err)?;
        for line in lines {
            writeln!(w, "{line}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Usage(format!("cannot move results into {}: {e}", path.display())))
}

/// Writes result rows under the exact schema header.
pub fn write_result_rows(path: &Path, rows: &[ResultRow]) -> CliResult<()> {
    let lines: Vec<String> = rows.iter().map(ResultRow::to_line).collect();
    write_csv(path, RESULT_HEADER, &lines)
}

/// Reads a result CSV back, rejecting any schema mismatch.
pub fn read_result_rows(path: &Path) -> CliResult<Vec<ResultRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Usage(format!("{}: empty file", path.display())))?;
    if header != RESULT_HEADER {
        return Err(CliError::Usage(format!(
            "{}: header mismatch\n  expected: {RESULT_HEADER}\n  found:    {header}",
            path.display()
        )));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| ResultRow::parse_line(l, i + 2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<ResultRow> {
        vec![
            ResultRow {
                sampler: "ancestral".into(),
                budget: 1,
                replicate: 0,
                terminal_reward: 0.5,
                nfe_denoiser: 24,
                nfe_reward: 0,
                wall_time_ms: 0,
                seed: 7,
            },
            ResultRow {
                sampler: "iterref".into(),
                budget: 8,
                replicate: 1,
                terminal_reward: 1.0,
                nfe_denoiser: 108,
                nfe_reward: 86,
                wall_time_ms: 0,
                seed: 7,
            },
        ]
    }

    #[test]
    fn rows_round_trip_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = sample_rows();
        write_result_rows(&path, &rows).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert!(first.starts_with(RESULT_HEADER.as_bytes()));
        assert_eq!(read_result_rows(&path).unwrap(), rows);
        write_result_rows(&path, &rows).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "sampler,budget\nx,1\n").unwrap();
        let err = read_result_rows(&path).unwrap_err();
        assert!(err.to_string().contains("header mismatch"));
        std::fs::write(
            &path,
            format!("{RESULT_HEADER}\nancestral,1,0,nope,24,0,0,7\n"),
        )
        .unwrap();
        assert!(read_result_rows(&path).is_err());
    }
}

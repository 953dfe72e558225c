//! Hyperparameter grids: run records, their CSV form, per-(arch, L) means
//! and the plots derived from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use flockdet_core::seqnet::Arch;
use serde::{Deserialize, Serialize};

use crate::svg::{line_chart, Series};
use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentGrid {
    pub sequence_lengths: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub hidden_sizes: Vec<usize>,
    pub archs: Vec<Arch>,
    pub repeats: usize,
    pub seed_base: u64,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            sequence_lengths: vec![30, 60, 100, 150, 200, 300, 500],
            batch_sizes: vec![64, 32, 16, 8],
            hidden_sizes: vec![256, 128, 64, 32, 16],
            archs: Arch::ALL.to_vec(),
            repeats: 1,
            seed_base: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub arch: Arch,
    pub seq_len: usize,
    pub batch: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl ExperimentGrid {
    pub fn validate(&self) -> CliResult<()> {
        if self.sequence_lengths.is_empty()
            || self.batch_sizes.is_empty()
            || self.hidden_sizes.is_empty()
            || self.archs.is_empty()
            || self.repeats == 0
        {
            return Err(CliError::Usage("grid lists must be non-empty and repeats ≥ 1".into()));
        }
        Ok(())
    }

    /// Cells in a fixed order: L, arch, batch, hidden, repeat.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &seq_len in &self.sequence_lengths {
            for &arch in &self.archs {
                for &batch in &self.batch_sizes {
                    for &hidden in &self.hidden_sizes {
                        for r in 0..self.repeats {
                            out.push(Cell {
                                arch,
                                seq_len,
                                batch,
                                hidden,
                                seed: self.seed_base + r as u64,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub arch: Arch,
    pub seq_len: usize,
    pub batch: usize,
    pub hidden: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub wall_time_s: f64,
    pub epochs_run: usize,
}

pub const RUNS_HEADER: &str = "arch,L,batch,hidden,seed,accuracy,wall_time_s,epochs_run";

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.arch.name(),
            self.seq_len,
            self.batch,
            self.hidden,
            self.seed,
            self.accuracy,
            self.wall_time_s,
            self.epochs_run
        )
    }
}

pub fn runs_to_csv(runs: &[RunRecord]) -> String {
    let mut s = format!("{RUNS_HEADER}\n");
    for r in runs {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

pub fn runs_from_csv(text: &str) -> CliResult<Vec<RunRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(RUNS_HEADER) {
        return Err(CliError::Usage(format!("runs file must start with '{RUNS_HEADER}'")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let bad = || CliError::Usage(format!("runs row {}: '{l}'", i + 2));
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(bad());
            }
            Ok(RunRecord {
                arch: Arch::parse(f[0]).ok_or_else(bad)?,
                seq_len: f[1].parse().map_err(|_| bad())?,
                batch: f[2].parse().map_err(|_| bad())?,
                hidden: f[3].parse().map_err(|_| bad())?,
                seed: f[4].parse().map_err(|_| bad())?,
                accuracy: f[5].parse().map_err(|_| bad())?,
                wall_time_s: f[6].parse().map_err(|_| bad())?,
                epochs_run: f[7].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellMean {
    pub arch: Arch,
    pub seq_len: usize,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub mean_wall_time_s: f64,
}

pub fn means(runs: &[RunRecord]) -> Vec<CellMean> {
    let mut groups: BTreeMap<(Arch, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.arch, r.seq_len)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((arch, seq_len), rs)| {
            let n = rs.len() as f64;
            CellMean {
                arch,
                seq_len,
                runs: rs.len(),
                mean_accuracy: rs.iter().map(|r| r.accuracy).sum::<f64>() / n,
                mean_wall_time_s: rs.iter().map(|r| r.wall_time_s).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn means_to_csv(means: &[CellMean]) -> String {
    let mut s = String::from("arch,L,runs,mean_accuracy,mean_wall_time_s\n");
    for m in means {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            m.arch.name(),
            m.seq_len,
            m.runs,
            m.mean_accuracy,
            m.mean_wall_time_s
        );
    }
    s
}

/// Accuracy-vs-L and runtime-vs-L charts, one line per architecture.
pub fn plots(runs: &[RunRecord]) -> (String, String) {
    let ms = means(runs);
    let series = |value: fn(&CellMean) -> f64| -> Vec<Series> {
        let mut by_arch: BTreeMap<Arch, Vec<(f64, f64)>> = BTreeMap::new();
        for m in &ms {
            by_arch.entry(m.arch).or_default().push((m.seq_len as f64, value(m)));
        }
        by_arch
            .into_iter()
            .map(|(a, points)| Series {
                name: a.name().to_string(),
                points,
            })
            .collect()
    };
    (
        line_chart(
            "Pair classification accuracy by sequence length",
            "sequence length L",
            "mean test accuracy",
            &series(|m| m.mean_accuracy),
        ),
        line_chart(
            "Training time by sequence length",
            "sequence length L",
            "mean wall time (s)",
            &series(|m| m.mean_wall_time_s),
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(arch: Arch, l: usize, acc: f64, t: f64) -> RunRecord {
        RunRecord {
            arch,
            seq_len: l,
            batch: 8,
            hidden: 16,
            seed: 1,
            accuracy: acc,
            wall_time_s: t,
            epochs_run: 3,
        }
    }

    #[test]
    fn default_grid_has_twenty_runs_per_arch_and_length() {
        let g = ExperimentGrid::default();
        let cells = g.cells();
        assert_eq!(cells.len(), 7 * 3 * 4 * 5);
        let n = cells.iter().filter(|c| c.arch == Arch::Lstm && c.seq_len == 100).count();
        assert_eq!(n, 20);
    }

    #[test]
    fn csv_roundtrip_and_means() {
        let runs = vec![
            rec(Arch::Rnn, 30, 0.5, 1.0),
            rec(Arch::Rnn, 30, 0.7, 3.0),
            rec(Arch::Transformer, 30, 0.9, 2.5),
        ];
        let csv = runs_to_csv(&runs);
        assert_eq!(runs_from_csv(&csv).unwrap(), runs);
        let m = means(&runs);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].arch, Arch::Rnn);
        assert!((m[0].mean_accuracy - 0.6).abs() < 1e-15);
        assert_eq!(m[0].mean_wall_time_s, 2.0);
        assert!(runs_from_csv("nope\n").is_err());
    }

    #[test]
    fn plots_depend_only_on_the_csv() {
        let runs = vec![rec(Arch::Lstm, 30, 0.8, 1.0), rec(Arch::Lstm, 100, 0.9, 2.0)];
        let again = runs_from_csv(&runs_to_csv(&runs)).unwrap();
        assert_eq!(plots(&runs), plots(&again));
    }
}

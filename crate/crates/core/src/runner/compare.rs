//! Side-by-side comparison of finished run directories.

use std::fs;
use std::path::{Path, PathBuf};

use super::run::{RunSummary, HISTORY_FILE, SUMMARY_FILE};
use crate::error::{Error, Result};
use crate::federation::RoundHistory;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub dir: PathBuf,
    pub mode: String,
    pub rounds: usize,
    pub val_loss: Option<f64>,
    pub fe_pct: Option<f64>,
    pub me_pct: Option<f64>,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
    pub rounds_to_target: Option<usize>,
    pub total_payload_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// Set when the runs did not all train for the same number of rounds.
    pub unequal_horizons: bool,
}

fn load_row(dir: &Path) -> Result<CompareRow> {
    let history_path = dir.join(HISTORY_FILE);
    if !history_path.is_file() {
        return Err(Error::Data(format!("{} is missing", history_path.display())));
    }
    let text = fs::read_to_string(&history_path).map_err(|e| Error::io(&history_path, e))?;
    let history = RoundHistory::from_csv(&text)?;
    let last = history
        .last()
        .ok_or_else(|| Error::Data(format!("{} has no rounds", history_path.display())))?;

    let summary_path = dir.join(SUMMARY_FILE);
    let summary: Option<RunSummary> = match fs::read_to_string(&summary_path) {
        Ok(s) => Some(
            serde_json::from_str(&s)
                .map_err(|e| Error::Data(format!("{}: {e}", summary_path.display())))?,
        ),
        Err(_) => None,
    };
    let target = summary.as_ref().and_then(|s| s.target_loss);
    Ok(CompareRow {
        dir: dir.to_path_buf(),
        mode: summary.map_or_else(|| "?".into(), |s| s.mode.as_str().to_string()),
        rounds: history.len(),
        val_loss: last.val_loss,
        fe_pct: last.fe_pct,
        me_pct: last.me_pct,
        auroc: last.auroc,
        aupr: last.aupr,
        rounds_to_target: target.and_then(|t| history.rounds_to_target(t)),
        total_payload_bits: history.total_payload_bits(),
    })
}

/// Loads at least two run directories into an aligned table.
pub fn compare<P: AsRef<Path>>(run_dirs: &[P]) -> Result<Comparison> {
    if run_dirs.len() < 2 {
        return Err(Error::Data("compare needs at least two run directories".into()));
    }
    let rows = run_dirs
        .iter()
        .map(|d| load_row(d.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let unequal_horizons = rows.iter().any(|r| r.rounds != rows[0].rounds);
    Ok(Comparison { rows, unequal_horizons })
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

impl Comparison {
    /// Differences of each row from the first: (val_loss, fe, me, auroc,
    /// aupr, payload bits).
    pub fn deltas(&self) -> Vec<[Option<f64>; 6]> {
        let base = &self.rows[0];
        self.rows
            .iter()
            .map(|r| {
                [
                    delta(r.val_loss, base.val_loss),
                    delta(r.fe_pct, base.fe_pct),
                    delta(r.me_pct, base.me_pct),
                    delta(r.auroc, base.auroc),
                    delta(r.aupr, base.aupr),
                    Some(r.total_payload_bits as f64 - base.total_payload_bits as f64),
                ]
            })
            .collect()
    }

    /// Plain-text table; deltas are relative to the first run.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<32} {:>6} {:>6} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>12} {:>9} {:>9}\n",
            "run", "mode", "rounds", "val_loss", "FE%", "ME%", "AUROC", "AUPR", "to_tgt", "payload_bits", "dAUROC", "dAUPR"
        );
        for (r, d) in self.rows.iter().zip(self.deltas()) {
            out.push_str(&format!(
                "{:<32} {:>6} {:>6} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>12} {:>9} {:>9}\n",
                r.dir.display(),
                r.mode,
                r.rounds,
                fmt(r.val_loss),
                fmt(r.fe_pct),
                fmt(r.me_pct),
                fmt(r.auroc),
                fmt(r.aupr),
                r.rounds_to_target.map_or_else(|| "-".into(), |k| k.to_string()),
                r.total_payload_bits,
                fmt(d[3]),
                fmt(d[4]),
            ));
        }
        if self.unequal_horizons {
            let rounds: Vec<String> = self.rows.iter().map(|r| r.rounds.to_string()).collect();
            out.push_str(&format!("WARNING: unequal horizons ({} rounds)\n", rounds.join(" vs ")));
        }
        out
    }
}

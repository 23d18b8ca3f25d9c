use std::fmt::Write as _;

use super::design::fit_zscores;
use super::sweeps::CellResult;
use super::{Analysis, ExperimentError};

/// Outcome of refitting train-derived statistics from the training
/// streamers alone.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub cutoff_tables: usize,
    pub zscore_sets: usize,
    pub mismatches: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cutoff_tables_checked {}", self.cutoff_tables);
        let _ = writeln!(s, "zscore_sets_checked {}", self.zscore_sets);
        let _ = writeln!(s, "mismatches {}", self.mismatches.len());
        for m in &self.mismatches {
            let _ = writeln!(s, "mismatch {m}");
        }
        let _ = writeln!(s, "result {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

/// Rebuilds every cutoff table cached by `analysis` and the standardization
/// of every fitted cell from a dataset holding only the training streamers,
/// and requires bit-identical results.
pub fn leakage_audit(analysis: &Analysis<'_>, cells: &[&CellResult]) -> Result<AuditReport, ExperimentError> {
    let train_only = analysis.dataset().subset(&analysis.train_ids())?;
    let replay = Analysis::all_train(&train_only, *analysis.config());
    let mut mismatches = Vec::new();

    let cached = analysis.cached_cutoffs();
    for fitted in &cached {
        let table = &fitted.table;
        let label = format!("cutoffs {} t{} d{}", table.measure, table.t, table.delta);
        match replay.cutoffs(table.measure, table.t, table.delta) {
            Some(again) if *again == **fitted => {}
            Some(_) => mismatches.push(label),
            None => mismatches.push(format!("{label}: no training streamers on replay")),
        }
    }

    let mut zscore_sets = 0;
    for cell in cells.iter().filter(|c| !c.zscores.is_empty()) {
        zscore_sets += 1;
        let rows = replay.train_baseline_rows(cell.measure, cell.delta, &cell.ts)?;
        let again = fit_zscores(rows.iter().map(Vec::as_slice));
        if again != cell.zscores {
            mismatches.push(format!("zscores {}", cell.key()));
        }
    }
    Ok(AuditReport {
        cutoff_tables: cached.len(),
        zscore_sets,
        mismatches,
    })
}

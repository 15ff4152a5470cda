//! One-way ANOVA, Tukey-Kramer pairwise comparisons, Pearson correlation
//! and least-squares line fits, with their distribution functions.

mod hypothesis;
pub mod ptukey;
pub mod special;

use thiserror::Error;

pub use hypothesis::{
    linear_fit, mean, one_way_anova, pearson, pooled_t_test, tukey_kramer, AnovaResult,
    CorrelationResult, Group, GroupSummary, GroupedSample, PairwiseComparison, RegressionResult,
    TTestResult,
};
pub use ptukey::ptukey_sf;

use crate::numfmt::format_sig;
use crate::table::Table;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group `{label}` has {n} observations; at least 2 required")]
    TooFewObservations { label: String, n: usize },
    #[error("duplicate group label `{0}`")]
    DuplicateLabel(String),
    #[error("zero {0} variance")]
    ZeroVariance(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite observation in `{0}`")]
    NonFinite(String),
}

pub const TUKEY_COLUMNS: [&str; 6] = [
    "group_a",
    "group_b",
    "mean_diff",
    "q",
    "p_adj",
    "significant",
];

pub fn tukey_table(pairs: &[PairwiseComparison]) -> Table {
    let mut t = Table::new(TUKEY_COLUMNS.iter().map(|s| s.to_string()).collect());
    for p in pairs {
        t.rows.push(vec![
            p.group_a.clone(),
            p.group_b.clone(),
            format_sig(p.mean_diff),
            format_sig(p.q),
            format_sig(p.p_adj),
            p.significant.to_string(),
        ]);
    }
    t
}

/// Groups the numeric `value_col` of a table by `group_col`, in order of
/// first appearance. Empty cells are skipped.
pub fn group_table(
    table: &Table,
    group_col: &str,
    value_col: &str,
) -> Result<GroupedSample, String> {
    let g = table.column(group_col).map_err(|e| e.to_string())?;
    let v = table.column(value_col).map_err(|e| e.to_string())?;
    let mut groups: indexmap::IndexMap<String, Vec<f64>> = indexmap::IndexMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let cell = row.get(v).map(|s| s.trim()).unwrap_or("");
        if cell.is_empty() {
            continue;
        }
        let value: f64 = cell
            .parse()
            .map_err(|_| format!("row {}: `{cell}` in `{value_col}` is not numeric", i + 1))?;
        groups
            .entry(row.get(g).cloned().unwrap_or_default())
            .or_default()
            .push(value);
    }
    Ok(GroupedSample::new(groups))
}

/// Paired numeric columns; rows with an empty cell in either are skipped.
pub fn paired_columns(
    table: &Table,
    x_col: &str,
    y_col: &str,
) -> Result<(Vec<f64>, Vec<f64>), String> {
    let xi = table.column(x_col).map_err(|e| e.to_string())?;
    let yi = table.column(y_col).map_err(|e| e.to_string())?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let (a, b) = (row[xi].trim(), row[yi].trim());
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let parse = |s: &str, col: &str| {
            s.parse::<f64>()
                .map_err(|_| format!("row {}: `{s}` in `{col}` is not numeric", i + 1))
        };
        xs.push(parse(a, x_col)?);
        ys.push(parse(b, y_col)?);
    }
    Ok((xs, ys))
}

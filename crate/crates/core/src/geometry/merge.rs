use std::collections::{HashMap, HashSet};

use super::traits::{phenotypes_to_table, PhenotypeRecord};
use super::GeometryError;
use crate::table::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub table: Table,
    /// Phenotype file names without metadata, then metadata file names
    /// without phenotypes.
    pub orphans: Vec<String>,
    pub warnings: Vec<String>,
}

/// Inner join on `key`; phenotype columns first, then metadata columns
/// without the key. Row order follows `records`.
pub fn merge_with_metadata(
    records: &[PhenotypeRecord],
    metadata: &Table,
    key: &str,
) -> Result<MergeOutcome, GeometryError> {
    let key_col = metadata.column(key)?;
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.file_name.as_str()) {
            return Err(GeometryError::DuplicateKey {
                side: "phenotypes",
                key: r.file_name.clone(),
            });
        }
    }
    let mut by_key: HashMap<&str, &Vec<String>> = HashMap::new();
    for row in &metadata.rows {
        let k = row.get(key_col).map(String::as_str).unwrap_or("");
        if by_key.insert(k, row).is_some() {
            return Err(GeometryError::DuplicateKey {
                side: "metadata",
                key: k.to_string(),
            });
        }
    }

    let pheno = phenotypes_to_table(records);
    let mut headers = pheno.headers.clone();
    let extra: Vec<usize> = (0..metadata.headers.len())
        .filter(|&i| i != key_col)
        .collect();
    headers.extend(extra.iter().map(|&i| metadata.headers[i].clone()));
    let mut table = Table::new(headers);
    let mut orphans = Vec::new();
    for (record, row) in records.iter().zip(pheno.rows) {
        match by_key.get(record.file_name.as_str()) {
            Some(meta) => {
                let mut merged = row;
                merged.extend(
                    extra
                        .iter()
                        .map(|&i| meta.get(i).cloned().unwrap_or_default()),
                );
                table.rows.push(merged);
            }
            None => orphans.push(record.file_name.clone()),
        }
    }
    let unmatched_meta: Vec<String> = metadata
        .rows
        .iter()
        .map(|r| r.get(key_col).cloned().unwrap_or_default())
        .filter(|k| !seen.contains(k.as_str()))
        .collect();
    if table.rows.is_empty() {
        return Err(GeometryError::NoMatches {
            records: records.len(),
            metadata: metadata.rows.len(),
        });
    }
    let mut warnings = Vec::new();
    if !orphans.is_empty() {
        warnings.push(format!("no metadata for: {}", orphans.join(", ")));
    }
    if !unmatched_meta.is_empty() {
        warnings.push(format!("no phenotypes for: {}", unmatched_meta.join(", ")));
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    orphans.extend(unmatched_meta);
    Ok(MergeOutcome {
        table,
        orphans,
        warnings,
    })
}

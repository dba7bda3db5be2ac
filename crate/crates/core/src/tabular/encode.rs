use std::collections::BTreeSet;

use super::{Column, ColumnData, FeatureTable};
use crate::error::{Error, Result};

/// Upper bound on distinct observed values of a categorical column.
pub const MAX_CATEGORIES: usize = 64;

/// Replaces each categorical column with `k - 1` indicator columns named
/// `column=value`. The alphabetically first category is the reference.
/// Rows missing the category are missing in every indicator. Columns with
/// fewer than two observed categories are dropped with a warning.
pub fn encode_dummies(table: &FeatureTable) -> Result<FeatureTable> {
    let mut columns = Vec::new();
    for col in table.columns() {
        let values = match &col.data {
            ColumnData::Continuous(_) => {
                columns.push(col.clone());
                continue;
            }
            ColumnData::Categorical(v) => v,
        };
        let cats: BTreeSet<&str> = values.iter().flatten().map(String::as_str).collect();
        if cats.len() > MAX_CATEGORIES {
            return Err(Error::InvalidParameter(format!(
                "categorical column {} has {} categories (max {MAX_CATEGORIES})",
                col.name,
                cats.len()
            )));
        }
        if cats.len() < 2 {
            log::warn!(
                "dropping categorical column {} with {} observed categories",
                col.name,
                cats.len()
            );
            continue;
        }
        for cat in cats.iter().skip(1) {
            columns.push(Column::continuous(
                format!("{}={}", col.name, cat),
                values
                    .iter()
                    .map(|v| v.as_deref().map(|s| if s == *cat { 1.0 } else { 0.0 }))
                    .collect(),
            ));
        }
    }
    FeatureTable::new(table.ids().to_vec(), columns)
}

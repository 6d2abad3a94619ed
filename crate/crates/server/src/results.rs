use serde::Serialize;

use dig_core::catalog::{Column, QueryResult};

pub const DEFAULT_ROW_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootStatus {
    /// Reduced; rows present unless `error` says why not.
    Query,
    /// Some reachable choice variables are unbound.
    Incomplete,
    /// Bindings under this rule violate a constraint.
    Blocked,
}

/// One page of a starting rule's current result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootResult {
    pub status: RootStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sql: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<Column>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<serde_json::Value>>>,
    /// Rows in the full result.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_count: Option<usize>,
    /// Index of the first row of this page.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RootResult {
    fn empty(status: RootStatus) -> Self {
        RootResult {
            status,
            sql: None,
            missing: Vec::new(),
            columns: None,
            rows: None,
            row_count: None,
            offset: None,
            truncated: false,
            continuation: None,
            error: None,
        }
    }

    pub fn page(sql: &str, r: &QueryResult, offset: usize, cap: usize, generation: u64) -> Self {
        let end = (offset + cap).min(r.rows.len());
        let start = offset.min(end);
        let rows = r.rows[start..end]
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.as_ref().map_or(serde_json::Value::Null, |v| v.to_plain_json()))
                    .collect()
            })
            .collect();
        let truncated = end < r.rows.len();
        RootResult {
            sql: Some(sql.to_string()),
            columns: Some(r.columns.clone()),
            rows: Some(rows),
            row_count: Some(r.rows.len()),
            offset: Some(start),
            truncated,
            continuation: truncated.then(|| format!("{generation}-{end}")),
            ..Self::empty(RootStatus::Query)
        }
    }

    pub fn failed(sql: &str, error: String) -> Self {
        RootResult {
            sql: Some(sql.to_string()),
            error: Some(error),
            ..Self::empty(RootStatus::Query)
        }
    }

    pub fn incomplete(missing: Vec<String>) -> Self {
        RootResult {
            missing,
            ..Self::empty(RootStatus::Incomplete)
        }
    }

    pub fn blocked() -> Self {
        Self::empty(RootStatus::Blocked)
    }
}

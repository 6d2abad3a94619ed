//! Port to the database: run reduced queries, evaluate query domains and
//! answer catalog questions for `rel`/`attr` types.

mod cache;
mod sqlite;

use serde::{Serialize, Serializer};

use crate::error::BackendError;
use crate::value::Value;

pub use cache::{Catalog, DEFAULT_PROBE_THRESHOLD};
pub use sqlite::SqliteBackend;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Attribute {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Relation {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CatalogSnapshot {
    pub relations: Vec<Relation>,
}

impl CatalogSnapshot {
    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn has_attribute(&self, relation: &str, attribute: &str) -> bool {
        self.relation(relation)
            .is_some_and(|r| r.attributes.iter().any(|a| a.name == attribute))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: String,
    /// Declared type as reported by the engine, if any.
    #[serde(rename = "type")]
    pub ty: Option<String>,
}

/// Rows of a query; `None` cells are SQL NULLs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub columns: Vec<Column>,
    #[serde(serialize_with = "plain_rows")]
    pub rows: Vec<Vec<Option<Value>>>,
    pub row_count: usize,
}

fn plain_rows<S: Serializer>(rows: &[Vec<Option<Value>>], s: S) -> Result<S::Ok, S::Error> {
    let plain: Vec<Vec<serde_json::Value>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|c| c.as_ref().map_or(serde_json::Value::Null, Value::to_plain_json))
                .collect()
        })
        .collect();
    plain.serialize(s)
}

impl QueryResult {
    /// Rows as domain values: one column yields scalars, several yield
    /// tuples. Rows containing NULL are dropped.
    pub fn into_values(self) -> Vec<Value> {
        let single = self.columns.len() == 1;
        self.rows
            .into_iter()
            .filter_map(|row| {
                let cells: Option<Vec<Value>> = row.into_iter().collect();
                let mut cells = cells?;
                Some(if single {
                    cells.pop().unwrap()
                } else {
                    Value::Tuple(cells)
                })
            })
            .collect()
    }
}

/// A SQL engine. Implementations must be usable from several sessions at
/// once.
pub trait Backend: Send + Sync {
    fn execute(&self, sql: &str) -> Result<QueryResult, BackendError>;

    /// Execute with positional parameters (`?1`, `?2`, ...).
    fn execute_with(&self, sql: &str, params: &[Value]) -> Result<QueryResult, BackendError>;

    fn snapshot_catalog(&self) -> Result<CatalogSnapshot, BackendError>;

    /// Distinct rows of a domain query.
    fn eval_query_domain(&self, sql: &str) -> Result<Vec<Value>, BackendError> {
        let mut values = self.execute(sql)?.into_values();
        values.sort();
        values.dedup();
        Ok(values)
    }
}

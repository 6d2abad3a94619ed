use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{Backend, CatalogSnapshot, QueryResult};
use crate::error::BackendError;
use crate::value::Value;

/// Domains larger than this are checked with a probe query instead of being
/// pulled client-side.
pub const DEFAULT_PROBE_THRESHOLD: usize = 10_000;

#[derive(Clone)]
enum Domain {
    Materialized(Arc<Vec<Value>>),
    Large { size: usize, columns: Vec<String> },
}

/// A backend plus cached query domains and catalog snapshot. Caches live
/// until [`invalidate`](Catalog::invalidate) is called.
pub struct Catalog {
    backend: Arc<dyn Backend>,
    probe_threshold: usize,
    domains: Mutex<HashMap<String, Domain>>,
    snapshot: Mutex<Option<Arc<CatalogSnapshot>>>,
}

impl Catalog {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Catalog {
            backend,
            probe_threshold: DEFAULT_PROBE_THRESHOLD,
            domains: Mutex::new(HashMap::new()),
            snapshot: Mutex::new(None),
        }
    }

    pub fn with_probe_threshold(mut self, threshold: usize) -> Self {
        self.probe_threshold = threshold;
        self
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn execute(&self, sql: &str) -> Result<QueryResult, BackendError> {
        self.backend.execute(sql)
    }

    pub fn invalidate(&self) {
        self.domains.lock().unwrap().clear();
        *self.snapshot.lock().unwrap() = None;
    }

    pub fn snapshot(&self) -> Result<Arc<CatalogSnapshot>, BackendError> {
        let mut slot = self.snapshot.lock().unwrap();
        if let Some(s) = slot.as_ref() {
            return Ok(s.clone());
        }
        let s = Arc::new(self.backend.snapshot_catalog()?);
        *slot = Some(s.clone());
        Ok(s)
    }

    fn domain(&self, sql: &str) -> Result<Domain, BackendError> {
        if let Some(d) = self.domains.lock().unwrap().get(sql) {
            return Ok(d.clone());
        }
        let size = self
            .backend
            .execute(&format!("SELECT count(*) FROM (SELECT DISTINCT * FROM ({sql}))"))?
            .rows
            .first()
            .and_then(|r| r[0].as_ref().and_then(Value::as_int))
            .unwrap_or(0) as usize;
        let d = if size > self.probe_threshold {
            let columns = self
                .backend
                .execute(&format!("SELECT * FROM ({sql}) LIMIT 0"))?
                .columns
                .into_iter()
                .map(|c| c.name)
                .collect();
            Domain::Large { size, columns }
        } else {
            Domain::Materialized(Arc::new(self.backend.eval_query_domain(sql)?))
        };
        self.domains.lock().unwrap().insert(sql.to_string(), d.clone());
        Ok(d)
    }

    pub fn domain_size(&self, sql: &str) -> Result<usize, BackendError> {
        Ok(match self.domain(sql)? {
            Domain::Materialized(v) => v.len(),
            Domain::Large { size, .. } => size,
        })
    }

    /// All distinct values of a query domain, sorted.
    pub fn domain_values(&self, sql: &str) -> Result<Arc<Vec<Value>>, BackendError> {
        match self.domain(sql)? {
            Domain::Materialized(v) => Ok(v),
            Domain::Large { .. } => Ok(Arc::new(self.backend.eval_query_domain(sql)?)),
        }
    }

    /// Membership test; values match by equality or by identical rendering
    /// (so `'2024-01-05'` finds a DATE cell).
    pub fn domain_contains(&self, sql: &str, value: &Value) -> Result<bool, BackendError> {
        match self.domain(sql)? {
            Domain::Materialized(vals) => Ok(find_in(&vals, value).is_some()),
            Domain::Large { columns, .. } => {
                let parts: Vec<Value> = match value {
                    Value::Tuple(items) => items.clone(),
                    v => vec![v.clone()],
                };
                if parts.len() != columns.len() {
                    return Ok(false);
                }
                let cond: Vec<String> = columns
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("\"{}\" = ?{}", c.replace('"', "\"\""), i + 1))
                    .collect();
                let probe = format!(
                    "SELECT EXISTS (SELECT 1 FROM ({sql}) WHERE {})",
                    cond.join(" AND ")
                );
                let r = self.backend.execute_with(&probe, &parts)?;
                Ok(r.rows.first().and_then(|row| row[0].as_ref()) == Some(&Value::Int(1)))
            }
        }
    }

    /// The domain element equal to `value`, for normalising user input.
    pub fn domain_member(&self, sql: &str, value: &Value) -> Result<Option<Value>, BackendError> {
        match self.domain(sql)? {
            Domain::Materialized(vals) => Ok(find_in(&vals, value).cloned()),
            Domain::Large { .. } => Ok(self.domain_contains(sql, value)?.then(|| value.clone())),
        }
    }

    pub fn has_relation(&self, name: &str) -> Result<bool, BackendError> {
        Ok(self.snapshot()?.relation(name).is_some())
    }

    pub fn has_attribute(&self, relation: &str, attribute: &str) -> Result<bool, BackendError> {
        Ok(self.snapshot()?.has_attribute(relation, attribute))
    }
}

fn find_in<'a>(vals: &'a [Value], v: &Value) -> Option<&'a Value> {
    if let Ok(i) = vals.binary_search(v) {
        return Some(&vals[i]);
    }
    let text = v.to_string();
    vals.iter().find(|x| x.to_string() == text)
}

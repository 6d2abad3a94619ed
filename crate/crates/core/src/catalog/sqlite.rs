use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};

use super::{Attribute, Backend, CatalogSnapshot, Column, QueryResult, Relation};
use crate::error::BackendError;
use crate::value::{parse_date, Value};

/// Embedded SQLite engine. Statements are serialized on one connection.
pub struct SqliteBackend {
    conn: Mutex<Connection>,
    timeout: Option<Duration>,
}

impl SqliteBackend {
    pub fn open_in_memory() -> Result<Self, BackendError> {
        Connection::open_in_memory()
            .map(Self::from_connection)
            .map_err(sql_err)
    }

    /// Open a database file, or `:memory:`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        if path.as_os_str() == ":memory:" {
            return Self::open_in_memory();
        }
        Connection::open_with_flags(
            path,
            OpenFlags::SQLITE_OPEN_READ_WRITE | OpenFlags::SQLITE_OPEN_CREATE,
        )
        .map(Self::from_connection)
        .map_err(sql_err)
    }

    /// In-memory database initialised from SQL scripts.
    pub fn with_scripts(scripts: &[&str]) -> Result<Self, BackendError> {
        let db = Self::open_in_memory()?;
        for s in scripts {
            db.run_script(s)?;
        }
        Ok(db)
    }

    fn from_connection(conn: Connection) -> Self {
        SqliteBackend {
            conn: Mutex::new(conn),
            timeout: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn run_script(&self, sql: &str) -> Result<(), BackendError> {
        self.conn.lock().unwrap().execute_batch(sql).map_err(sql_err)
    }

    fn run(&self, sql: &str, params: &[Value]) -> Result<QueryResult, BackendError> {
        let conn = self.conn.lock().unwrap();
        let deadline = self.timeout.map(|t| (Instant::now() + t, t));
        if let Some((deadline, _)) = deadline {
            conn.progress_handler(1000, Some(move || Instant::now() > deadline))
                .map_err(sql_err)?;
        }
        let result = query(&conn, sql, params);
        if deadline.is_some() {
            conn.progress_handler(0, None::<fn() -> bool>).map_err(sql_err)?;
        }
        result.map_err(|e| match (e, deadline) {
            (rusqlite::Error::SqliteFailure(f, _), Some((_, t)))
                if f.code == rusqlite::ErrorCode::OperationInterrupted =>
            {
                BackendError::Timeout(t.as_millis() as u64)
            }
            (e, _) => sql_err(e),
        })
    }
}

fn query(conn: &Connection, sql: &str, params: &[Value]) -> rusqlite::Result<QueryResult> {
    let mut stmt = conn.prepare(sql)?;
    let columns: Vec<Column> = stmt
        .columns()
        .iter()
        .map(|c| Column {
            name: c.name().to_string(),
            ty: c.decl_type().map(str::to_string),
        })
        .collect();
    let dates: Vec<bool> = columns
        .iter()
        .map(|c| c.ty.as_deref().is_some_and(|t| t.eq_ignore_ascii_case("date")))
        .collect();
    let bound: Vec<Box<dyn rusqlite::ToSql>> = params.iter().map(to_sql).collect();
    let refs: Vec<&dyn rusqlite::ToSql> = bound.iter().map(|b| b.as_ref()).collect();
    let mut rows = stmt.query(refs.as_slice())?;
    let mut out = Vec::new();
    while let Some(row) = rows.next()? {
        let mut cells = Vec::with_capacity(columns.len());
        for (i, &is_date) in dates.iter().enumerate() {
            cells.push(from_sql(row.get_ref(i)?, is_date));
        }
        out.push(cells);
    }
    Ok(QueryResult {
        row_count: out.len(),
        columns,
        rows: out,
    })
}

fn to_sql(v: &Value) -> Box<dyn rusqlite::ToSql> {
    match v {
        Value::Bool(b) => Box::new(*b),
        Value::Int(i) => Box::new(*i),
        Value::Float(f) => Box::new(*f),
        Value::Str(s) => Box::new(s.clone()),
        Value::Date(d) => Box::new(d.format("%Y-%m-%d").to_string()),
        Value::Tuple(_) => Box::new(v.to_string()),
    }
}

fn from_sql(v: ValueRef<'_>, is_date: bool) -> Option<Value> {
    match v {
        ValueRef::Null => None,
        ValueRef::Integer(i) => Some(Value::Int(i)),
        ValueRef::Real(f) => Some(Value::Float(f)),
        ValueRef::Text(t) => {
            let s = String::from_utf8_lossy(t).into_owned();
            match is_date.then(|| parse_date(&s)).flatten() {
                Some(d) => Some(Value::Date(d)),
                None => Some(Value::Str(s)),
            }
        }
        ValueRef::Blob(b) => Some(Value::Str(String::from_utf8_lossy(b).into_owned())),
    }
}

fn sql_err(e: rusqlite::Error) -> BackendError {
    BackendError::Sql(e.to_string())
}

impl Backend for SqliteBackend {
    fn execute(&self, sql: &str) -> Result<QueryResult, BackendError> {
        self.run(sql, &[])
    }

    fn execute_with(&self, sql: &str, params: &[Value]) -> Result<QueryResult, BackendError> {
        self.run(sql, params)
    }

    fn snapshot_catalog(&self) -> Result<CatalogSnapshot, BackendError> {
        let names = self.run(
            "SELECT name FROM sqlite_master WHERE type IN ('table', 'view') \
             AND name NOT LIKE 'sqlite_%' ORDER BY name",
            &[],
        )?;
        let mut relations = Vec::new();
        for name in names.into_values() {
            let name = name.to_string();
            let info = self.run(
                "SELECT name, type FROM pragma_table_info(?1) ORDER BY cid",
                &[Value::Str(name.clone())],
            )?;
            let attributes = info
                .rows
                .into_iter()
                .map(|row| Attribute {
                    name: row[0].as_ref().map(ToString::to_string).unwrap_or_default(),
                    ty: row[1].as_ref().map(ToString::to_string).unwrap_or_default(),
                })
                .collect();
            relations.push(Relation { name, attributes });
        }
        Ok(CatalogSnapshot { relations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_one() {
        let db = SqliteBackend::open_in_memory().unwrap();
        let r = db.execute("SELECT 1").unwrap();
        assert_eq!(r.rows, vec![vec![Some(Value::Int(1))]]);
    }

    #[test]
    fn malformed_sql_is_a_backend_error() {
        let db = SqliteBackend::open_in_memory().unwrap();
        assert!(matches!(db.execute("SELEC 1"), Err(BackendError::Sql(_))));
    }

    #[test]
    fn timeout_interrupts_long_queries() {
        let db = SqliteBackend::open_in_memory()
            .unwrap()
            .with_timeout(Duration::from_millis(20));
        let slow = "WITH RECURSIVE n(i) AS (SELECT 0 UNION ALL SELECT i + 1 FROM n) \
                    SELECT count(*) FROM n";
        assert!(matches!(db.execute(slow), Err(BackendError::Timeout(20))));
        assert!(db.execute("SELECT 2").is_ok());
    }

    #[test]
    fn date_columns_become_dates() {
        let db = SqliteBackend::with_scripts(&[
            "CREATE TABLE t (d DATE); INSERT INTO t VALUES ('2024-01-05');",
        ])
        .unwrap();
        let vals = db.eval_query_domain("SELECT d FROM t").unwrap();
        assert_eq!(vals, vec![Value::Date(parse_date("2024-01-05").unwrap())]);
    }
}

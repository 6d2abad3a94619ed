//! Grammars, dbt projects and SQL scripts shipped with the crate, embedded
//! so tests, benches and the CLI can use them without touching the disk.

pub const DROUGHT: &str = include_str!("../fixtures/drought.dig");
/// The drought interface with an executable select list.
pub const DROUGHT_EXEC: &str = include_str!("../fixtures/drought_exec.dig");
pub const CROSSFILTER: &str = include_str!("../fixtures/crossfilter.dig");
pub const QUERYBUILDER: &str = include_str!("../fixtures/querybuilder.dig");
pub const PREDICATES: &str = include_str!("../fixtures/predicates.dig");
pub const PRODUCTS: &str = include_str!("../fixtures/products.dig");
pub const USERS: &str = include_str!("../fixtures/users.dig");

pub const DROUGHT_SQL: &str = include_str!("../fixtures/sql/drought.sql");
pub const FLIGHTS_SQL: &str = include_str!("../fixtures/sql/flights.sql");
pub const PRODUCTS_SQL: &str = include_str!("../fixtures/sql/products.sql");
pub const USERS_SQL: &str = include_str!("../fixtures/sql/users.sql");
pub const SALES_SQL: &str = include_str!("../fixtures/sql/sales.sql");

/// All grammar fixtures by name.
pub const GRAMMARS: &[(&str, &str)] = &[
    ("drought", DROUGHT),
    ("drought_exec", DROUGHT_EXEC),
    ("crossfilter", CROSSFILTER),
    ("querybuilder", QUERYBUILDER),
    ("predicates", PREDICATES),
    ("products", PRODUCTS),
    ("users", USERS),
];

/// Directory holding the on-disk fixtures (dbt projects in particular).
pub fn dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

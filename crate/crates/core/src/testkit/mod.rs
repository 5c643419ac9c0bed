//! Fixtures, a random program generator and brute-force oracles for
//! checking the analyses.

pub mod gen;
pub mod interp;
pub mod oracle;

use std::path::PathBuf;

pub use gen::{generate_large, generate_program};
pub use interp::{interpret, ConcreteState, Timeout, Value};
pub use oracle::{control_dependence_bruteforce, oracle_privilege_paths, oracle_taint, reaching_stores};

/// A stored example program with its rules and expected report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub name: String,
    pub ir: String,
    pub rules: Option<String>,
    pub expected: Option<String>,
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_path(name: &str, ext: &str) -> PathBuf {
    fixtures_dir().join(format!("{name}.{ext}"))
}

/// Loads `NAME.tir` with its optional `NAME.rules` and `NAME.expected.tsv`.
pub fn load_fixture(name: &str) -> std::io::Result<Fixture> {
    let opt = |ext: &str| std::fs::read_to_string(fixture_path(name, ext)).ok();
    Ok(Fixture {
        name: name.to_string(),
        ir: std::fs::read_to_string(fixture_path(name, "tir"))?,
        rules: opt("rules"),
        expected: opt("expected.tsv"),
    })
}

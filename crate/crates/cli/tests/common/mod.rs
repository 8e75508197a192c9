#![allow(dead_code)]

use std::path::PathBuf;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Shell command starting the test oracle in `mode`.
pub fn oracle_cmd(mode: &str) -> String {
    format!("python3 {} {mode}", fixture("oracle.py").display())
}

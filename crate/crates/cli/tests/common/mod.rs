#![allow(dead_code)]

use std::path::{Path, PathBuf};

use audit_core::scenario::{default_scenario, Scenario};

/// Writes `scenario` to `dir/scenario.json` and returns the path.
pub fn write_scenario(dir: &Path, scenario: &Scenario) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, scenario.to_canonical_json()).unwrap();
    p
}

/// Default scenario cut down to two pairs and two short days.
pub fn small_scenario() -> Scenario {
    let mut s = default_scenario();
    s.pairs.truncate(2);
    s.session.days = 2;
    s.session.budget_s = 900.0;
    s
}

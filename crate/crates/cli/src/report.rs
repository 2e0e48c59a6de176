// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Benchmark reports: a JSON summary and a CSV point table.
//!
//! Maps are ordered and floats use the shortest round-trip form, so a
//! report is a pure function of the benchmark, its configuration and the
//! seed. No timestamps or host details are written.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use m2cs_backplane::chassis::EMULATOR_VERSION;
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: &str = "m2cs-report/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
    pub pass: bool,
}

impl Check {
    pub fn within(name: &str, value: f64, min: f64, max: f64) -> Check {
        Check {
            name: name.to_string(),
            value,
            min,
            max,
            pass: value >= min && value <= max,
        }
    }

    pub fn near(name: &str, value: f64, target: f64, tol: f64) -> Check {
        Check::within(name, value, target - tol, target + tol)
    }

    pub fn at_most(name: &str, value: f64, max: f64) -> Check {
        Check::within(name, value, f64::NEG_INFINITY, max)
    }

    pub fn at_least(name: &str, value: f64, min: f64) -> Check {
        Check::within(name, value, min, f64::INFINITY)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub benchmark: String,
    pub emulator_version: &'static str,
    pub seed: u64,
    pub parameters: BTreeMap<String, Value>,
    pub fitted: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub table: Table,
    pub table_rows: usize,
}

impl Report {
    pub fn new(benchmark: &str, seed: u64, parameters: &BTreeMap<String, Value>) -> Report {
        Report {
            schema: SCHEMA_VERSION,
            benchmark: benchmark.to_string(),
            emulator_version: EMULATOR_VERSION,
            seed,
            parameters: parameters.clone(),
            fitted: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
            table: Table::default(),
            table_rows: 0,
        }
    }

    pub fn fit(&mut self, name: &str, value: f64) -> &mut Self {
        self.fitted.insert(name.to_string(), value);
        self
    }

    pub fn check(&mut self, c: Check) -> &mut Self {
        self.passed &= c.pass;
        self.checks.push(c);
        self
    }

    pub fn set_table(&mut self, t: Table) {
        self.table_rows = t.rows.len();
        self.table = t;
    }

    pub fn check_value(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is plain data");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.table.columns).expect("in-memory write");
        for row in &self.table.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }

    /// Writes `<dir>/<benchmark>.json` and `.csv`; returns the JSON path.
    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let json = dir.join(format!("{}.json", self.benchmark));
        fs::write(&json, self.to_json())?;
        fs::write(dir.join(format!("{}.csv", self.benchmark)), self.to_csv())?;
        Ok(json)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} (seed {}): {}\n",
            self.benchmark,
            self.seed,
            if self.passed { "PASS" } else { "FAIL" }
        );
        for (k, v) in &self.fitted {
            s += &format!("  {k} = {v}\n");
        }
        for c in &self.checks {
            s += &format!(
                "  [{}] {} = {} in [{}, {}]\n",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.value,
                c.min,
                c.max
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_csv_are_stable() {
        let mut p = BTreeMap::new();
        p.insert("shots".to_string(), Value::from(300));
        p.insert("freq-mhz".to_string(), Value::from(30.5));
        let mut r = Report::new("demo", 9, &p);
        r.fit("tau_us", 128.7)
            .check(Check::near("tau_us", 128.7, 128.7, 3.861))
            .check(Check::at_most("x", 2.0, 1.0));
        let mut t = Table::new(&["t_us", "p1"]);
        t.push(vec![0.0, 0.99]);
        t.push(vec![10.5, 0.5]);
        r.set_table(t);
        assert!(!r.passed);
        let a = r.to_json();
        assert_eq!(a, r.clone().to_json());
        assert!(a.find("\"freq-mhz\"").unwrap() < a.find("\"shots\"").unwrap());
        assert!(a.contains("\"min\": null"), "infinite bounds serialize as null");
        assert_eq!(String::from_utf8(r.to_csv()).unwrap(), "t_us,p1\n0,0.99\n10.5,0.5\n");
    }
}

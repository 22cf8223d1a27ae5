//! CSV and JSON writers with fixed formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use equilibria_core::paths::PathGrid;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// 17 significant digits.
pub fn number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rows `t,asset,value` for every node and component.
pub fn path_csv(path: &PathGrid) -> String {
    let grid = path.grid();
    let mut out = String::from("t,asset,value\n");
    for k in 0..path.len() {
        let t = number(grid.node(k));
        for (i, v) in path.at(k).iter().enumerate() {
            writeln!(out, "{t},{i},{}", number(*v)).expect("string write");
        }
    }
    out
}

/// Files collected in memory and written together once every computation succeeded.
#[derive(Debug, Default)]
pub struct Bundle {
    files: Vec<(String, String)>,
}

impl Bundle {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn add_path(&mut self, name: impl Into<String>, path: &PathGrid) {
        self.add(name, path_csv(path));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.add(name, text);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        self.files
            .iter()
            .map(|(name, contents)| {
                let path = dir.join(name);
                fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use equilibria_core::model::TimeGrid;
    use nalgebra::DVector;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(number(0.1), "1.0000000000000001e-1");
        assert_eq!(number(-2.0), "-2.0000000000000000e0");
        let parsed: f64 = number(std::f64::consts::PI).parse().unwrap();
        assert_eq!(parsed, std::f64::consts::PI);
    }

    #[test]
    fn csv_layout() {
        let grid = TimeGrid::new(1, 1.0).unwrap();
        let p = PathGrid::from_fn(grid, |k, _| DVector::from_vec(vec![k as f64, 1.0]));
        let csv = path_csv(&p);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "t,asset,value");
        assert!(lines[4].starts_with("1.0000000000000000e0,1,"));
    }
}

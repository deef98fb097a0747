//! Deterministic CSV and JSON emission. Floats are written with 17
//! significant digits so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dephasing::linalg::CMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where an output came from: the command and a hash of its configuration.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(command: &str, config_text: &str) -> Self {
        let digest = Sha256::digest(config_text.as_bytes());
        let hex = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        Provenance { command: command.into(), config_sha256: hex }
    }

    fn comment(&self) -> String {
        format!("# dephasing {VERSION} command={} config-sha256={}", self.command, self.config_sha256)
    }
}

pub enum Cell {
    F(f64),
    U(usize),
    B(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::F)
    }
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(prov: &Provenance, header: &[&str]) -> Self {
        Csv { text: format!("{}\n{}\n", prov.comment(), header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::F(x) => fmt_f64(x),
                Cell::U(x) => x.to_string(),
                Cell::B(x) => x.to_string(),
                Cell::Empty => String::new(),
            })
            .collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Complex matrix as rows of `[re, im]` pairs.
pub fn matrix_json(m: &CMatrix<f64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    generator: String,
    command: &'a str,
    config_sha256: &'a str,
    data: T,
}

pub struct OutDir {
    root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Write { path: root.display().to_string(), source })?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    fn put(&mut self, name: &str, text: String) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, text).map_err(|source| CliError::Write { path: path.display().to_string(), source })?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, csv: Csv) -> Result<()> {
        self.put(name, csv.into_string())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, prov: &Provenance, data: T) -> Result<()> {
        let doc = JsonDoc {
            generator: format!("dephasing {VERSION}"),
            command: &prov.command,
            config_sha256: &prov.config_sha256,
            data,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("output types serialize");
        text.push('\n');
        self.put(name, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn csv_has_one_comment_and_one_header() {
        let prov = Provenance::new("rates", "{}");
        let mut csv = Csv::new(&prov, &["t", "diverged"]);
        csv.row(vec![0.5.into(), true.into()]);
        let text = csv.into_string();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# dephasing ") && lines[0].contains(&prov.config_sha256));
        assert_eq!(lines[1], "t,diverged");
        assert_eq!(lines[2], "5.0000000000000000e-1,true");
        assert_eq!(prov.config_sha256.len(), 64);
    }
}

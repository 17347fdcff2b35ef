use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of the canonical JSON form of the effective configuration.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub enum Cell {
    Int(usize),
    Num(f64),
    Bool(bool),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, hash: &str, seed: Option<u64>) -> String {
        let mut s = format!("# config_hash={hash}");
        if let Some(seed) = seed {
            s.push_str(&format!(" seed={seed}"));
        }
        s.push('\n');
        s.push_str(&self.header.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(v) => v.to_string(),
                    Cell::Num(v) => fmt_num(*v),
                    Cell::Bool(v) => v.to_string(),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target).with_context(|| format!("renaming into {}", target.display()))?;
    Ok(target)
}

pub fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e17] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new(vec!["n", "x", "ok"]);
        t.push(vec![1usize.into(), 0.5.into(), true.into()]);
        let s = t.render("abc", Some(7));
        assert_eq!(s, "# config_hash=abc seed=7\nn,x,ok\n1,5.0000000000000000e-1,true\n");
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&serde_json::json!({"a": 1, "b": [1.5]})).unwrap();
        let b = config_hash(&serde_json::json!({"a": 1, "b": [1.5]})).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}

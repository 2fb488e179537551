//! Records, datasets, and their on-disk format.
//!
//! A dataset is stored as a directory containing `data.csv` (columnar text,
//! header `x_z_0..,x_a_0..,a,z,y`) and `meta.json` (provenance, seed, and the
//! append-only injection history). Serialization is byte-deterministic:
//! the same config and seed always produce identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scm::ScmConfig;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset file: {0}")]
    Malformed(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Whether feature columns hold categorical codes or real values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical,
    Continuous,
}

/// One observation. `z` is the latent condition, present only for
/// synthetic data where the ground truth is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x_z: Vec<f64>,
    pub x_a: Vec<f64>,
    pub a: u8,
    pub z: Option<u8>,
    pub y: u8,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Scm(ScmConfig),
    Ingest { description: String },
}

/// One applied bias injection, recorded in order of application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionEvent {
    pub kind: String,
    pub target_group: u8,
    pub rate: f64,
    pub severity: f64,
    pub seed: u64,
    pub affected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub feature_kind: FeatureKind,
    pub provenance: Provenance,
    pub injection_history: Vec<InjectionEvent>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn d_z(&self) -> usize {
        self.records.first().map_or(0, |r| r.x_z.len())
    }

    pub fn d_a(&self) -> usize {
        self.records.first().map_or(0, |r| r.x_a.len())
    }

    /// Full feature vector (x_z followed by x_a) of record `i`.
    pub fn features(&self, i: usize) -> Vec<f64> {
        let r = &self.records[i];
        let mut v = Vec::with_capacity(r.x_z.len() + r.x_a.len());
        v.extend_from_slice(&r.x_z);
        v.extend_from_slice(&r.x_a);
        v
    }

    pub fn has_group(&self, a: u8) -> bool {
        self.records.iter().any(|r| r.a == a)
    }

    pub fn has_class(&self, y: u8) -> bool {
        self.records.iter().any(|r| r.y == y)
    }

    /// Writes `data.csv` and `meta.json` into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir)?;
        let mut csv = String::new();
        let d_z = self.d_z();
        let d_a = self.d_a();
        let mut header = Vec::new();
        for i in 0..d_z {
            header.push(format!("x_z_{i}"));
        }
        for i in 0..d_a {
            header.push(format!("x_a_{i}"));
        }
        header.extend(["a".into(), "z".into(), "y".into()]);
        csv.push_str(&header.join(","));
        csv.push('\n');
        for r in &self.records {
            let mut row = String::new();
            for v in r.x_z.iter().chain(r.x_a.iter()) {
                let _ = write!(row, "{v},");
            }
            let _ = write!(row, "{},", r.a);
            match r.z {
                Some(z) => {
                    let _ = write!(row, "{z},");
                }
                None => row.push(','),
            }
            let _ = write!(row, "{}", r.y);
            csv.push_str(&row);
            csv.push('\n');
        }
        fs::write(dir.join("data.csv"), csv)?;
        let meta = serde_json::json!({
            "feature_kind": self.feature_kind,
            "provenance": self.provenance,
            "injection_history": self.injection_history,
            "seed": self.seed,
            "d_z": d_z,
            "d_a": d_a,
        });
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        let feature_kind: FeatureKind = serde_json::from_value(meta["feature_kind"].clone())?;
        let provenance: Provenance = serde_json::from_value(meta["provenance"].clone())?;
        let injection_history: Vec<InjectionEvent> =
            serde_json::from_value(meta["injection_history"].clone())?;
        let seed = meta["seed"]
            .as_u64()
            .ok_or_else(|| DataError::Malformed("missing seed".into()))?;
        let d_z = meta["d_z"].as_u64().unwrap_or(0) as usize;
        let d_a = meta["d_a"].as_u64().unwrap_or(0) as usize;

        let text = fs::read_to_string(dir.join("data.csv"))?;
        let mut lines = text.lines();
        let _header = lines
            .next()
            .ok_or_else(|| DataError::Malformed("empty data.csv".into()))?;
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != d_z + d_a + 3 {
                return Err(DataError::Malformed(format!(
                    "row {}: expected {} columns, got {}",
                    lineno + 2,
                    d_z + d_a + 3,
                    cols.len()
                )));
            }
            let parse = |s: &str| -> Result<f64, DataError> {
                s.parse()
                    .map_err(|_| DataError::Malformed(format!("bad number {s:?}")))
            };
            let x_z = cols[..d_z].iter().map(|s| parse(s)).collect::<Result<_, _>>()?;
            let x_a = cols[d_z..d_z + d_a]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_, _>>()?;
            let a = parse(cols[d_z + d_a])? as u8;
            let z = if cols[d_z + d_a + 1].is_empty() {
                None
            } else {
                Some(parse(cols[d_z + d_a + 1])? as u8)
            };
            let y = parse(cols[d_z + d_a + 2])? as u8;
            records.push(Record { x_z, x_a, a, z, y });
        }
        Ok(Dataset {
            records,
            feature_kind,
            provenance,
            injection_history,
            seed,
        })
    }
}

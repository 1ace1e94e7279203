//! Instance file format: a JSON object
//! `{"horizon": T, "stages": [{"n", "m", "realizations": [{"p", "A", "B", "c", "b"}]}]}`
//! with dense row-major matrices. Unknown fields are rejected; finite
//! decimal values round-trip exactly (shortest round-trip float printing).

use crate::linalg::SparseMat;
use crate::model::{MslpInstance, StageRealization};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid instance data: {0}")]
    Semantic(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileInstance {
    horizon: usize,
    stages: Vec<FileStage>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileStage {
    n: usize,
    m: usize,
    realizations: Vec<FileRealization>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRealization {
    p: f64,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b_coupling: Vec<Vec<f64>>,
    c: Vec<f64>,
    b: Vec<f64>,
}

pub fn save_instance(instance: &MslpInstance, path: &Path) -> Result<(), ParseError> {
    let file = FileInstance {
        horizon: instance.horizon(),
        stages: instance
            .stages
            .iter()
            .enumerate()
            .map(|(s, reals)| FileStage {
                n: instance.dims[s].0,
                m: instance.dims[s].1,
                realizations: reals
                    .iter()
                    .map(|r| FileRealization {
                        p: r.prob,
                        a: r.mat_a.to_dense(),
                        b_coupling: r.mat_b.to_dense(),
                        c: r.cost.clone(),
                        b: r.rhs.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| ParseError::Semantic(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| ParseError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_instance(path: &Path) -> Result<MslpInstance, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    load_instance_str(&text)
}

pub fn load_instance_str(text: &str) -> Result<MslpInstance, ParseError> {
    let file: FileInstance = serde_json::from_str(text).map_err(|e| ParseError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.stages.len() != file.horizon {
        return Err(ParseError::Semantic(format!(
            "horizon is {} but {} stages are given",
            file.horizon,
            file.stages.len()
        )));
    }
    let mut stages = Vec::with_capacity(file.horizon);
    for (s, fs) in file.stages.iter().enumerate() {
        let n_prev = if s == 0 {
            0
        } else {
            file.stages[s - 1].n
        };
        let mut reals = Vec::with_capacity(fs.realizations.len());
        for (j, fr) in fs.realizations.iter().enumerate() {
            let ctx = |what: &str| format!("stage {} realization {j}: {what}", s + 1);
            if fr.a.len() != fs.m || fr.a.iter().any(|row| row.len() != fs.n) {
                return Err(ParseError::Semantic(ctx(&format!(
                    "A must be {}x{}",
                    fs.m, fs.n
                ))));
            }
            if fr.b_coupling.len() != fs.m
                || fr.b_coupling.iter().any(|row| row.len() != n_prev)
            {
                return Err(ParseError::Semantic(ctx(&format!(
                    "B must be {}x{n_prev}",
                    fs.m
                ))));
            }
            if fr.c.len() != fs.n {
                return Err(ParseError::Semantic(ctx(&format!(
                    "c must have {} entries",
                    fs.n
                ))));
            }
            if fr.b.len() != fs.m {
                return Err(ParseError::Semantic(ctx(&format!(
                    "b must have {} entries",
                    fs.m
                ))));
            }
            reals.push(StageRealization {
                mat_a: dense_to_sparse(&fr.a, fs.m, fs.n),
                mat_b: dense_to_sparse(&fr.b_coupling, fs.m, n_prev),
                cost: fr.c.clone(),
                rhs: fr.b.clone(),
                prob: fr.p,
            });
        }
        stages.push(reals);
    }
    Ok(MslpInstance::new(stages))
}

fn dense_to_sparse(rows: &[Vec<f64>], m: usize, n: usize) -> SparseMat {
    if rows.is_empty() || n == 0 {
        return SparseMat::zeros(m, n);
    }
    SparseMat::from_dense(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_inventory_instance, InventoryConfig};

    #[test]
    fn roundtrip_preserves_structure() {
        let (inst, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 2, 13)).unwrap();
        let dir = std::env::temp_dir().join("mspduals_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("inst.json");
        save_instance(&inst, &path).unwrap();
        let loaded = load_instance(&path).unwrap();
        assert_eq!(inst.horizon(), loaded.horizon());
        assert_eq!(inst.dims, loaded.dims);
        for s in 0..inst.horizon() {
            for (a, b) in inst.stages[s].iter().zip(&loaded.stages[s]) {
                assert_eq!(a.prob.to_bits(), b.prob.to_bits());
                assert_eq!(a.cost, b.cost);
                assert_eq!(a.rhs, b.rhs);
                assert_eq!(a.mat_a, b.mat_a);
                assert_eq!(a.mat_b, b.mat_b);
            }
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn missing_horizon_is_named() {
        let err = load_instance_str(r#"{"stages": []}"#).unwrap_err();
        match err {
            ParseError::Json { message, .. } => assert!(message.contains("horizon")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = load_instance_str(r#"{"horizon": 0, "stages": [], "extra": 1}"#).unwrap_err();
        match err {
            ParseError::Json { message, .. } => assert!(message.contains("extra")),
            other => panic!("unexpected {other:?}"),
        }
    }
}

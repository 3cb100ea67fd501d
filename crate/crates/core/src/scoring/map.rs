//! Per-voxel score maps and their CSV + JSON sidecar files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Brain,
    Ceiling,
    Memory,
    Tuning,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Brain => "brain",
            ScoreKind::Ceiling => "ceiling",
            ScoreKind::Memory => "memory",
            ScoreKind::Tuning => "tuning",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub model_tag: Option<String>,
    pub layer_id: Option<i32>,
    pub story_id: String,
    pub subject_id: Option<String>,
}

/// `None` marks an undefined voxel (zero-variance series, masked ratio).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub kind: ScoreKind,
    pub values: Vec<Option<f64>>,
    pub meta: MapMeta,
}

impl ScoreMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().filter_map(|v| *v)
    }

    pub fn defined_count(&self) -> usize {
        self.defined().count()
    }

    /// Mean over defined voxels.
    pub fn mean(&self) -> Option<f64> {
        let n = self.defined_count();
        (n > 0).then(|| self.defined().sum::<f64>() / n as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        out.push_str("voxel_index,score,defined\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = match v {
                Some(s) => writeln!(out, "{i},{s},1"),
                None => writeln!(out, "{i},nan,0"),
            };
        }
        out
    }

    /// Metadata plus the run configuration that produced the map.
    pub fn sidecar(&self, config: &BTreeMap<String, String>) -> String {
        let side = Sidecar {
            kind: self.kind,
            meta: self.meta.clone(),
            n_voxels: self.len(),
            n_defined: self.defined_count(),
            mean: self.mean(),
            config: config.clone(),
        };
        let mut s = serde_json::to_string_pretty(&side).expect("sidecar serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: ScoreKind,
    #[serde(flatten)]
    pub meta: MapMeta,
    pub n_voxels: usize,
    pub n_defined: usize,
    pub mean: Option<f64>,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

pub fn parse_sidecar(raw: &str) -> Result<Sidecar> {
    serde_json::from_str(raw).map_err(|e| Error::format("score sidecar", e))
}

/// Parses a score CSV. Kind and metadata come from the sidecar when given,
/// otherwise the map is labelled `brain` with empty metadata.
pub fn read_score_csv(raw: &str, sidecar: Option<&Sidecar>) -> Result<ScoreMap> {
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "voxel_index,score,defined" => {}
        _ => return Err(Error::parse(1, "expected header voxel_index,score,defined")),
    }
    let mut values = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(line_no, "expected 3 comma-separated fields"));
        }
        let idx: usize = fields[0].trim().parse().map_err(|_| Error::parse(line_no, "bad voxel index"))?;
        if idx != values.len() {
            return Err(Error::parse(line_no, format!("voxel index {idx} out of sequence")));
        }
        let value = match fields[2].trim() {
            "1" => {
                let s: f64 = fields[1].trim().parse().map_err(|_| Error::parse(line_no, "bad score"))?;
                if !s.is_finite() {
                    return Err(Error::parse(line_no, "defined score is not finite"));
                }
                Some(s)
            }
            "0" => None,
            other => return Err(Error::parse(line_no, format!("defined flag {other:?} is not 0/1"))),
        };
        values.push(value);
    }
    let (kind, meta) = match sidecar {
        Some(s) => {
            if s.n_voxels != values.len() {
                return Err(Error::Shape(format!("sidecar declares {} voxels, CSV has {}", s.n_voxels, values.len())));
            }
            (s.kind, s.meta.clone())
        }
        None => (ScoreKind::Brain, MapMeta::default()),
    };
    Ok(ScoreMap { kind, values, meta })
}

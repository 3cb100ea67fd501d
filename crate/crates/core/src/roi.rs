//! Atlas parcels and per-region aggregation of score maps.
//!
//! Atlas files are TSV `voxel_index hemisphere label` (header optional).
//! Hemisphere is `L` or `R`; `-` marks a voxel as explicitly unmapped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scoring::ScoreMap;

pub const ATLAS_HEADER: &str = "voxel_index\themisphere\tlabel";

/// Destrieux labels of the nine frontal, parietal and temporal study regions.
pub const STUDY_LABELS: [&str; 9] = [
    "S_front_inf",
    "S_front_sup",
    "G_front_middle",
    "G_front_sup",
    "G_pariet_inf-Angular",
    "G_parietal_sup",
    "G_temporal_inf",
    "S_temporal_inf",
    "G_temporal_middle",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hemisphere {
    L,
    R,
}

impl Hemisphere {
    pub fn as_str(self) -> &'static str {
        match self {
            Hemisphere::L => "L",
            Hemisphere::R => "R",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Atlas {
    /// `None` = explicitly unmapped.
    entries: BTreeMap<usize, Option<(Hemisphere, String)>>,
}

impl Atlas {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, voxel: usize, region: Option<(Hemisphere, String)>) -> Result<()> {
        if self.entries.insert(voxel, region).is_some() {
            return Err(Error::Invalid(format!("voxel {voxel} appears twice in atlas")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn region(&self, voxel: usize) -> Option<(Hemisphere, &str)> {
        self.entries
            .get(&voxel)
            .and_then(|e| e.as_ref())
            .map(|(h, l)| (*h, l.as_str()))
    }

    /// Every label that appears in the atlas.
    pub fn labels(&self) -> BTreeSet<&str> {
        self.entries.values().flatten().map(|(_, l)| l.as_str()).collect()
    }

    /// Voxels of one parcel, below `limit`.
    fn members(&self, label: &str, hemi: Hemisphere, limit: usize) -> Vec<usize> {
        self.entries
            .range(..limit)
            .filter(|(_, e)| matches!(e, Some((h, l)) if *h == hemi && l == label))
            .map(|(&v, _)| v)
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(ATLAS_HEADER);
        out.push('\n');
        for (v, e) in &self.entries {
            let _ = match e {
                Some((h, l)) => writeln!(out, "{v}\t{}\t{l}", h.as_str()),
                None => writeln!(out, "{v}\t-\t-"),
            };
        }
        out
    }
}

pub fn load_atlas(raw: &[u8]) -> Result<Atlas> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::parse(0, format!("invalid UTF-8: {e}")))?;
    let mut atlas = Atlas::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (line_no == 1 && line.trim() == ATLAS_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(line_no, "expected 3 tab-separated fields"));
        }
        let voxel: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad voxel index {:?}", fields[0])))?;
        let region = match fields[1].trim() {
            "L" => Some(Hemisphere::L),
            "R" => Some(Hemisphere::R),
            "-" => None,
            other => return Err(Error::parse(line_no, format!("unknown hemisphere code {other:?}"))),
        };
        let region = match region {
            Some(h) => {
                let label = fields[2].trim();
                if label.is_empty() || label == "-" {
                    return Err(Error::parse(line_no, "mapped voxel needs a label"));
                }
                Some((h, label.to_string()))
            }
            None => None,
        };
        atlas
            .insert(voxel, region)
            .map_err(|_| Error::parse(line_no, format!("duplicate voxel {voxel}")))?;
    }
    Ok(atlas)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiRow {
    pub label: String,
    pub hemisphere: Hemisphere,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Atlas voxels in the parcel (within the map's voxel range).
    pub n_voxels: usize,
    pub n_subjects: usize,
}

fn cell_mean(map: &ScoreMap, members: &[usize]) -> Option<f64> {
    let vals: Vec<f64> = members.iter().filter_map(|&v| map.values[v]).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Mean of defined voxels per (label, hemisphere). Voxels missing from the
/// atlas or marked unmapped are skipped.
pub fn roi_mean(map: &ScoreMap, atlas: &Atlas, labels: &[String]) -> Vec<RoiRow> {
    let mut rows = Vec::with_capacity(labels.len() * 2);
    for label in labels {
        for hemi in [Hemisphere::L, Hemisphere::R] {
            let members = atlas.members(label, hemi, map.len());
            rows.push(RoiRow {
                label: label.clone(),
                hemisphere: hemi,
                mean: cell_mean(map, &members),
                ci_low: None,
                ci_high: None,
                n_voxels: members.len(),
                n_subjects: 1,
            });
        }
    }
    rows
}

/// Student-t interval for the mean: `(mean, half_width)`.
pub fn t_interval(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Invalid("confidence interval needs at least 2 values".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!("confidence level {level} outside (0, 1)")));
    }
    let n = values.len() as f64;
    let mean = values
        .iter()
        .enumerate()
        .fold(0.0, |m, (i, &x)| m + (x - m) / (i + 1) as f64);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::Numerical(e.to_string()))?
        .inverse_cdf(0.5 + level / 2.0);
    Ok((mean, t * (var / n).sqrt()))
}

/// Per-cell subject means with Student-t intervals across subjects.
pub fn roi_ci(maps: &[ScoreMap], atlas: &Atlas, labels: &[String], level: f64) -> Result<Vec<RoiRow>> {
    if maps.len() < 2 {
        return Err(Error::Invalid(format!("intervals need at least 2 subjects, got {}", maps.len())));
    }
    let v = maps[0].len();
    if maps.iter().any(|m| m.len() != v) {
        return Err(Error::Shape("subject maps differ in voxel count".into()));
    }
    let mut rows = Vec::with_capacity(labels.len() * 2);
    for label in labels {
        for hemi in [Hemisphere::L, Hemisphere::R] {
            let members = atlas.members(label, hemi, v);
            let subject_means: Vec<f64> = maps.iter().filter_map(|m| cell_mean(m, &members)).collect();
            let (mean, lo, hi) = match subject_means.len() {
                0 => (None, None, None),
                1 => (Some(subject_means[0]), None, None),
                _ => {
                    let (m, h) = t_interval(&subject_means, level)?;
                    (Some(m), Some(m - h), Some(m + h))
                }
            };
            rows.push(RoiRow {
                label: label.clone(),
                hemisphere: hemi,
                mean,
                ci_low: lo,
                ci_high: hi,
                n_voxels: members.len(),
                n_subjects: subject_means.len(),
            });
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

pub fn roi_table_csv(rows: &[RoiRow]) -> String {
    let mut out = String::from("label,hemisphere,mean,ci_low,ci_high,n_voxels,n_subjects\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.label,
            r.hemisphere.as_str(),
            opt(r.mean),
            opt(r.ci_low),
            opt(r.ci_high),
            r.n_voxels,
            r.n_subjects
        );
    }
    out
}

/// One label per non-blank line; `#` starts a comment.
pub fn parse_labels(raw: &str) -> Vec<String> {
    raw.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

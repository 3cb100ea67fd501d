//! Brain scores, noise ceilings, and the derived memory and tuning scores.
//!
//! A brain score is the per-voxel Pearson correlation between held-out
//! ridge predictions and the recorded (subject-averaged) BOLD series. Outer
//! cross-validation runs over contiguous frame blocks; out-of-fold
//! predictions are concatenated and correlated once per voxel.

mod bold;
mod map;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::build_design;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ridge::{contiguous_folds, fit_ridge, PenaltyGrid, RidgeOptions};
use crate::stimulus::Transcript;

pub use bold::{read_bold, write_bold, BoldRun, BOLD_MAGIC, BOLD_VERSION};
pub use map::{parse_sidecar, read_score_csv, MapMeta, ScoreKind, ScoreMap, Sidecar};

pub const GROUP_MEAN_ID: &str = "group-mean";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    /// FIR lags.
    pub lags: usize,
    pub grid: PenaltyGrid,
    /// Outer folds when scoring the subject-averaged series.
    pub outer_folds_pooled: usize,
    /// Outer folds when scoring each subject separately.
    pub outer_folds_subject: usize,
    pub inner_folds: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            lags: 5,
            grid: PenaltyGrid::default(),
            outer_folds_pooled: 20,
            outer_folds_subject: 5,
            inner_folds: 5,
        }
    }
}

/// Mean accumulated as `m += (x - m) / k`, so identical inputs average to
/// themselves exactly.
fn running_mean<'a>(values: impl Iterator<Item = &'a DMatrix<f64>>) -> Option<DMatrix<f64>> {
    let mut acc: Option<DMatrix<f64>> = None;
    for (k, m) in values.enumerate() {
        match acc.as_mut() {
            None => acc = Some(m.clone()),
            Some(a) => {
                let k = (k + 1) as f64;
                a.zip_apply(m, |a, x| *a += (x - *a) / k);
            }
        }
    }
    acc
}

fn check_compatible(runs: &[BoldRun]) -> Result<()> {
    let first = runs.first().ok_or_else(|| Error::Invalid("no BOLD runs".into()))?;
    for r in &runs[1..] {
        if r.values.shape() != first.values.shape() {
            return Err(Error::Shape(format!(
                "run {:?} is {:?}, run {:?} is {:?}",
                r.subject_id,
                r.values.shape(),
                first.subject_id,
                first.values.shape()
            )));
        }
        if r.timeline != first.timeline {
            return Err(Error::Shape(format!("run {:?} has a different frame timeline", r.subject_id)));
        }
        if r.story_id != first.story_id {
            return Err(Error::Shape(format!(
                "run {:?} is story {:?}, expected {:?}",
                r.subject_id, r.story_id, first.story_id
            )));
        }
    }
    Ok(())
}

/// Element-wise mean over subjects of the same story.
pub fn average_subjects(runs: &[BoldRun]) -> Result<BoldRun> {
    check_compatible(runs)?;
    let values = running_mean(runs.iter().map(|r| &r.values)).expect("non-empty");
    Ok(BoldRun {
        subject_id: GROUP_MEAN_ID.to_string(),
        story_id: runs[0].story_id.clone(),
        timeline: runs[0].timeline,
        values,
    })
}

fn exact_mean(xs: &[f64]) -> f64 {
    let mut m = xs[0];
    for (k, &x) in xs.iter().enumerate().skip(1) {
        m += (x - m) / (k + 1) as f64;
    }
    m
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("series lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Invalid("correlation needs at least two samples".into()));
    }
    Ok(pearson_unchecked(a, b))
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (exact_mean(a), exact_mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let floor = |scale: f64| a.len() as f64 * (f64::EPSILON * scale).powi(2);
    let scale_a = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale_b = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if saa <= floor(scale_a) || sbb <= floor(scale_b) {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Correlates matching columns of two `frames × voxels` matrices.
pub fn pearson_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<Option<f64>>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.nrows() < 2 {
        return Err(Error::Invalid("correlation needs at least two samples".into()));
    }
    Ok((0..a.ncols())
        .into_par_iter()
        .map(|j| pearson_unchecked(a.column(j).as_slice(), b.column(j).as_slice()))
        .collect())
}

/// Out-of-fold linear predictions for every frame, from contiguous outer folds.
pub fn cross_validated_predictions(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    outer_folds: usize,
    opts: &RidgeOptions,
) -> Result<DMatrix<f64>> {
    let n = design.nrows();
    if targets.nrows() != n {
        return Err(Error::Shape(format!("design has {n} frames, BOLD has {}", targets.nrows())));
    }
    if outer_folds < 2 || outer_folds > n {
        return Err(Error::Invalid(format!("cannot split {n} frames into {outer_folds} outer folds")));
    }
    let blocks: Vec<DMatrix<f64>> = contiguous_folds(n, outer_folds)
        .into_par_iter()
        .map(|test| {
            let train: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
            let fit = fit_ridge(&design.select_rows(&train), &targets.select_rows(&train), opts)?;
            // The fold's training-mean intercept is left out: it varies from
            // fold to fold and would add a spurious negative correlation once
            // the folds are concatenated.
            fit.predict_linear(&design.rows(test.start, test.len()).clone_owned())
        })
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(n, targets.ncols());
    let mut row = 0;
    for b in blocks {
        out.rows_mut(row, b.nrows()).copy_from(&b);
        row += b.nrows();
    }
    Ok(out)
}

fn score_with_folds(f: &FeatureMatrix, t: &Transcript, run: &BoldRun, cfg: &ScoreConfig, outer_folds: usize) -> Result<ScoreMap> {
    let design = build_design(f, t, &run.timeline, cfg.lags)?;
    let opts = RidgeOptions {
        grid: cfg.grid.clone(),
        inner_folds: cfg.inner_folds,
        standardize: true,
    };
    let pred = cross_validated_predictions(&design.values, &run.values, outer_folds, &opts)?;
    Ok(ScoreMap {
        kind: ScoreKind::Brain,
        values: pearson_columns(&pred, &run.values)?,
        meta: MapMeta {
            model_tag: Some(f.model_tag.clone()),
            layer_id: Some(f.layer_id),
            story_id: run.story_id.clone(),
            subject_id: Some(run.subject_id.clone()),
        },
    })
}

/// Brain score of one layer's features against the subject-averaged BOLD.
pub fn brain_score(f: &FeatureMatrix, t: &Transcript, yavg: &BoldRun, cfg: &ScoreConfig) -> Result<ScoreMap> {
    score_with_folds(f, t, yavg, cfg, cfg.outer_folds_pooled)
}

/// One brain score map per subject, without averaging.
pub fn subject_scores(f: &FeatureMatrix, t: &Transcript, runs: &[BoldRun], cfg: &ScoreConfig) -> Result<Vec<ScoreMap>> {
    check_compatible(runs)?;
    runs.iter()
        .map(|run| score_with_folds(f, t, run, cfg, cfg.outer_folds_subject))
        .collect()
}

/// Split-half noise ceiling: subjects are split at random into two halves,
/// each half is averaged, and the halves' series are correlated per voxel.
/// The result is averaged over `n_splits` splits.
///
/// With an odd subject count the first half gets the smaller share.
pub fn ceiling(runs: &[BoldRun], n_splits: usize, seed: u64) -> Result<ScoreMap> {
    if runs.len() < 2 {
        return Err(Error::Invalid(format!("ceiling needs at least 2 subjects, got {}", runs.len())));
    }
    if n_splits == 0 {
        return Err(Error::Invalid("ceiling needs at least one split".into()));
    }
    check_compatible(runs)?;
    let v = runs[0].voxels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; v];
    let mut count = vec![0usize; v];
    let mut order: Vec<usize> = (0..runs.len()).collect();
    let half = runs.len() / 2;
    for _ in 0..n_splits {
        order.shuffle(&mut rng);
        let mut a = order[..half].to_vec();
        let mut b = order[half..].to_vec();
        a.sort_unstable();
        b.sort_unstable();
        let mean_a = running_mean(a.iter().map(|&i| &runs[i].values)).expect("non-empty half");
        let mean_b = running_mean(b.iter().map(|&i| &runs[i].values)).expect("non-empty half");
        for (j, r) in pearson_columns(&mean_a, &mean_b)?.into_iter().enumerate() {
            if let Some(r) = r {
                sum[j] += r;
                count[j] += 1;
            }
        }
    }
    Ok(ScoreMap {
        kind: ScoreKind::Ceiling,
        values: sum
            .iter()
            .zip(&count)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect(),
        meta: MapMeta {
            model_tag: None,
            layer_id: None,
            story_id: runs[0].story_id.clone(),
            subject_id: Some(GROUP_MEAN_ID.to_string()),
        },
    })
}

fn check_pair(a: &ScoreMap, b: &ScoreMap) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("score maps have {} and {} voxels", a.len(), b.len())));
    }
    if !a.meta.story_id.is_empty() && !b.meta.story_id.is_empty() && a.meta.story_id != b.meta.story_id {
        return Err(Error::Shape(format!(
            "score maps are for stories {:?} and {:?}",
            a.meta.story_id, b.meta.story_id
        )));
    }
    Ok(())
}

/// Score with associative-memory features minus the original score.
pub fn memory_score(mem: &ScoreMap, base: &ScoreMap) -> Result<ScoreMap> {
    check_pair(mem, base)?;
    Ok(ScoreMap {
        kind: ScoreKind::Memory,
        values: mem
            .values
            .iter()
            .zip(&base.values)
            .map(|(m, b)| Some((*m)? - (*b)?))
            .collect(),
        meta: mem.meta.clone(),
    })
}

/// Relative growth `(sft - base) / base`; voxels with `|base| < eps` are undefined.
pub fn tuning_score(sft: &ScoreMap, base: &ScoreMap, eps: f64) -> Result<ScoreMap> {
    check_pair(sft, base)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(ScoreMap {
        kind: ScoreKind::Tuning,
        values: sft
            .values
            .iter()
            .zip(&base.values)
            .map(|(s, b)| {
                let (s, b) = ((*s)?, (*b)?);
                (b.abs() >= eps).then(|| (s - b) / b)
            })
            .collect(),
        meta: sft.meta.clone(),
    })
}

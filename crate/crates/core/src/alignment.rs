//! Word-to-frame alignment: nearest-frame assignment of word onsets, mean
//! pooling per frame, and FIR lag expansion into a regression design.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::stimulus::Transcript;

/// Frame `k` is acquired at `t0 + k * tr` seconds from stimulus onset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTimeline {
    pub frames: usize,
    pub tr: f64,
    pub t0: f64,
}

impl FrameTimeline {
    pub fn new(frames: usize, tr: f64, t0: f64) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Invalid("timeline needs at least one frame".into()));
        }
        if !(tr > 0.0 && tr.is_finite()) {
            return Err(Error::Invalid(format!("tr must be positive, got {tr}")));
        }
        if !t0.is_finite() {
            return Err(Error::Invalid("t0 must be finite".into()));
        }
        Ok(Self { frames, tr, t0 })
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.tr
    }
}

/// Lagged design: row `i` is `[x_i | x_{i-1} | ... | x_{i-k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub lags: usize,
    pub dims: usize,
}

impl DesignMatrix {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Nearest frame for each onset. Ties go to the earlier frame; onsets outside
/// the scan window clamp to the first or last frame.
pub fn assign_words_to_frames(onsets: &[f64], tl: &FrameTimeline) -> Vec<usize> {
    let last = tl.frames - 1;
    onsets
        .iter()
        .map(|&onset| {
            let pos = ((onset - tl.t0) / tl.tr).floor();
            if pos < 0.0 {
                return 0;
            }
            if pos >= last as f64 {
                return last;
            }
            let lo = pos as usize;
            let hi = lo + 1;
            let d_lo = (onset - tl.frame_time(lo)).abs();
            let d_hi = (tl.frame_time(hi) - onset).abs();
            if d_hi < d_lo {
                hi
            } else {
                lo
            }
        })
        .collect()
}

/// Mean of the feature rows assigned to each frame; frames with no words get
/// a zero row.
pub fn pool_by_frame(features: &DMatrix<f64>, assignment: &[usize], tl: &FrameTimeline) -> Result<DMatrix<f64>> {
    if assignment.len() != features.nrows() {
        return Err(Error::Shape(format!(
            "{} frame assignments for {} feature rows",
            assignment.len(),
            features.nrows()
        )));
    }
    let d = features.ncols();
    let mut pooled = DMatrix::<f64>::zeros(tl.frames, d);
    let mut counts = vec![0usize; tl.frames];
    for (row, &frame) in assignment.iter().enumerate() {
        if frame >= tl.frames {
            return Err(Error::Shape(format!("frame index {frame} outside {} frames", tl.frames)));
        }
        counts[frame] += 1;
        for j in 0..d {
            pooled[(frame, j)] += features[(row, j)];
        }
    }
    for (frame, &n) in counts.iter().enumerate() {
        if n > 1 {
            let inv = n as f64;
            pooled.row_mut(frame).iter_mut().for_each(|v| *v /= inv);
        }
    }
    Ok(pooled)
}

/// Concatenates `k` lagged copies of the pooled frames; lags before the
/// first frame are zero blocks.
pub fn fir_expand(pooled: &DMatrix<f64>, k: usize) -> Result<DesignMatrix> {
    let (n, d) = pooled.shape();
    if k == 0 {
        return Err(Error::Invalid("FIR needs at least one lag".into()));
    }
    if k > n {
        return Err(Error::Invalid(format!("{k} lags exceed {n} frames")));
    }
    let mut values = DMatrix::<f64>::zeros(n, k * d);
    for lag in 0..k {
        values
            .view_mut((lag, lag * d), (n - lag, d))
            .copy_from(&pooled.view((0, 0), (n - lag, d)));
    }
    Ok(DesignMatrix { values, lags: k, dims: d })
}

/// assign → pool → FIR for one layer's features.
pub fn build_design(f: &FeatureMatrix, t: &Transcript, tl: &FrameTimeline, lags: usize) -> Result<DesignMatrix> {
    crate::features::validate_pair(f, t)?;
    let assignment = assign_words_to_frames(&t.onsets(), tl);
    let pooled = pool_by_frame(&f.values, &assignment, tl)?;
    fir_expand(&pooled, lags)
}

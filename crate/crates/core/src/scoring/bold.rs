//! BOLD runs and their binary format.
//!
//! Layout (little-endian): magic `BOLD`, version `u32 = 1`, frames `u64`,
//! voxels `u64`, tr `f64`, t0 `f64`, subject id and story id as
//! u16-length-prefixed UTF-8, then `frames * voxels` f32 values row-major
//! (frame-major).

use nalgebra::DMatrix;

use crate::alignment::FrameTimeline;
use crate::binary::{put_f32, put_string, ByteReader};
use crate::error::{Error, Result};

pub const BOLD_MAGIC: &[u8; 4] = b"BOLD";
pub const BOLD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BoldRun {
    pub subject_id: String,
    pub story_id: String,
    pub timeline: FrameTimeline,
    /// `frames × voxels`.
    pub values: DMatrix<f64>,
}

impl BoldRun {
    pub fn new(subject_id: impl Into<String>, story_id: impl Into<String>, timeline: FrameTimeline, values: DMatrix<f64>) -> Result<Self> {
        let run = Self {
            subject_id: subject_id.into(),
            story_id: story_id.into(),
            timeline,
            values,
        };
        run.check()?;
        Ok(run)
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn voxels(&self) -> usize {
        self.values.ncols()
    }

    fn check(&self) -> Result<()> {
        if self.frames() != self.timeline.frames {
            return Err(Error::Shape(format!(
                "run {:?} has {} frames but its timeline declares {}",
                self.subject_id,
                self.frames(),
                self.timeline.frames
            )));
        }
        if self.voxels() == 0 {
            return Err(Error::Shape(format!("run {:?} has no voxels", self.subject_id)));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("run {:?} has non-finite values", self.subject_id)));
        }
        Ok(())
    }
}

pub fn read_bold(raw: &[u8]) -> Result<BoldRun> {
    let mut r = ByteReader::new(raw, "BOLD");
    if r.take(4)? != BOLD_MAGIC {
        return Err(Error::format("BOLD", "bad magic"));
    }
    let version = r.u32()?;
    if version != BOLD_VERSION {
        return Err(Error::format("BOLD", format!("unsupported version {version}")));
    }
    let frames = usize::try_from(r.u64()?).map_err(|_| Error::format("BOLD", "frame count overflows"))?;
    let voxels = usize::try_from(r.u64()?).map_err(|_| Error::format("BOLD", "voxel count overflows"))?;
    let tr = r.f64()?;
    let t0 = r.f64()?;
    let subject_id = r.string()?;
    let story_id = r.string()?;
    let timeline = FrameTimeline::new(frames, tr, t0).map_err(|e| Error::format("BOLD", e))?;
    if voxels == 0 {
        return Err(Error::format("BOLD", "no voxels"));
    }
    let count = frames
        .checked_mul(voxels)
        .ok_or_else(|| Error::format("BOLD", "payload size overflows"))?;
    let data = r.f32_block(count)?;
    r.finish()?;
    Ok(BoldRun {
        subject_id,
        story_id,
        timeline,
        values: DMatrix::from_row_slice(frames, voxels, &data),
    })
}

pub fn write_bold(run: &BoldRun) -> Result<Vec<u8>> {
    run.check()?;
    let mut out = Vec::with_capacity(48 + 4 * run.values.len());
    out.extend_from_slice(BOLD_MAGIC);
    out.extend_from_slice(&BOLD_VERSION.to_le_bytes());
    out.extend_from_slice(&(run.frames() as u64).to_le_bytes());
    out.extend_from_slice(&(run.voxels() as u64).to_le_bytes());
    out.extend_from_slice(&run.timeline.tr.to_le_bytes());
    out.extend_from_slice(&run.timeline.t0.to_le_bytes());
    put_string(&mut out, &run.subject_id, "BOLD")?;
    put_string(&mut out, &run.story_id, "BOLD")?;
    for row in run.values.row_iter() {
        for &v in row.iter() {
            put_f32(&mut out, v, "BOLD")?;
        }
    }
    Ok(out)
}

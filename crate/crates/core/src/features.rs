//! Per-layer activation matrices and the FEAT binary format.
//!
//! Layout (little-endian): magic `FEAT`, version `u32 = 1`, rows `u64`,
//! dims `u64`, layer id `i32`, context length `i32`, model tag as a
//! u16-length-prefixed UTF-8 string, then `rows * dims` f32 values in
//! row-major order. Values are held as f64 in memory.

use nalgebra::DMatrix;

use crate::binary::{put_f32, put_string, ByteReader};
use crate::error::{Error, Result};
use crate::stimulus::Transcript;

pub const FEAT_MAGIC: &[u8; 4] = b"FEAT";
pub const FEAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// 0 is the non-contextual embedding table.
    pub layer_id: i32,
    pub model_tag: String,
    pub context_length: i32,
    /// Row `i` is the activation of word `i`.
    pub values: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(layer_id: i32, model_tag: impl Into<String>, context_length: i32, values: DMatrix<f64>) -> Result<Self> {
        let f = Self {
            layer_id,
            model_tag: model_tag.into(),
            context_length,
            values,
        };
        f.check()?;
        Ok(f)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    fn check(&self) -> Result<()> {
        if self.rows() == 0 {
            return Err(Error::format("FEAT", "matrix has no rows"));
        }
        if self.dims() == 0 {
            return Err(Error::format("FEAT", "matrix has zero dimensions"));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format("FEAT", format!("non-finite value at element {i}")));
        }
        Ok(())
    }
}

pub fn read_features(raw: &[u8]) -> Result<FeatureMatrix> {
    let mut r = ByteReader::new(raw, "FEAT");
    if r.take(4)? != FEAT_MAGIC {
        return Err(Error::format("FEAT", "bad magic"));
    }
    let version = r.u32()?;
    if version != FEAT_VERSION {
        return Err(Error::format("FEAT", format!("unsupported version {version}")));
    }
    let rows = usize::try_from(r.u64()?).map_err(|_| Error::format("FEAT", "row count overflows"))?;
    let dims = usize::try_from(r.u64()?).map_err(|_| Error::format("FEAT", "dim count overflows"))?;
    let layer_id = r.i32()?;
    let context_length = r.i32()?;
    let model_tag = r.string()?;
    if rows == 0 || dims == 0 {
        return Err(Error::format("FEAT", format!("empty matrix {rows}x{dims}")));
    }
    let count = rows
        .checked_mul(dims)
        .ok_or_else(|| Error::format("FEAT", "payload size overflows"))?;
    let data = r.f32_block(count)?;
    r.finish()?;
    Ok(FeatureMatrix {
        layer_id,
        model_tag,
        context_length,
        values: DMatrix::from_row_slice(rows, dims, &data),
    })
}

/// Canonical serialization: equal matrices always yield equal bytes.
/// Values are narrowed to f32.
pub fn write_features(f: &FeatureMatrix) -> Result<Vec<u8>> {
    f.check()?;
    let mut out = Vec::with_capacity(40 + f.model_tag.len() + 4 * f.values.len());
    out.extend_from_slice(FEAT_MAGIC);
    out.extend_from_slice(&FEAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(f.dims() as u64).to_le_bytes());
    out.extend_from_slice(&f.layer_id.to_le_bytes());
    out.extend_from_slice(&f.context_length.to_le_bytes());
    put_string(&mut out, &f.model_tag, "FEAT")?;
    for row in f.values.row_iter() {
        for &v in row.iter() {
            put_f32(&mut out, v, "FEAT")?;
        }
    }
    Ok(out)
}

/// Feature files carry no timing; rows must line up 1:1 with transcript tokens.
pub fn validate_pair(f: &FeatureMatrix, t: &Transcript) -> Result<()> {
    if f.rows() != t.len() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows but transcript {:?} has {} tokens",
            f.rows(),
            t.story_id,
            t.len()
        )));
    }
    Ok(())
}

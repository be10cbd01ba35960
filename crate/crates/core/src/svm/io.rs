//! Model file: `"KSVM"`, version, length (u32 little-endian), then the
//! weights, the bias and the solver's KKT residual as f64 little-endian.
//!
//! The speaker id is carried by the file name and C is not stored.

use std::io::{Read, Write};

use super::{LinearSvmModel, Result, SvmError};

pub const SVM_MAGIC: &[u8; 4] = b"KSVM";
pub const SVM_VERSION: u32 = 1;

pub fn write_svm<W: Write>(mut w: W, model: &LinearSvmModel) -> Result<()> {
    w.write_all(SVM_MAGIC)?;
    w.write_all(&SVM_VERSION.to_le_bytes())?;
    w.write_all(&(model.weights.len() as u32).to_le_bytes())?;
    for v in model
        .weights
        .iter()
        .chain([&model.bias, &model.kkt_residual])
    {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_svm<R: Read>(
    mut r: R,
    speaker_id: impl Into<String>,
    c_param: f64,
) -> Result<LinearSvmModel> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head)?;
    if &head[0..4] != SVM_MAGIC {
        return Err(SvmError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != SVM_VERSION {
        return Err(SvmError::Format(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut values = Vec::with_capacity(len + 2);
    let mut b = [0u8; 8];
    for _ in 0..len + 2 {
        r.read_exact(&mut b)?;
        values.push(f64::from_le_bytes(b));
    }
    let kkt_residual = values.pop().unwrap();
    let bias = values.pop().unwrap();
    if values.iter().any(|v| !v.is_finite()) || !bias.is_finite() {
        return Err(SvmError::Format("non-finite weights".into()));
    }
    Ok(LinearSvmModel {
        speaker_id: speaker_id.into(),
        weights: values,
        bias,
        c_param,
        kkt_residual,
    })
}

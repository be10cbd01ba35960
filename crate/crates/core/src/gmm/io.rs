//! Model file: `"KSGM"`, version, k, dim (u32 little-endian), then weights,
//! means and variances as row-major f64 little-endian.

use std::io::{Read, Write};

use super::{DiagGmm, GmmError, Result};

pub const GMM_MAGIC: &[u8; 4] = b"KSGM";
pub const GMM_VERSION: u32 = 1;

pub fn write_gmm<W: Write>(mut w: W, gmm: &DiagGmm) -> Result<()> {
    w.write_all(GMM_MAGIC)?;
    for v in [GMM_VERSION, gmm.k() as u32, gmm.dim() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in gmm
        .weights()
        .iter()
        .chain(gmm.means())
        .chain(gmm.variances())
    {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn read_gmm<R: Read>(mut r: R) -> Result<DiagGmm> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[0..4] != GMM_MAGIC {
        return Err(GmmError::Format("bad magic".into()));
    }
    let field = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap()) as usize;
    let (version, k, dim) = (field(4), field(8), field(12));
    if version != GMM_VERSION as usize {
        return Err(GmmError::Format(format!("unsupported version {version}")));
    }
    if k == 0 || dim == 0 {
        return Err(GmmError::Format(format!("empty model (k={k}, dim={dim})")));
    }
    let weights = read_f64s(&mut r, k)?;
    let means = read_f64s(&mut r, k * dim)?;
    let variances = read_f64s(&mut r, k * dim)?;
    DiagGmm::new(weights, means, variances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = DiagGmm::new(
            vec![0.25, 0.75],
            vec![0.1, -2.0, 1.0 / 3.0, 4.0],
            vec![1.0, 0.5, 2.0, 1e-3],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_gmm(&mut buf, &g).unwrap();
        assert_eq!(buf.len(), 16 + 8 * (2 + 4 + 4));
        assert_eq!(&buf[..4], b"KSGM");
        assert_eq!(read_gmm(buf.as_slice()).unwrap(), g);
        assert!(read_gmm(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(matches!(read_gmm(buf.as_slice()), Err(GmmError::Format(_))));
    }
}

//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    8 bytes  "CGFFSNAP"
//! L        f64
//! N        u64
//! eps      f64
//! seed     u64
//! kind     u8      0 = compact bump, 1 = gaussian reference
//! values   N*N pairs of f64 (omega_1, omega_2), row-major in x_2
//! ```

use std::io::{Read, Write};

use super::mollifier::{make_mollifier, MollifierKind};
use super::spectral::{GridSpec, SpectralField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CGFFSNAP";

pub fn write_snapshot<W: Write>(f: &SpectralField, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&f.spec.box_length.to_le_bytes())?;
    w.write_all(&(f.spec.grid_n as u64).to_le_bytes())?;
    w.write_all(&f.mollifier.eps.to_le_bytes())?;
    w.write_all(&f.seed.to_le_bytes())?;
    w.write_all(&[f.mollifier.kind.code()])?;
    let mut buf = Vec::with_capacity(16 * f.values.len());
    for v in &f.values {
        buf.extend_from_slice(&v[0].to_le_bytes());
        buf.extend_from_slice(&v[1].to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a snapshot back. The Fourier divergence diagnostic is not stored
/// and comes back as NaN.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<SpectralField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config("not a field snapshot".into()));
    }
    let box_length = f64::from_bits(read_u64(&mut r)?);
    let n = read_u64(&mut r)? as usize;
    let eps = f64::from_bits(read_u64(&mut r)?);
    let seed = read_u64(&mut r)?;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let kind = MollifierKind::from_code(kind[0])
        .ok_or_else(|| Error::Config(format!("unknown mollifier code {}", kind[0])))?;
    let spec = GridSpec::new(box_length, n, eps)?;
    let mollifier = make_mollifier(kind, eps)?;
    let mut raw = vec![0u8; 16 * n * n];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(16)
        .map(|c| {
            [
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            ]
        })
        .collect();
    Ok(SpectralField {
        spec,
        mollifier,
        values,
        seed,
        fourier_divergence_max: f64::NAN,
    })
}

use std::io::{Read, Write};
use std::path::Path;

use super::DenseTensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SPLT";
const VERSION: u32 = 1;

/// Serializes as `SPLT`, u32 version, u32 rank, u64 dims, then f64 little-endian payload.
pub fn write_tensor<W: Write>(w: &mut W, t: &DenseTensor<f64>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 8);
    for &x in t.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<DenseTensor<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad tensor magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let rank = read_u32(r)? as usize;
    if rank == 0 || rank > 16 {
        return Err(Error::Format(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        shape.push(u64::from_le_bytes(b) as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= (1 << 32))
        .ok_or_else(|| Error::Format(format!("implausible tensor shape {shape:?}")))?;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    DenseTensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn tensor_to_bytes(t: &DenseTensor<f64>) -> Vec<u8> {
    let mut v = Vec::new();
    write_tensor(&mut v, t).expect("writing to a Vec cannot fail");
    v
}

pub fn tensor_from_bytes(mut bytes: &[u8]) -> Result<DenseTensor<f64>> {
    read_tensor(&mut bytes)
}

pub fn write_tensor_to(path: &Path, t: &DenseTensor<f64>) -> Result<()> {
    std::fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

pub fn read_tensor_from(path: &Path) -> Result<DenseTensor<f64>> {
    tensor_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let t = DenseTensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-300, 7.0]).unwrap();
        let b = tensor_to_bytes(&t);
        assert_eq!(&b[..4], b"SPLT");
        assert_eq!(b.len(), 4 + 4 + 4 + 16 + 48);
        assert_eq!(tensor_from_bytes(&b).unwrap(), t);
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(tensor_from_bytes(&bad), Err(Error::Format(_))));
        assert!(tensor_from_bytes(&b[..20]).is_err());
    }
}

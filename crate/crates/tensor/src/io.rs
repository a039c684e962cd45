//! The `RVT1` tensor file format.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "RVT1"
//! 4       1           dtype code (0 = f32)
//! 5       1           ndim
//! 6       4 * ndim    dims, u32 little-endian
//! ...     4 * numel   row-major payload, f32 little-endian
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RVT1";
pub const DTYPE_F32: u8 = 0;

/// Serialises raw `(shape, data)` without building a [`Tensor`].
pub fn write_raw<W: Write>(mut w: W, shape: &[usize], data: &[f32]) -> Result<()> {
    if shape.len() > u8::MAX as usize {
        return Err(TensorError::Dimension(format!("rank {} too large for RVT1", shape.len())));
    }
    if shape.iter().product::<usize>() != data.len() {
        return Err(TensorError::Dimension(format!(
            "shape {shape:?} does not match {} values",
            data.len()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&[DTYPE_F32, shape.len() as u8])?;
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| TensorError::Dimension(format!("dim {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads just the header, returning the shape.
pub fn read_header<R: Read>(r: &mut R) -> Result<Vec<usize>> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head)
        .map_err(|e| TensorError::Corrupt(format!("truncated header: {e}")))?;
    if &head[..4] != MAGIC {
        return Err(TensorError::Corrupt(format!("bad magic {:?}", &head[..4])));
    }
    if head[4] != DTYPE_F32 {
        return Err(TensorError::Corrupt(format!("unsupported dtype code {}", head[4])));
    }
    let ndim = head[5] as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut d = [0u8; 4];
        r.read_exact(&mut d)
            .map_err(|e| TensorError::Corrupt(format!("truncated dims: {e}")))?;
        shape.push(u32::from_le_bytes(d) as usize);
    }
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::Corrupt(format!("invalid shape {shape:?}")));
    }
    Ok(shape)
}

pub fn read_raw<R: Read>(mut r: R) -> Result<(Vec<usize>, Vec<f32>)> {
    let shape = read_header(&mut r)?;
    let n: usize = shape.iter().product();
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| TensorError::Corrupt(format!("payload shorter than {n} values: {e}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(TensorError::Corrupt("trailing bytes after payload".into()));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((shape, data))
}

impl Tensor {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        write_raw(w, self.shape(), self.data())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Tensor> {
        let (shape, data) = read_raw(r)?;
        Tensor::new(&shape, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
        Tensor::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(&[2, 1], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let mut expect = b"RVT1".to_vec();
        expect.extend_from_slice(&[0, 2, 2, 0, 0, 0, 1, 0, 0, 0]);
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let t = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Tensor::read_from(&bad_magic[..]), Err(TensorError::Corrupt(_))));

        let truncated = &buf[..buf.len() - 1];
        assert!(matches!(Tensor::read_from(truncated), Err(TensorError::Corrupt(_))));

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(matches!(Tensor::read_from(&trailing[..]), Err(TensorError::Corrupt(_))));

        let mut dtype = buf;
        dtype[4] = 7;
        assert!(matches!(Tensor::read_from(&dtype[..]), Err(TensorError::Corrupt(_))));
    }
}

//! `.ntsr` tensor files: `NTSR`, u32 version 1, u32 n,c,h,w, then f32 data.
//! Everything little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"NTSR";
const VERSION: u32 = 1;

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in t.shape().dims() {
        w.write_all(
            &u32::try_from(d)
                .map_err(|_| Error::Format("dimension exceeds u32".into()))?
                .to_le_bytes(),
        )?;
    }
    w.write_all(&t.to_le_bytes())?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad tensor magic {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = read_u32(&mut r, "shape")? as usize;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let data = read_f32s(&mut r, shape.len(), "tensor data")?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    Tensor::new(shape, data)
}

pub fn write_tensor_file(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(BufReader::new(File::open(path)?))
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, count: usize, what: &str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    read_exact(r, &mut bytes, what)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::from_vec(1, 1, 1, 2, vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let mut expected = b"NTSR".to_vec();
        for v in [1u32, 1, 1, 1, 2] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(read_tensor(&buf[..]).unwrap(), t);
    }

    #[test]
    fn rejects_corrupt_input() {
        let t = Tensor::full(Shape::new(1, 2, 2, 2), 3.0);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(matches!(read_tensor(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor(&bad[..]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_tensor(&long[..]).is_err());
    }
}

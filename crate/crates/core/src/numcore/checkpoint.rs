//! `VPW1` checkpoints: magic, then per parameter
//! `[u16 path-len][path][u8 ndim][u32 x ndim shape][f64 x count]`, little-endian.
//! Records are written in sorted path order.

use std::io::{Read, Write};

use super::{NumError, ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VPW1";

pub fn write_checkpoint<W: Write>(params: &ParamSet, mut w: W) -> Result<(), NumError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for (path, p) in params.iter() {
        let bytes = path.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| NumError::Checkpoint { offset: 0, reason: format!("path too long: {path}") })?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        let shape = p.value.shape();
        let ndim = u8::try_from(shape.len())
            .map_err(|_| NumError::Checkpoint { offset: 0, reason: format!("too many dims in {path}") })?;
        w.write_all(&[ndim])?;
        for &d in shape {
            let d = u32::try_from(d)
                .map_err(|_| NumError::Checkpoint { offset: 0, reason: format!("dim too large in {path}") })?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NumError> {
        if self.pos + n > self.buf.len() {
            return Err(NumError::Checkpoint {
                offset: self.pos as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Reads every record; all parameters come back trainable.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamSet, NumError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(NumError::Checkpoint { offset: 0, reason: "bad magic".into() });
    }
    let mut params = ParamSet::new();
    while c.pos < buf.len() {
        let start = c.pos as u64;
        let len = u16::from_le_bytes(c.take(2, "path length")?.try_into().expect("2 bytes")) as usize;
        let path = std::str::from_utf8(c.take(len, "path")?)
            .map_err(|_| NumError::Checkpoint { offset: start, reason: "path is not UTF-8".into() })?
            .to_string();
        let ndim = c.take(1, "ndim")?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(c.take(4, "shape")?.try_into().expect("4 bytes")) as usize);
        }
        let count: usize = shape.iter().product();
        let raw = c.take(count * 8, "data")?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        params
            .trainable(path, Tensor::new(&shape, data)?)
            .map_err(|e| NumError::Checkpoint { offset: start, reason: e.to_string() })?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let mut p = ParamSet::new();
        p.trainable("a", Tensor::new(&[2], vec![1.0, -0.5]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let mut expected = b"VPW1".to_vec();
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.push(b'a');
        expected.push(1);
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-0.5f64).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), p);
    }

    #[test]
    fn truncation_reports_offset() {
        let mut p = ParamSet::new();
        p.trainable("weights", Tensor::ones(&[3, 2])).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        match read_checkpoint(&buf[..]) {
            Err(NumError::Checkpoint { offset, .. }) => assert!(offset > 4),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(matches!(read_checkpoint(&b"NOPE"[..]), Err(NumError::Checkpoint { offset: 0, .. })));
    }
}

//! The `DTEN1` binary tensor format.
//!
//! Layout: ASCII magic `DTEN1`, order `M` as little-endian `u32`, then `M`
//! little-endian `u32` dims, then `∏ d_m` little-endian `f64` values in
//! colexicographic (`vec`) order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 5] = b"DTEN1";

pub fn encode(t: &DenseTensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(9 + 4 * t.order() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&to_u32(t.order())?.to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&to_u32(d)?.to_le_bytes());
    }
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))
}

pub fn decode(bytes: &[u8]) -> Result<DenseTensor> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(5)? != MAGIC {
        return Err(Error::Format("bad magic; expected DTEN1".into()));
    }
    let order = cur.u32()? as usize;
    if order == 0 {
        return Err(Error::Format("order must be at least 1".into()));
    }
    let dims = (0..order)
        .map(|_| cur.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("dims overflow".into()))?;
    let remaining = bytes.len() - cur.pos;
    if remaining != len * 8 {
        return Err(Error::Format(format!(
            "payload has {remaining} bytes, expected {}",
            len * 8
        )));
    }
    let data = bytes[cur.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    DenseTensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn write_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    decode(&fs::read(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let f = fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = DenseTensor::new(vec![2, 1], vec![1.5, -2.0]).unwrap();
        let bytes = encode(&t).unwrap();
        assert_eq!(&bytes[..5], b"DTEN1");
        assert_eq!(&bytes[5..9], &[2, 0, 0, 0]);
        assert_eq!(&bytes[9..13], &[2, 0, 0, 0]);
        assert_eq!(&bytes[13..17], &[1, 0, 0, 0]);
        assert_eq!(&bytes[17..25], &1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 33);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let t = DenseTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut bytes = encode(&t).unwrap();
        let good = bytes.clone();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode(&good[..7]), Err(Error::Format(_))));
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(dims in prop::collection::vec(1usize..4, 1..4), seed in any::<u64>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|i| (seed.wrapping_add(i as u64) % 1000) as f64 * 0.37 - 100.0).collect();
            let t = DenseTensor::new(dims, data).unwrap();
            prop_assert_eq!(decode(&encode(&t).unwrap()).unwrap(), t);
        }
    }
}

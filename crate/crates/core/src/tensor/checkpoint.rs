// Layout: "CCAT0001", then per parameter:
//   u32 name length | UTF-8 name | u32 rank | u32 dims… | f32 values…
// All integers and floats little-endian. Parameters run to end of file.

use std::path::Path;

use super::{ParamSet, Scalar, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CCAT0001";

pub fn encode_checkpoint<T: Scalar>(params: &ParamSet<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + params.numel() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_f32().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                format!("truncated checkpoint while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], path: &Path) -> Result<ParamSet<T>> {
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let mut r = Reader {
        buf: bytes,
        pos: 8,
        path,
    };
    let mut params = ParamSet::new();
    while r.pos < bytes.len() {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format(path, "parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4, "values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let t = Tensor::new(shape, data)
            .map_err(|e| Error::format(path, format!("parameter `{name}`: {e}")))?;
        if params.find(&name).is_some() {
            return Err(Error::format(path, format!("duplicate parameter `{name}`")));
        }
        params.add(name, t);
    }
    Ok(params)
}

pub fn write_checkpoint<T: Scalar>(path: &Path, params: &ParamSet<T>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<ParamSet<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ParamSet<f32> {
        let mut p = ParamSet::new();
        p.add("a.weight", Tensor::new([2, 3], vec![1.5, -2.0, 0.0, 3.25, f32::MIN_POSITIVE, -0.0]).unwrap());
        p.add("b", Tensor::new([1], vec![7.0]).unwrap());
        p
    }

    #[test]
    fn layout_is_little_endian() {
        let bytes = encode_checkpoint(&sample());
        assert_eq!(&bytes[..8], b"CCAT0001");
        assert_eq!(&bytes[8..12], &8u32.to_le_bytes());
        assert_eq!(&bytes[12..20], b"a.weight");
        assert_eq!(&bytes[20..24], &2u32.to_le_bytes());
        assert_eq!(&bytes[24..28], &2u32.to_le_bytes());
        assert_eq!(&bytes[28..32], &3u32.to_le_bytes());
        assert_eq!(&bytes[32..36], &1.5f32.to_le_bytes());
    }

    #[test]
    fn truncated_and_bad_magic() {
        let bytes = encode_checkpoint(&sample());
        let p = Path::new("x.ckpt");
        let err = decode_checkpoint::<f32>(&bytes[..bytes.len() - 2], p).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f32>(&bad, p).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<u32>(), 1..40)) {
            let floats: Vec<f32> = values.iter().map(|&b| f32::from_bits(b)).filter(|f| f.is_finite()).collect();
            prop_assume!(!floats.is_empty());
            let mut p = ParamSet::new();
            p.add("w", Tensor::new([floats.len()], floats.clone()).unwrap());
            let back: ParamSet<f32> = decode_checkpoint(&encode_checkpoint(&p), Path::new("mem")).unwrap();
            let got: Vec<u32> = back.get(back.find("w").unwrap()).data().iter().map(|f| f.to_bits()).collect();
            let want: Vec<u32> = floats.iter().map(|f| f.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}

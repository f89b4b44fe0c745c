//! Tensor container files: one line of JSON header, then the raw
//! little-endian payload.
//!
//! ```text
//! {"shape":[3,4],"dtype":"f64","byte_order":"little"}\n<96 bytes>
//! ```

use super::tensor::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    dtype: Dtype,
    byte_order: String,
}

pub fn write_tensor<W: Write>(mut w: W, tensor: &Tensor, dtype: Dtype) -> std::io::Result<()> {
    let header = Header {
        shape: tensor.shape().to_vec(),
        dtype,
        byte_order: "little".into(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut payload = Vec::with_capacity(tensor.numel() * dtype.width());
    for &v in tensor.data() {
        match dtype {
            Dtype::F64 => payload.extend_from_slice(&v.to_le_bytes()),
            Dtype::F32 => payload.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    w.write_all(&payload)?;
    w.flush()
}

/// Parses a container; `origin` only labels error messages.
pub fn read_tensor<R: Read>(r: R, origin: &Path) -> Result<Tensor> {
    let mut reader = BufReader::new(r);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).map_err(|e| Error::io(origin, e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::format(origin, "missing header terminator"));
    }
    let header: Header = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| Error::format(origin, format!("bad header: {e}")))?;
    if header.byte_order != "little" {
        return Err(Error::format(
            origin,
            format!("unsupported byte order `{}`", header.byte_order),
        ));
    }
    let numel: usize = header.shape.iter().product();
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(|e| Error::io(origin, e))?;
    let width = header.dtype.width();
    if payload.len() != numel * width {
        return Err(Error::format(
            origin,
            format!("payload has {} bytes, header implies {}", payload.len(), numel * width),
        ));
    }
    let data = payload
        .chunks_exact(width)
        .map(|c| match header.dtype {
            Dtype::F64 => f64::from_le_bytes(c.try_into().expect("8-byte chunk")),
            Dtype::F32 => f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64,
        })
        .collect();
    Tensor::new(header.shape, data).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn save_tensor(path: &Path, tensor: &Tensor, dtype: Dtype) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_tensor(std::io::BufWriter::new(file), tensor, dtype).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::vector(vec![1.5, -2.0]);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t, Dtype::F64).unwrap();
        let nl = buf.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&buf[..nl]).unwrap();
        assert_eq!(header["shape"], serde_json::json!([2]));
        assert_eq!(header["dtype"], "f64");
        assert_eq!(header["byte_order"], "little");
        assert_eq!(&buf[nl + 1..nl + 9], &1.5f64.to_le_bytes());
        assert_eq!(buf.len(), nl + 1 + 16);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut buf = Vec::new();
        write_tensor(&mut buf, &Tensor::ones(&[2, 2]), Dtype::F32).unwrap();
        buf.pop();
        assert!(read_tensor(buf.as_slice(), Path::new("mem")).is_err());
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in proptest::collection::vec(-1e6f64..1e6, 25),
        ) {
            let t = Tensor::new(vec![rows, cols], seed[..rows * cols].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_tensor(&mut buf, &t, Dtype::F64).unwrap();
            let back = read_tensor(buf.as_slice(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn f32_round_trip_is_within_single_precision(v in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let t = Tensor::vector(v);
            let mut buf = Vec::new();
            write_tensor(&mut buf, &t, Dtype::F32).unwrap();
            let back = read_tensor(buf.as_slice(), Path::new("mem")).unwrap();
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0));
            }
        }
    }
}

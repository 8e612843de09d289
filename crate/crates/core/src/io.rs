//! Tensor files: a raw little-endian `f64` payload plus a one-line text
//! sidecar `<payload>.hdr` reading `shape: I1,I2,...,IN`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

pub fn header_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

pub fn format_header(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("shape: {}\n", dims.join(","))
}

pub fn parse_header(text: &str, origin: &str) -> Result<Vec<usize>> {
    let bad = |reason: &str| Error::Header {
        path: origin.to_string(),
        reason: reason.to_string(),
    };
    let line = text.lines().next().ok_or_else(|| bad("empty header"))?;
    let rest = line
        .trim()
        .strip_prefix("shape:")
        .ok_or_else(|| bad("expected a line starting with `shape:`"))?;
    rest.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| bad(&format!("bad extent `{}`", t.trim())))
        })
        .collect()
}

pub fn encode_payload<T: Scalar>(data: &[T]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for &x in data {
        bytes.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    bytes
}

pub fn decode_payload<T: Scalar>(bytes: &[u8], origin: &str) -> Result<Vec<T>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Header {
            path: origin.to_string(),
            reason: format!("payload length {} is not a multiple of 8", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

pub fn write_tensor<T: Scalar>(path: impl AsRef<Path>, t: &DenseTensor<T>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, encode_payload(t.data()))?;
    fs::write(header_path(path), format_header(t.shape()))?;
    Ok(())
}

pub fn read_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<DenseTensor<T>> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let shape = parse_header(&fs::read_to_string(header_path(path))?, &origin)?;
    let data = decode_payload(&fs::read(path)?, &origin)?;
    DenseTensor::new(shape, data).map_err(|e| Error::Header {
        path: origin,
        reason: e.to_string(),
    })
}

pub fn write_matrix<T: Scalar>(path: impl AsRef<Path>, m: &Matrix<T>) -> Result<()> {
    write_tensor(path, &DenseTensor::from_matrix(m))
}

pub fn read_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let t = read_tensor::<T>(path.as_ref())?;
    match *t.shape() {
        [r, c] => Matrix::from_vec(r, c, t.into_data()),
        [n] => Matrix::from_vec(n, 1, t.into_data()),
        _ => Err(Error::Header {
            path: path.as_ref().display().to_string(),
            reason: format!("expected an order-2 tensor, got shape {:?}", t.shape()),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_format() {
        assert_eq!(format_header(&[2, 3, 4]), "shape: 2,3,4\n");
        assert_eq!(parse_header("shape: 2, 3,4\n", "x").unwrap(), vec![2, 3, 4]);
        assert!(parse_header("dims: 2", "x").is_err());
        assert!(parse_header("shape: 2,a", "x").is_err());
    }

    #[test]
    fn round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let t =
            DenseTensor::new(vec![2, 1, 3], vec![0.1, -2.5, 1e-300, 7.0, f64::MAX, -0.0]).unwrap();
        write_tensor(&p, &t).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], &0.1f64.to_le_bytes());
        let back: DenseTensor<f64> = read_tensor(&p).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn short_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        fs::write(&p, [0u8; 16]).unwrap();
        fs::write(header_path(&p), "shape: 3\n").unwrap();
        assert!(read_tensor::<f64>(&p).is_err());
    }
}

//! Binary file formats: matrices, packed codes, and trained model
//! artifacts, plus a small JSON report writer.
//!
//! Matrix files ("DMH1"): magic bytes, u32 little-endian row count, u32
//! little-endian column count, then row-major IEEE-754 32-bit
//! little-endian values. Packed code files ("DMHC"): magic, u32 LE code
//! count, u32 LE code length, then `ceil(c/8)` bytes per code, LSB-first
//! bit order with zero padding. Model artifacts ("DMHM") wrap a version
//! tag, the training config, and per-view hyperparameters with W and v
//! stored as embedded matrix blocks. All three are bit-exact contracts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::codes::PackedCodes;
use crate::error::{DmhError, Result};
use crate::model::ViewParams;
use crate::optimizer::TrainConfig;

const MATRIX_MAGIC: &[u8; 4] = b"DMH1";
const CODES_MAGIC: &[u8; 4] = b"DMHC";
const MODEL_MAGIC: &[u8; 4] = b"DMHM";
const MODEL_VERSION: u32 = 1;

/// Upper bound on elements read from any single matrix, to fail fast on
/// corrupt headers instead of attempting a huge allocation.
const MAX_ELEMENTS: u64 = 1 << 30;

fn read_exact_buf<R: Read>(reader: &mut R, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    reader
        .read_exact(&mut buf)
        .map_err(|_| DmhError::Format(format!("file truncated while reading {what}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(reader: &mut R, what: &str) -> Result<u32> {
    let buf = read_exact_buf(reader, 4, what)?;
    Ok(u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]))
}

fn read_u64<R: Read>(reader: &mut R, what: &str) -> Result<u64> {
    let buf = read_exact_buf(reader, 8, what)?;
    Ok(u64::from_le_bytes(buf.try_into().expect("8 bytes")))
}

fn read_f64<R: Read>(reader: &mut R, what: &str) -> Result<f64> {
    let buf = read_exact_buf(reader, 8, what)?;
    Ok(f64::from_le_bytes(buf.try_into().expect("8 bytes")))
}

fn expect_magic<R: Read>(reader: &mut R, magic: &[u8; 4], what: &str) -> Result<()> {
    let buf = read_exact_buf(reader, 4, what)?;
    if buf != magic {
        return Err(DmhError::Format(format!(
            "bad magic for {what}: expected {:?}, got {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

fn ensure_at_end<R: Read>(reader: &mut R, what: &str) -> Result<()> {
    let mut probe = [0u8; 1];
    match reader.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(DmhError::Format(format!("trailing data after {what}"))),
        Err(e) => Err(DmhError::Io(e)),
    }
}

fn write_matrix_to<W: Write>(writer: &mut W, m: &Array2<f64>) -> Result<()> {
    let (rows, cols) = m.dim();
    if rows as u64 > u32::MAX as u64 || cols as u64 > u32::MAX as u64 {
        return Err(DmhError::Format("matrix dimensions exceed u32".into()));
    }
    writer.write_all(MATRIX_MAGIC)?;
    writer.write_all(&(rows as u32).to_le_bytes())?;
    writer.write_all(&(cols as u32).to_le_bytes())?;
    for &value in m.iter() {
        if !value.is_finite() {
            return Err(DmhError::NonFinite("matrix value written to file".into()));
        }
        let v32 = value as f32;
        if !v32.is_finite() {
            return Err(DmhError::Format(format!(
                "value {value} does not fit in a 32-bit float"
            )));
        }
        writer.write_all(&v32.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix_from<R: Read>(reader: &mut R) -> Result<Array2<f64>> {
    expect_magic(reader, MATRIX_MAGIC, "matrix block")?;
    let rows = read_u32(reader, "matrix row count")? as u64;
    let cols = read_u32(reader, "matrix column count")? as u64;
    let elements = rows
        .checked_mul(cols)
        .filter(|&e| e <= MAX_ELEMENTS)
        .ok_or_else(|| DmhError::Format(format!("matrix of {rows}x{cols} is too large")))?;
    let raw = read_exact_buf(reader, (elements * 4) as usize, "matrix values")?;
    let mut values = Vec::with_capacity(elements as usize);
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(DmhError::Format(format!(
                "non-finite matrix value at index {i}"
            )));
        }
        values.push(f64::from(v));
    }
    Array2::from_shape_vec((rows as usize, cols as usize), values)
        .map_err(|e| DmhError::Format(format!("matrix shape error: {e}")))
}

/// Writes a matrix file, rounding values to 32-bit floats per the format.
pub fn write_matrix<P: AsRef<Path>>(path: P, m: &Array2<f64>) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_matrix_to(&mut writer, m)?;
    writer.flush()?;
    Ok(())
}

/// Reads a matrix file into 64-bit floats.
pub fn read_matrix<P: AsRef<Path>>(path: P) -> Result<Array2<f64>> {
    let mut reader = BufReader::new(File::open(path)?);
    let m = read_matrix_from(&mut reader)?;
    ensure_at_end(&mut reader, "matrix")?;
    Ok(m)
}

/// Writes packed codes: one record of `ceil(c/8)` bytes per code,
/// LSB-first within each byte, padding bits zero.
pub fn write_codes<P: AsRef<Path>>(path: P, codes: &PackedCodes) -> Result<()> {
    let n = codes.len();
    let c = codes.code_length();
    if n as u64 > u32::MAX as u64 || c as u64 > u32::MAX as u64 {
        return Err(DmhError::Format("code file dimensions exceed u32".into()));
    }
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(CODES_MAGIC)?;
    writer.write_all(&(n as u32).to_le_bytes())?;
    writer.write_all(&(c as u32).to_le_bytes())?;
    let bytes_per_code = c.div_ceil(8);
    let wpc = codes.words_per_code();
    let words = codes.words();
    for m in 0..n {
        let row = &words[m * wpc..(m + 1) * wpc];
        for b in 0..bytes_per_code {
            let byte = (row[b / 8] >> ((b % 8) * 8)) as u8;
            writer.write_all(&[byte])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads a packed-codes file, validating the zero-padding invariant.
pub fn read_codes<P: AsRef<Path>>(path: P) -> Result<PackedCodes> {
    let mut reader = BufReader::new(File::open(path)?);
    expect_magic(&mut reader, CODES_MAGIC, "codes file")?;
    let n = read_u32(&mut reader, "code count")? as u64;
    let c = read_u32(&mut reader, "code length")? as u64;
    if c == 0 || c > 1 << 20 {
        return Err(DmhError::Format(format!("unreasonable code length {c}")));
    }
    let bytes_per_code = c.div_ceil(8);
    let total = n
        .checked_mul(bytes_per_code)
        .filter(|&t| t <= MAX_ELEMENTS)
        .ok_or_else(|| DmhError::Format("code file too large".into()))?;
    let raw = read_exact_buf(&mut reader, total as usize, "code records")?;
    ensure_at_end(&mut reader, "codes")?;

    let wpc = (c as usize).div_ceil(64);
    let mut words = vec![0u64; n as usize * wpc];
    for m in 0..n as usize {
        let record = &raw[m * bytes_per_code as usize..(m + 1) * bytes_per_code as usize];
        for (b, &byte) in record.iter().enumerate() {
            words[m * wpc + b / 8] |= (byte as u64) << ((b % 8) * 8);
        }
    }
    PackedCodes::from_words(n as usize, c as usize, words)
}

/// A trained model as persisted to disk: view parameters (W and v rounded
/// to 32-bit floats by the matrix format), per-view label flags, and the
/// training configuration.
#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub params: Vec<ViewParams>,
    pub is_label_view: Vec<bool>,
    pub config: TrainConfig,
}

impl ModelArtifact {
    pub fn code_length(&self) -> usize {
        self.params.first().map(|p| p.code_length()).unwrap_or(0)
    }

    pub fn label_view_index(&self) -> Option<usize> {
        self.is_label_view.iter().position(|&f| f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(DmhError::Contract("model has no views".into()));
        }
        if self.is_label_view.len() != self.params.len() {
            return Err(DmhError::Contract(
                "label flags do not match view count".into(),
            ));
        }
        let c = self.code_length();
        for p in &self.params {
            p.validate()?;
            if p.code_length() != c {
                return Err(DmhError::Contract("views disagree on code length".into()));
            }
        }
        self.config.validate()
    }
}

/// Writes a model artifact file.
pub fn write_model<P: AsRef<Path>>(path: P, model: &ModelArtifact) -> Result<()> {
    model.validate()?;
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(MODEL_MAGIC)?;
    writer.write_all(&MODEL_VERSION.to_le_bytes())?;
    writer.write_all(&(model.params.len() as u32).to_le_bytes())?;
    writer.write_all(&(model.code_length() as u32).to_le_bytes())?;
    writer.write_all(&model.config.k_s.to_le_bytes())?;
    writer.write_all(&model.config.k_e.to_le_bytes())?;
    writer.write_all(&(model.config.max_iter as u64).to_le_bytes())?;
    writer.write_all(&model.config.convergence_rtol.to_le_bytes())?;
    writer.write_all(&model.config.seed.to_le_bytes())?;
    for (p, &is_label) in model.params.iter().zip(&model.is_label_view) {
        writer.write_all(&(p.w.nrows() as u32).to_le_bytes())?;
        writer.write_all(&(p.code_length() as u32).to_le_bytes())?;
        writer.write_all(&p.alpha.to_le_bytes())?;
        writer.write_all(&p.beta.to_le_bytes())?;
        writer.write_all(&p.gamma.to_le_bytes())?;
        writer.write_all(&[u8::from(is_label)])?;
        write_matrix_to(&mut writer, &p.w)?;
        let v_row = p.v.view().insert_axis(ndarray::Axis(0)).to_owned();
        write_matrix_to(&mut writer, &v_row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a model artifact file.
pub fn read_model<P: AsRef<Path>>(path: P) -> Result<ModelArtifact> {
    let mut reader = BufReader::new(File::open(path)?);
    expect_magic(&mut reader, MODEL_MAGIC, "model file")?;
    let version = read_u32(&mut reader, "model version")?;
    if version != MODEL_VERSION {
        return Err(DmhError::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let n_views = read_u32(&mut reader, "view count")? as usize;
    let code_length = read_u32(&mut reader, "code length")? as usize;
    if n_views == 0 || n_views > 1 << 16 {
        return Err(DmhError::Format(format!(
            "unreasonable view count {n_views}"
        )));
    }
    let config = TrainConfig {
        k_s: read_f64(&mut reader, "k_s")?,
        k_e: read_f64(&mut reader, "k_e")?,
        max_iter: read_u64(&mut reader, "max_iter")? as usize,
        convergence_rtol: read_f64(&mut reader, "convergence_rtol")?,
        seed: read_u64(&mut reader, "seed")?,
    };
    let mut params = Vec::with_capacity(n_views);
    let mut is_label_view = Vec::with_capacity(n_views);
    for i in 0..n_views {
        let d = read_u32(&mut reader, "view dimension")? as usize;
        let c = read_u32(&mut reader, "view code length")? as usize;
        if c != code_length {
            return Err(DmhError::Format(format!(
                "view {i} declares code length {c}, model says {code_length}"
            )));
        }
        let alpha = read_f64(&mut reader, "alpha")?;
        let beta = read_f64(&mut reader, "beta")?;
        let gamma = read_f64(&mut reader, "gamma")?;
        let flag = read_exact_buf(&mut reader, 1, "label flag")?[0];
        if flag > 1 {
            return Err(DmhError::Format(format!("bad label flag {flag}")));
        }
        let w = read_matrix_from(&mut reader)?;
        if w.dim() != (d, c) {
            return Err(DmhError::Format(format!(
                "view {i} weight block is {}x{}, header says {d}x{c}",
                w.nrows(),
                w.ncols()
            )));
        }
        let v_row = read_matrix_from(&mut reader)?;
        if v_row.dim() != (1, c) {
            return Err(DmhError::Format(format!(
                "view {i} bias block is {}x{}, expected 1x{c}",
                v_row.nrows(),
                v_row.ncols()
            )));
        }
        let v: Array1<f64> = v_row.row(0).to_owned();
        params.push(ViewParams {
            w,
            v,
            alpha,
            beta,
            gamma,
        });
        is_label_view.push(flag == 1);
    }
    ensure_at_end(&mut reader, "model")?;
    let model = ModelArtifact {
        params,
        is_label_view,
        config,
    };
    model.validate()?;
    Ok(model)
}

/// Writes a value as pretty-printed JSON with a trailing newline. Struct
/// fields serialize in declaration order, so reports are stable-ordered.
pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| DmhError::Format(format!("JSON serialization failed: {e}")))?;
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(text.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_golden_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmh1");
        let m = arr2(&[[1.0, 0.5, -2.0], [3.25, 0.0, -0.125]]);
        write_matrix(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        #[rustfmt::skip]
        let expected: Vec<u8> = vec![
            b'D', b'M', b'H', b'1',
            2, 0, 0, 0,
            3, 0, 0, 0,
            0x00, 0x00, 0x80, 0x3F, // 1.0
            0x00, 0x00, 0x00, 0x3F, // 0.5
            0x00, 0x00, 0x00, 0xC0, // -2.0
            0x00, 0x00, 0x50, 0x40, // 3.25
            0x00, 0x00, 0x00, 0x00, // 0.0
            0x00, 0x00, 0x00, 0xBE, // -0.125
        ];
        assert_eq!(bytes, expected);
        assert_eq!(read_matrix(&path).unwrap(), m);
    }

    #[test]
    fn matrix_round_trip_rounds_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmh1");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Array2::from_shape_fn((7, 5), |_| rng.random::<f64>() * 10.0 - 5.0);
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back, m.mapv(|x| f64::from(x as f32)));
    }

    #[test]
    fn matrix_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmh1");
        let m = arr2(&[[1.0_f64]]);
        write_matrix(&path, &m).unwrap();

        let good = std::fs::read(&path).unwrap();
        // bad magic
        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_matrix(&path), Err(DmhError::Format(_))));
        // truncation
        std::fs::write(&path, &good[..good.len() - 1]).unwrap();
        assert!(matches!(read_matrix(&path), Err(DmhError::Format(_))));
        // trailing garbage
        let mut long = good.clone();
        long.push(0);
        std::fs::write(&path, &long).unwrap();
        assert!(matches!(read_matrix(&path), Err(DmhError::Format(_))));
        // non-finite stored value
        let mut nan = good;
        nan[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &nan).unwrap();
        assert!(matches!(read_matrix(&path), Err(DmhError::Format(_))));
        // non-finite values are refused at write time
        assert!(matches!(
            write_matrix(&path, &arr2(&[[f64::INFINITY]])),
            Err(DmhError::NonFinite(_))
        ));
    }

    #[test]
    fn codes_golden_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.dmhc");
        let bits = arr2(&[
            [1u8, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 1],
            [1u8, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
        ]);
        let packed = PackedCodes::from_bits(&bits);
        write_codes(&path, &packed).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        #[rustfmt::skip]
        let expected: Vec<u8> = vec![
            b'D', b'M', b'H', b'C',
            2, 0, 0, 0,
            12, 0, 0, 0,
            0x0D, 0x0B, // 10110000 -> 0x0D LSB-first; 1101 -> 0x0B
            0xFF, 0x0F,
        ];
        assert_eq!(bytes, expected);
        assert_eq!(read_codes(&path).unwrap(), packed);
    }

    #[test]
    fn codes_round_trip_many_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &c in &[1usize, 7, 8, 9, 12, 16, 64, 96] {
            let bits = Array2::from_shape_fn((9, c), |_| u8::from(rng.random::<f64>() > 0.5));
            let packed = PackedCodes::from_bits(&bits);
            let path = dir.path().join(format!("c{c}.dmhc"));
            write_codes(&path, &packed).unwrap();
            assert_eq!(read_codes(&path).unwrap(), packed, "c={c}");
        }
    }

    #[test]
    fn codes_reject_nonzero_padding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.dmhc");
        let bits = arr2(&[[1u8, 0, 1]]);
        write_codes(&path, &PackedCodes::from_bits(&bits)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        *bytes.last_mut().unwrap() |= 0b1000_0000; // bit 7 is padding for c=3
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_codes(&path), Err(DmhError::Format(_))));
    }

    fn f32_clean(rng: &mut ChaCha8Rng) -> f64 {
        f64::from((rng.random::<f64>() - 0.5) as f32)
    }

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dmhm");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mk = |d: usize, c: usize, rng: &mut ChaCha8Rng| ViewParams {
            w: Array2::from_shape_fn((d, c), |_| f32_clean(rng)),
            v: ndarray::Array1::from_shape_fn(c, |_| f32_clean(rng)),
            alpha: 10.0,
            beta: 255.0,
            gamma: 0.001,
        };
        let model = ModelArtifact {
            params: vec![mk(4, 8, &mut rng), mk(6, 8, &mut rng), mk(3, 8, &mut rng)],
            is_label_view: vec![false, false, true],
            config: TrainConfig {
                k_s: 0.003,
                k_e: 0.0015,
                max_iter: 400,
                convergence_rtol: 1e-5,
                seed: 99,
            },
        };
        write_model(&path, &model).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back.params.len(), 3);
        assert_eq!(back.is_label_view, vec![false, false, true]);
        assert_eq!(back.label_view_index(), Some(2));
        assert_eq!(back.code_length(), 8);
        assert_eq!(back.config, model.config);
        for (a, b) in back.params.iter().zip(&model.params) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.v, b.v);
            assert_eq!((a.alpha, a.beta, a.gamma), (b.alpha, b.beta, b.gamma));
        }
        // determinism: writing again produces identical bytes
        let first = std::fs::read(&path).unwrap();
        write_model(&path, &model).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn model_rejects_bad_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dmhm");
        let model = ModelArtifact {
            params: vec![ViewParams {
                w: Array2::zeros((2, 4)),
                v: ndarray::Array1::zeros(4),
                alpha: 1.0,
                beta: 1.0,
                gamma: 0.0,
            }],
            is_label_view: vec![false],
            config: TrainConfig::default(),
        };
        write_model(&path, &model).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 42;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_model(&path), Err(DmhError::Format(_))));
    }

    #[test]
    fn json_writer_is_stable() {
        #[derive(Serialize)]
        struct Demo {
            alpha: f64,
            name: &'static str,
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_json(
            &path,
            &Demo {
                alpha: 0.5,
                name: "x",
            },
        )
        .unwrap();
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.ends_with('\n'));
        assert!(first.find("alpha").unwrap() < first.find("name").unwrap());
        write_json(
            &path,
            &Demo {
                alpha: 0.5,
                name: "x",
            },
        )
        .unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), first);
    }
}

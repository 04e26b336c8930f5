//! Binary file formats. All integers and floats are little-endian.
//!
//! Basis checkpoint (`RGKS`):
//!
//! ```text
//! "RGKS" | version u32 | n u64 | k u64 | k columns of n f64 | x: n f64 | λ: f64
//! ```
//!
//! Raw image (`RIMG`):
//!
//! ```text
//! "RIMG" | version u32 | n_x u64 | n_y u64 | n_t u64 | n_x·n_y·n_t f64
//! ```
//!
//! Images also get an 8-bit binary PGM preview per frame.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RGKS";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const IMAGE_MAGIC: &[u8; 4] = b"RIMG";
pub const IMAGE_VERSION: u32 = 1;

/// Refuse headers that would need more than this many floats.
const MAX_FLOATS: u64 = 1 << 32;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn expect_end(r: &mut impl Read) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes".into())),
    }
}

/// Compressed basis, iterate and regularization parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub basis: DenseMatrix,
    pub x: Vec<f64>,
    pub lambda: f64,
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let n = self.basis.rows();
        if self.x.len() != n {
            return Err(Error::DimensionMismatch("checkpoint iterate length".into()));
        }
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(n as u64).to_le_bytes())?;
        w.write_all(&(self.basis.cols() as u64).to_le_bytes())?;
        write_f64s(w, self.basis.as_slice())?;
        write_f64s(w, &self.x)?;
        w.write_all(&self.lambda.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, CHECKPOINT_MAGIC)?;
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let n = read_u64(r)?;
        let k = read_u64(r)?;
        if n == 0 || n.checked_mul(k + 1).is_none_or(|t| t > MAX_FLOATS) {
            return Err(Error::Format(format!("implausible size n = {n}, k = {k}")));
        }
        let (n, k) = (n as usize, k as usize);
        let data = read_f64s(r, n * k)?;
        let basis = DenseMatrix::from_col_major(n, k, data)
            .map_err(|e| Error::Format(format!("basis: {e}")))?;
        let x = read_f64s(r, n)?;
        let lambda = read_f64s(r, 1)?[0];
        expect_end(r)?;
        Ok(Self { basis, x, lambda })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Frames of `n_x × n_y` pixels, column-major with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub n_x: usize,
    pub n_y: usize,
    pub n_t: usize,
    pub data: Vec<f64>,
}

impl RawImage {
    pub fn new(n_x: usize, n_y: usize, n_t: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_x * n_y * n_t {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n_x}x{n_y}x{n_t} image",
                data.len()
            )));
        }
        Ok(Self { n_x, n_y, n_t, data })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let f = self.n_x * self.n_y;
        &self.data[t * f..(t + 1) * f]
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(IMAGE_MAGIC)?;
        w.write_all(&IMAGE_VERSION.to_le_bytes())?;
        for d in [self.n_x, self.n_y, self.n_t] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        write_f64s(w, &self.data)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, IMAGE_MAGIC)?;
        let version = read_u32(r)?;
        if version != IMAGE_VERSION {
            return Err(Error::Format(format!("unsupported image version {version}")));
        }
        let (n_x, n_y, n_t) = (read_u64(r)?, read_u64(r)?, read_u64(r)?);
        let total = n_x
            .checked_mul(n_y)
            .and_then(|v| v.checked_mul(n_t))
            .filter(|t| *t <= MAX_FLOATS)
            .ok_or_else(|| Error::Format("implausible image size".into()))?;
        let data = read_f64s(r, total as usize)?;
        expect_end(r)?;
        Self::new(n_x as usize, n_y as usize, n_t as usize, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Binary PGM (`P5`) preview of one frame. Rows of the picture are the `x`
/// index; gray levels map `[lo, hi]` linearly onto `0..=255`.
pub fn write_pgm(w: &mut impl Write, frame: &[f64], n_x: usize, n_y: usize, lo: f64, hi: f64) -> Result<()> {
    if frame.len() != n_x * n_y {
        return Err(Error::DimensionMismatch("pgm frame".into()));
    }
    write!(w, "P5\n{n_y} {n_x}\n255\n")?;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut row = vec![0u8; n_y];
    for i in 0..n_x {
        for (j, px) in row.iter_mut().enumerate() {
            let v = ((frame[i + n_x * j] - lo) / span).clamp(0.0, 1.0);
            *px = (v * 255.0).round() as u8;
        }
        w.write_all(&row)?;
    }
    Ok(())
}

/// Writes `<stem>.rimg` and one `<stem>[_t].pgm` per frame, scaled to the
/// value range of the whole image.
pub fn save_image(dir: &Path, stem: &str, img: &RawImage) -> Result<()> {
    img.save(&dir.join(format!("{stem}.rimg")))?;
    let lo = img.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for t in 0..img.n_t {
        let name = if img.n_t == 1 {
            format!("{stem}.pgm")
        } else {
            format!("{stem}_{t:03}.pgm")
        };
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        write_pgm(&mut w, img.frame(t), img.n_x, img.n_y, lo, hi)?;
        w.flush()?;
    }
    Ok(())
}

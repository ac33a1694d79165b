//! Lossless on-disk forms of partial and fused textures, plus their PNG
//! previews.
//!
//! Both binary formats are little-endian: an 8-byte magic, `u32`
//! resolution, `u32` reserved (zero), then planar arrays of `N = res²`
//! entries in texel order.
//!
//! | format | arrays |
//! |--------|--------|
//! | `.ptx` | rgb `f64×3N`, weight `f64×N`, cos `f64×N`, valid `u8×N`, covered `u8×N` |
//! | `.ftx` | rgb `f64×3N`, provenance `u8×N`, footprint `u8×N` |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baker::{BakeParams, BakeStats, PartialTexture};
use crate::compose::{FusedTexture, Provenance};
use crate::imaging::{self, ImageError, LinearImage};

pub const PTX_MAGIC: &[u8; 8] = b"UVBPTX\x00\x01";
pub const FTX_MAGIC: &[u8; 8] = b"UVBFTX\x00\x01";
const MAX_RESOLUTION: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: file not found")]
    NotFound { path: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.display().to_string(), source }
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    if !path.exists() {
        return Err(FormatError::NotFound { path: path.display().to_string() });
    }
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

fn put_f64s(w: &mut impl Write, v: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn put_header(w: &mut impl Write, magic: &[u8; 8], res: usize) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&(res as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())
}

struct Reader<'a, R> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, FormatError> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| self.malformed(format!("truncated file ({e})")))?;
        Ok(buf)
    }

    fn malformed(&self, message: String) -> FormatError {
        FormatError::Malformed { path: self.path.display().to_string(), message }
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<usize, FormatError> {
        let head = self.bytes(16)?;
        if &head[..8] != magic {
            return Err(self.malformed("bad magic".into()));
        }
        let res = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        if !res.is_power_of_two() || res > MAX_RESOLUTION {
            return Err(self.malformed(format!("unsupported resolution {res}")));
        }
        Ok(res)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        Ok(self.bytes(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn flags(&mut self, n: usize) -> Result<Vec<bool>, FormatError> {
        self.bytes(n)?
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(self.malformed(format!("flag byte {b}"))),
            })
            .collect()
    }

    fn finish(mut self) -> Result<(), FormatError> {
        let mut rest = [0u8; 1];
        match self.inner.read(&mut rest).map_err(io_err(self.path))? {
            0 => Ok(()),
            _ => Err(self.malformed("trailing bytes".into())),
        }
    }
}

fn rgb_triples(flat: Vec<f64>) -> Vec<[f64; 3]> {
    flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

pub fn write_partial(path: impl AsRef<Path>, tex: &PartialTexture) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    (|| {
        put_header(&mut w, PTX_MAGIC, tex.resolution)?;
        put_f64s(&mut w, tex.rgb.iter().flatten().copied())?;
        put_f64s(&mut w, tex.weight.iter().copied())?;
        put_f64s(&mut w, tex.cos_angle.iter().copied())?;
        w.write_all(&tex.valid.iter().map(|&b| b as u8).collect::<Vec<_>>())?;
        w.write_all(&tex.covered.iter().map(|&b| b as u8).collect::<Vec<_>>())?;
        w.flush()
    })()
    .map_err(io_err(path))
}

pub fn read_partial(path: impl AsRef<Path>) -> Result<PartialTexture, FormatError> {
    let path = path.as_ref();
    let mut r = Reader { inner: open(path)?, path };
    let resolution = r.header(PTX_MAGIC)?;
    let n = resolution * resolution;
    let tex = PartialTexture {
        resolution,
        rgb: rgb_triples(r.f64s(3 * n)?),
        weight: r.f64s(n)?,
        cos_angle: r.f64s(n)?,
        valid: r.flags(n)?,
        covered: r.flags(n)?,
    };
    r.finish()?;
    Ok(tex)
}

pub fn write_fused(path: impl AsRef<Path>, tex: &FusedTexture) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    (|| {
        put_header(&mut w, FTX_MAGIC, tex.resolution)?;
        put_f64s(&mut w, tex.rgb.iter().flatten().copied())?;
        w.write_all(&tex.provenance.iter().map(|&p| p as u8).collect::<Vec<_>>())?;
        w.write_all(&tex.footprint.iter().map(|&b| b as u8).collect::<Vec<_>>())?;
        w.flush()
    })()
    .map_err(io_err(path))
}

pub fn read_fused(path: impl AsRef<Path>) -> Result<FusedTexture, FormatError> {
    let path = path.as_ref();
    let mut r = Reader { inner: open(path)?, path };
    let resolution = r.header(FTX_MAGIC)?;
    let n = resolution * resolution;
    let rgb = rgb_triples(r.f64s(3 * n)?);
    let provenance = r
        .bytes(n)?
        .into_iter()
        .map(|b| Provenance::from_u8(b).ok_or_else(|| r.malformed(format!("provenance byte {b}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let footprint = r.flags(n)?;
    r.finish()?;
    Ok(FusedTexture { resolution, rgb, provenance, footprint })
}

/// Metadata written next to a `.ptx` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialSidecar {
    pub view: String,
    pub resolution: usize,
    pub params: BakeParams,
    pub stats: BakeStats,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::Json { path: path.display().to_string(), source: e })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, FormatError> {
    let path = path.as_ref();
    let text = std::io::read_to_string(open(path)?).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Json { path: path.display().to_string(), source: e })
}

/// Row index of image row `y` for a texture of resolution `r` (v points up).
#[inline]
fn flipped(r: usize, i: usize) -> usize {
    (r - 1 - i / r) * r + i % r
}

/// Writes `<stem>_color.png`, `<stem>_weight.png`, `<stem>_cos.png` and
/// `<stem>_valid.png` into `dir`.
pub fn save_partial_pngs(tex: &PartialTexture, dir: &Path, stem: &str) -> Result<(), FormatError> {
    let r = tex.resolution;
    LinearImage::from_fn(r, r, |x, y| tex.rgb[(r - 1 - y) * r + x]).save_png(dir.join(format!("{stem}_color.png")))?;
    imaging::save_gray16(dir.join(format!("{stem}_weight.png")), r, r, (0..r * r).map(|i| tex.weight[flipped(r, i)]))?;
    imaging::save_gray16(dir.join(format!("{stem}_cos.png")), r, r, (0..r * r).map(|i| tex.cos_angle[flipped(r, i)]))?;
    imaging::save_bitmask(dir.join(format!("{stem}_valid.png")), r, r, (0..r * r).map(|i| tex.valid[flipped(r, i)]))?;
    Ok(())
}

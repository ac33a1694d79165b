//! Fusion of two partial textures and deterministic hole filling.

use std::path::Path;
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baker::PartialTexture;
use crate::imaging::{self, ImageError, LinearImage, Rgb};

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(usize, usize),
    #[error("fill domain has {actual} entries, expected {expected}")]
    DomainSize { expected: usize, actual: usize },
    #[error("external inpainter: {0}")]
    External(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Where a fused texel's colour came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Provenance {
    Empty = 0,
    Front = 1,
    Back = 2,
    Both = 3,
    Inpainted = 4,
}

impl Provenance {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Provenance::Empty,
            1 => Provenance::Front,
            2 => Provenance::Back,
            3 => Provenance::Both,
            4 => Provenance::Inpainted,
            _ => return None,
        })
    }
}

/// Palette of the exported provenance map, indexed by `Provenance as u8`.
pub const PROVENANCE_PALETTE: [[u8; 3]; 5] = [
    [0, 0, 0],       // empty
    [220, 50, 47],   // front
    [38, 139, 210],  // back
    [133, 153, 0],   // both
    [147, 161, 161], // inpainted
];

#[derive(Debug, Clone, PartialEq)]
pub struct FusedTexture {
    pub resolution: usize,
    pub rgb: Vec<Rgb>,
    pub provenance: Vec<Provenance>,
    /// Atlas footprint, the default fill domain.
    pub footprint: Vec<bool>,
}

impl FusedTexture {
    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }

    /// Colour map as a linear image, rows flipped so that v points up.
    pub fn to_image(&self) -> LinearImage {
        let r = self.resolution;
        LinearImage::from_fn(r, r, |x, y| self.rgb[(r - 1 - y) * r + x])
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        self.to_image().save_png(path)
    }

    pub fn save_provenance_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let r = self.resolution;
        let idx: Vec<u8> = (0..r * r).map(|i| self.provenance[(r - 1 - i / r) * r + i % r] as u8).collect();
        imaging::save_indexed(path, r, r, &PROVENANCE_PALETTE, &idx)
    }
}

/// How texels valid in both views are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FuseMode {
    /// Confidence-weighted mean.
    #[default]
    Blend,
    /// Take the view with the larger weight (front on ties).
    Select,
}

fn check_res(a: &PartialTexture, b: &PartialTexture) -> Result<(), ComposeError> {
    if a.resolution != b.resolution {
        return Err(ComposeError::ResolutionMismatch(a.resolution, b.resolution));
    }
    Ok(())
}

/// Texels valid in both views.
pub fn overlap_mask(a: &PartialTexture, b: &PartialTexture) -> Result<Vec<bool>, ComposeError> {
    check_res(a, b)?;
    Ok(a.valid.par_iter().zip(&b.valid).map(|(&x, &y)| x && y).collect())
}

pub fn fuse(a: &PartialTexture, b: &PartialTexture, mode: FuseMode) -> Result<FusedTexture, ComposeError> {
    check_res(a, b)?;
    let (rgb, provenance): (Vec<Rgb>, Vec<Provenance>) = (0..a.len())
        .into_par_iter()
        .map(|i| match (a.valid[i], b.valid[i]) {
            (true, true) => {
                let (wa, wb) = (a.weight[i], b.weight[i]);
                let c = match mode {
                    FuseMode::Blend => {
                        let s = wa + wb;
                        std::array::from_fn(|k| (wa * a.rgb[i][k] + wb * b.rgb[i][k]) / s)
                    }
                    FuseMode::Select if wb > wa => b.rgb[i],
                    FuseMode::Select => a.rgb[i],
                };
                (c, Provenance::Both)
            }
            (true, false) => (a.rgb[i], Provenance::Front),
            (false, true) => (b.rgb[i], Provenance::Back),
            (false, false) => ([0.0; 3], Provenance::Empty),
        })
        .unzip();
    let footprint = a.covered.iter().zip(&b.covered).map(|(&x, &y)| x || y).collect();
    Ok(FusedTexture { resolution: a.resolution, rgb, provenance, footprint })
}

struct Level {
    size: usize,
    rgb: Vec<Rgb>,
    weight: Vec<f64>,
}

fn pull(fine: &Level) -> Level {
    let size = fine.size.div_ceil(2);
    let (rgb, weight): (Vec<Rgb>, Vec<f64>) = (0..size * size)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % size, i / size);
            let mut acc = [0.0; 3];
            let mut w = 0.0;
            for cy in 2 * y..(2 * y + 2).min(fine.size) {
                for cx in 2 * x..(2 * x + 2).min(fine.size) {
                    let j = cy * fine.size + cx;
                    let wj = fine.weight[j];
                    if wj > 0.0 {
                        for k in 0..3 {
                            acc[k] += wj * fine.rgb[j][k];
                        }
                        w += wj;
                    }
                }
            }
            if w > 0.0 {
                (acc.map(|c| c / w), w.min(1.0))
            } else {
                ([0.0; 3], 0.0)
            }
        })
        .unzip();
    Level { size, rgb, weight }
}

/// Bilinear lookup of the coarse level at the centre of fine texel (x, y).
#[inline]
fn upsample(coarse: &[Rgb], size: usize, x: usize, y: usize) -> Rgb {
    let fx = (x as f64 + 0.5) * 0.5 - 0.5;
    let fy = (y as f64 + 0.5) * 0.5 - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let (tx, ty) = (fx - x0, fy - y0);
    let max = size as i64 - 1;
    let ix = |v: i64| v.clamp(0, max) as usize;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |xx: i64, yy: i64| coarse[ix(yy) * size + ix(xx)];
    let (p00, p10, p01, p11) = (at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1));
    std::array::from_fn(|k| {
        let top = p00[k] + (p10[k] - p00[k]) * tx;
        let bottom = p01[k] + (p11[k] - p01[k]) * tx;
        top + (bottom - top) * ty
    })
}

/// Pull-push hole filling.
///
/// Non-empty texels are the sources (weight 1). The pull phase builds a
/// 2x-downsampled weighted-average pyramid; the push phase walks back down,
/// blending each level's own value with the bilinearly upsampled coarser
/// result in proportion to its weight. Empty texels inside `fill_domain`
/// receive the level-0 push value and become `Inpainted`; every other texel
/// is returned bit-identical. Without any source texel nothing is filled.
pub fn inpaint_pullpush(tex: &FusedTexture, fill_domain: &[bool]) -> Result<FusedTexture, ComposeError> {
    let n = tex.resolution * tex.resolution;
    if fill_domain.len() != n {
        return Err(ComposeError::DomainSize { expected: n, actual: fill_domain.len() });
    }
    let needs_fill = (0..n).any(|i| fill_domain[i] && tex.provenance[i] == Provenance::Empty);
    if !needs_fill || tex.provenance.iter().all(|&p| p == Provenance::Empty) {
        return Ok(tex.clone());
    }
    let filled = pullpush_fill(tex.resolution, &tex.rgb, &tex.provenance.iter().map(|&p| p != Provenance::Empty).collect::<Vec<_>>());

    let mut out = tex.clone();
    out.rgb.par_iter_mut().zip(out.provenance.par_iter_mut()).enumerate().for_each(|(i, (c, p))| {
        if fill_domain[i] && *p == Provenance::Empty {
            *c = filled[i].map(|v| v.clamp(0.0, 1.0));
            *p = Provenance::Inpainted;
        }
    });
    Ok(out)
}

/// Full-resolution pull-push reconstruction from the `known` texels. At
/// least one texel must be known.
pub fn pullpush_fill(resolution: usize, rgb: &[Rgb], known: &[bool]) -> Vec<Rgb> {
    let base = Level {
        size: resolution,
        rgb: rgb.to_vec(),
        weight: known.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
    };
    let mut pyramid = vec![base];
    while pyramid.last().unwrap().size > 1 {
        let next = pull(pyramid.last().unwrap());
        pyramid.push(next);
    }

    // push: the top level is complete because some texel is known
    let mut filled = pyramid.pop().unwrap().rgb;
    let mut coarse_size = 1;
    while let Some(level) = pyramid.pop() {
        let size = level.size;
        filled = (0..size * size)
            .into_par_iter()
            .map(|i| {
                let w = level.weight[i];
                if w >= 1.0 {
                    return level.rgb[i];
                }
                let up = upsample(&filled, coarse_size, i % size, i / size);
                if w > 0.0 {
                    std::array::from_fn(|k| w * level.rgb[i][k] + (1.0 - w) * up[k])
                } else {
                    up
                }
            })
            .collect();
        coarse_size = size;
    }
    filled
}

/// Writes the exchange images of the external inpainting contract: colour as
/// 8-bit sRGB and a 1-bit mask that is white on every empty texel.
pub fn write_exchange(tex: &FusedTexture, color: &Path, mask: &Path) -> Result<(), ComposeError> {
    let r = tex.resolution;
    tex.save_png(color)?;
    imaging::save_bitmask(mask, r, r, (0..r * r).map(|i| tex.provenance[(r - 1 - i / r) * r + i % r] == Provenance::Empty))?;
    Ok(())
}

/// Runs an external inpainter as `<program> [args...] <color.png> <mask.png>
/// <out.png>` and takes its output on empty texels of the fill domain.
pub fn inpaint_external(tex: &FusedTexture, command: &[String], fill_domain: &[bool]) -> Result<FusedTexture, ComposeError> {
    let n = tex.resolution * tex.resolution;
    if fill_domain.len() != n {
        return Err(ComposeError::DomainSize { expected: n, actual: fill_domain.len() });
    }
    let Some((program, args)) = command.split_first() else {
        return Err(ComposeError::External("empty command".into()));
    };
    let dir = tempfile::tempdir().map_err(|e| ComposeError::External(format!("temporary directory: {e}")))?;
    let color = dir.path().join("color.png");
    let mask = dir.path().join("mask.png");
    let out_path = dir.path().join("out.png");
    write_exchange(tex, &color, &mask)?;

    let output = Command::new(program)
        .args(args)
        .arg(&color)
        .arg(&mask)
        .arg(&out_path)
        .output()
        .map_err(|e| ComposeError::External(format!("failed to launch '{program}': {e}")))?;
    if !output.status.success() {
        return Err(ComposeError::External(format!(
            "'{program}' exited with {}; stderr: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let filled = LinearImage::load(&out_path)
        .map_err(|e| ComposeError::External(format!("malformed output image: {e}")))?;
    let r = tex.resolution;
    if (filled.width, filled.height) != (r, r) {
        return Err(ComposeError::External(format!(
            "output image is {}x{}, expected {r}x{r}",
            filled.width, filled.height
        )));
    }
    let mut out = tex.clone();
    for i in 0..n {
        if fill_domain[i] && out.provenance[i] == Provenance::Empty {
            out.rgb[i] = filled.get(i % r, r - 1 - i / r);
            out.provenance[i] = Provenance::Inpainted;
        }
    }
    Ok(out)
}

/// The reference side of the external contract: reads `color` and `mask`,
/// pull-push fills the white mask texels and writes `out`.
pub fn pullpush_png(color: &Path, mask: &Path, out: &Path) -> Result<(), ComposeError> {
    let img = LinearImage::load(color)?;
    let m = imaging::Mask::load(mask)?;
    if (m.width, m.height) != (img.width, img.height) || img.width != img.height {
        return Err(ComposeError::External("colour and mask must be square and of equal size".into()));
    }
    let known: Vec<bool> = m.alpha.iter().map(|&a| a < 0.5).collect();
    let result = if known.iter().any(|&k| k) {
        pullpush_fill(img.width, &img.pixels, &known)
            .into_iter()
            .zip(&known)
            .zip(&img.pixels)
            .map(|((f, &k), &orig)| if k { orig } else { f.map(|v| v.clamp(0.0, 1.0)) })
            .collect()
    } else {
        img.pixels.clone()
    };
    LinearImage { width: img.width, height: img.height, pixels: result }.save_png(out)?;
    Ok(())
}

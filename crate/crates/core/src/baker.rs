//! Inverse rasterization: for every texel of the UV atlas find its surface
//! point, project it into a photograph, test visibility and incidence, and
//! sample the colour. One [`PartialTexture`] is produced per view.
//!
//! Texel `(ix, iy)` has its centre at `((ix + 0.5) / res, (iy + 0.5) / res)`
//! in UV space and is stored at index `iy * res + ix`, i.e. row 0 is `v ≈ 0`.
//! PNG exports flip rows so that the written image follows the usual OBJ
//! texture orientation (v up).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{barycentric, bary_inside, Camera, GeometryError, Mesh, Vec2, Vec3};
use crate::imaging::{LinearImage, Mask, Rgb};
use crate::parallel::{bin_rows, BAND_ROWS};
use crate::visibility::{is_visible, DepthBuffer, DEFAULT_DEPTH_EPS};

pub use crate::imaging::sample_bilinear;

#[derive(Debug, Error)]
pub enum BakeError {
    #[error("{what}: expected {expected:?}, got {actual:?}")]
    DimensionMismatch { what: &'static str, expected: (usize, usize), actual: (usize, usize) },
    #[error("invalid bake parameters: {0}")]
    InvalidParams(String),
    #[error("use_mask is set but no mask image was supplied")]
    MissingMask,
    #[error("texel {0} has no surface")]
    NoSurface(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-texel surface correspondence of the UV atlas.
#[derive(Debug, Clone, PartialEq)]
pub struct UvCoverageMap {
    pub resolution: usize,
    pub face: Vec<Option<u32>>,
    pub bary: Vec<[f64; 3]>,
    /// Faces skipped because their UV triangle has (near) zero area.
    pub degenerate_faces: usize,
}

impl UvCoverageMap {
    pub fn covered_count(&self) -> usize {
        self.face.iter().filter(|f| f.is_some()).count()
    }

    /// Footprint of the atlas: texels covered by some face.
    pub fn footprint(&self) -> Vec<bool> {
        self.face.iter().map(Option::is_some).collect()
    }
}

#[inline]
pub fn texel_center(resolution: usize, index: usize) -> Vec2 {
    let (ix, iy) = (index % resolution, index / resolution);
    Vec2::new((ix as f64 + 0.5) / resolution as f64, (iy as f64 + 0.5) / resolution as f64)
}

fn center_range(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

/// Rasterizes every face into UV space at texel centres.
///
/// Where faces overlap (seams), the face whose smallest barycentric
/// coordinate is largest wins; ties go to the lower face index.
pub fn uv_rasterize(mesh: &Mesh, resolution: usize) -> Result<UvCoverageMap, BakeError> {
    if resolution == 0 {
        return Err(BakeError::InvalidParams("resolution must be at least 1".into()));
    }
    let res = resolution as f64;
    let mut degenerate_faces = 0;
    let mut cols = Vec::with_capacity(mesh.faces.len());
    let mut rows = Vec::with_capacity(mesh.faces.len());
    for fi in 0..mesh.faces.len() {
        let t = mesh.face_uvs(fi);
        let d1 = t[1] - t[0];
        let d2 = t[2] - t[0];
        if !((d1.x * d2.y - d1.y * d2.x).abs() * 0.5 > crate::geometry::MIN_TRIANGLE_AREA) {
            degenerate_faces += 1;
            cols.push(None);
            rows.push(None);
            continue;
        }
        let lo = t.iter().fold(Vec2::repeat(f64::INFINITY), |m, p| m.inf(p)) * res;
        let hi = t.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |m, p| m.sup(p)) * res;
        // widen by the inclusion tolerance so on-edge centres are not lost to rounding
        let pad = 1e-9 * res;
        let c = center_range(lo.x - pad, hi.x + pad, resolution);
        let r = center_range(lo.y - pad, hi.y + pad, resolution);
        if c.is_some() && r.is_some() {
            cols.push(c);
            rows.push(r);
        } else {
            cols.push(None);
            rows.push(None);
        }
    }
    let bins = bin_rows(&rows, resolution);

    let mut face = vec![None; resolution * resolution];
    let mut bary = vec![[0.0; 3]; resolution * resolution];
    face.par_chunks_mut(BAND_ROWS * resolution)
        .zip(bary.par_chunks_mut(BAND_ROWS * resolution))
        .enumerate()
        .for_each(|(band, (face, bary))| {
            let y0 = band * BAND_ROWS;
            let nrows = face.len() / resolution;
            let mut best = vec![f64::NEG_INFINITY; face.len()];
            for &fi in &bins[band] {
                let tri = mesh.face_uvs(fi as usize);
                let (r0, r1) = rows[fi as usize].unwrap();
                let (c0, c1) = cols[fi as usize].unwrap();
                for iy in r0.max(y0)..=r1.min(y0 + nrows - 1) {
                    for ix in c0..=c1 {
                        let p = Vec2::new((ix as f64 + 0.5) / res, (iy as f64 + 0.5) / res);
                        let Ok(l) = barycentric(&tri, &p) else { continue };
                        if !bary_inside(&l) {
                            continue;
                        }
                        let score = l[0].min(l[1]).min(l[2]);
                        let k = (iy - y0) * resolution + ix;
                        if score > best[k] {
                            best[k] = score;
                            face[k] = Some(fi);
                            bary[k] = l;
                        }
                    }
                }
            }
        });

    Ok(UvCoverageMap { resolution, face, bary, degenerate_faces })
}

/// Surface position and interpolated unit normal of a covered texel.
pub fn texel_geometry(mesh: &Mesh, coverage: &UvCoverageMap, texel: usize) -> Result<(Vec3, Vec3), BakeError> {
    let Some(fi) = coverage.face.get(texel).copied().flatten() else {
        return Err(BakeError::NoSurface(texel));
    };
    Ok(surface_at(mesh, fi as usize, &coverage.bary[texel]))
}

#[inline]
fn surface_at(mesh: &Mesh, face: usize, l: &[f64; 3]) -> (Vec3, Vec3) {
    let p = mesh.face_positions(face);
    let n = mesh.face_normals(face);
    let position = p[0] * l[0] + p[1] * l[1] + p[2] * l[2];
    let blended = n[0] * l[0] + n[1] * l[1] + n[2] * l[2];
    let len = blended.norm();
    let normal = if len > 1e-12 {
        blended / len
    } else {
        // opposing vertex normals cancel; fall back to the geometric normal
        let g = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let gl = g.norm();
        if gl > 0.0 {
            g / gl
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        }
    };
    (position, normal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BakeParams {
    /// Minimum accepted incidence cosine.
    pub tau: f64,
    /// Exponent `p` of the confidence weight `cos^p`.
    pub weight_exponent: f64,
    /// Depth tolerance of the visibility test, scene units.
    pub depth_eps: f64,
    pub use_mask: bool,
}

impl Default for BakeParams {
    fn default() -> Self {
        BakeParams { tau: 0.1, weight_exponent: 2.0, depth_eps: DEFAULT_DEPTH_EPS, use_mask: false }
    }
}

impl BakeParams {
    pub fn validate(&self) -> Result<(), BakeError> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(BakeError::InvalidParams(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if !(self.weight_exponent >= 0.0 && self.weight_exponent.is_finite()) {
            return Err(BakeError::InvalidParams(format!("weight exponent must be >= 0, got {}", self.weight_exponent)));
        }
        if !(self.depth_eps > 0.0 && self.depth_eps.is_finite()) {
            return Err(BakeError::InvalidParams(format!("depth eps must be > 0, got {}", self.depth_eps)));
        }
        Ok(())
    }
}

/// Colour and confidence baked from one view.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTexture {
    pub resolution: usize,
    /// Linear RGB in [0,1]; zero where not valid.
    pub rgb: Vec<Rgb>,
    pub weight: Vec<f64>,
    /// Incidence cosine of valid texels; zero elsewhere.
    pub cos_angle: Vec<f64>,
    pub valid: Vec<bool>,
    /// Atlas footprint the bake ran over.
    pub covered: Vec<bool>,
}

impl PartialTexture {
    pub fn empty(resolution: usize) -> Self {
        let n = resolution * resolution;
        PartialTexture {
            resolution,
            rgb: vec![[0.0; 3]; n],
            weight: vec![0.0; n],
            cos_angle: vec![0.0; n],
            valid: vec![false; n],
            covered: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&v| v).count()
    }
}

/// Counts of texels by outcome. Every covered texel lands in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BakeStats {
    pub uncovered: usize,
    pub valid: usize,
    pub behind_camera: usize,
    pub outside_image: usize,
    pub occluded: usize,
    pub masked: usize,
    pub grazing: usize,
}

impl std::ops::Add for BakeStats {
    type Output = BakeStats;
    fn add(self, o: BakeStats) -> BakeStats {
        BakeStats {
            uncovered: self.uncovered + o.uncovered,
            valid: self.valid + o.valid,
            behind_camera: self.behind_camera + o.behind_camera,
            outside_image: self.outside_image + o.outside_image,
            occluded: self.occluded + o.occluded,
            masked: self.masked + o.masked,
            grazing: self.grazing + o.grazing,
        }
    }
}

enum Outcome {
    Valid { rgb: Rgb, cos: f64, weight: f64 },
    BehindCamera,
    OutsideImage,
    Occluded,
    Masked,
    Grazing,
}

/// Bakes one photograph into the atlas.
pub fn bake_view(
    mesh: &Mesh,
    camera: &Camera,
    image: &LinearImage,
    mask: Option<&Mask>,
    coverage: &UvCoverageMap,
    depth: &DepthBuffer,
    params: &BakeParams,
) -> Result<(PartialTexture, BakeStats), BakeError> {
    params.validate()?;
    camera.validate()?;
    let image_dims = (image.width, image.height);
    if (depth.width, depth.height) != image_dims {
        return Err(BakeError::DimensionMismatch { what: "depth buffer", expected: image_dims, actual: (depth.width, depth.height) });
    }
    let cam_dims = (camera.image_width as usize, camera.image_height as usize);
    if cam_dims != image_dims {
        return Err(BakeError::DimensionMismatch { what: "camera image size", expected: image_dims, actual: cam_dims });
    }
    let mask = if params.use_mask {
        let m = mask.ok_or(BakeError::MissingMask)?;
        if (m.width, m.height) != image_dims {
            return Err(BakeError::DimensionMismatch { what: "mask", expected: image_dims, actual: (m.width, m.height) });
        }
        Some(m)
    } else {
        None
    };

    let projector = camera.projector();
    let res = coverage.resolution;
    let mut tex = PartialTexture::empty(res);
    tex.covered = coverage.footprint();

    let bake_texel = |i: usize| -> Option<Outcome> {
        let fi = coverage.face[i]?;
        let (position, normal) = surface_at(mesh, fi as usize, &coverage.bary[i]);
        let Ok((pixel, z)) = projector.project(&position) else {
            return Some(Outcome::BehindCamera);
        };
        let Some((px, py)) = depth.pixel_of(&pixel) else {
            return Some(Outcome::OutsideImage);
        };
        if !is_visible(depth, &pixel, z, params.depth_eps) {
            return Some(Outcome::Occluded);
        }
        if let Some(m) = mask {
            if m.get(px, py) < 0.5 {
                return Some(Outcome::Masked);
            }
        }
        let Ok(view) = projector.view_vector(&position) else {
            return Some(Outcome::BehindCamera);
        };
        let cos = normal.dot(&-view).clamp(-1.0, 1.0);
        if cos < params.tau {
            return Some(Outcome::Grazing);
        }
        let weight = cos.powf(params.weight_exponent);
        if !(weight > 0.0) {
            return Some(Outcome::Grazing);
        }
        Some(Outcome::Valid { rgb: sample_bilinear(image, &pixel), cos, weight })
    };

    let stats = tex
        .rgb
        .par_chunks_mut(res)
        .zip(tex.weight.par_chunks_mut(res))
        .zip(tex.cos_angle.par_chunks_mut(res))
        .zip(tex.valid.par_chunks_mut(res))
        .enumerate()
        .map(|(row, (((rgb, weight), cos_angle), valid))| {
            let mut stats = BakeStats::default();
            for x in 0..res {
                match bake_texel(row * res + x) {
                    None => stats.uncovered += 1,
                    Some(Outcome::Valid { rgb: c, cos, weight: w }) => {
                        rgb[x] = c;
                        cos_angle[x] = cos;
                        weight[x] = w;
                        valid[x] = true;
                        stats.valid += 1;
                    }
                    Some(Outcome::BehindCamera) => stats.behind_camera += 1,
                    Some(Outcome::OutsideImage) => stats.outside_image += 1,
                    Some(Outcome::Occluded) => stats.occluded += 1,
                    Some(Outcome::Masked) => stats.masked += 1,
                    Some(Outcome::Grazing) => stats.grazing += 1,
                }
            }
            stats
        })
        .reduce(BakeStats::default, |a, b| a + b);

    Ok((tex, stats))
}

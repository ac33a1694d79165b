//! Forward z-buffer rasterization of the posed mesh into image space.

use std::path::Path;

use rayon::prelude::*;

use crate::geometry::{Camera, GeometryError, Mesh, Vec2};
use crate::imaging::{self, ImageError};
use crate::parallel::{bin_rows, BAND_ROWS};

/// Default depth tolerance for [`is_visible`], in scene units.
pub const DEFAULT_DEPTH_EPS: f64 = 1e-2;

/// Screen-space triangles with less area than this (in pixels²) cover no
/// pixel centres reliably and are dropped.
const MIN_SCREEN_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub width: usize,
    pub height: usize,
    /// Nearest depth per pixel, `+inf` where empty.
    pub depth: Vec<f64>,
    /// Index of the nearest face per pixel, `-1` where empty.
    pub face_id: Vec<i32>,
    pub stats: RasterStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterStats {
    /// Faces with at least one vertex behind a perspective camera.
    pub skipped_behind: usize,
    /// Faces with (near) zero projected area.
    pub degenerate: usize,
}

impl DepthBuffer {
    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Pixel containing continuous coordinate `p`, if inside the buffer.
    #[inline]
    pub fn pixel_of(&self, p: &Vec2) -> Option<(usize, usize)> {
        let x = p.x.floor();
        let y = p.y.floor();
        if x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64 {
            Some((x as usize, y as usize))
        } else {
            None
        }
    }

    pub fn covered_pixels(&self) -> usize {
        self.face_id.iter().filter(|&&f| f >= 0).count()
    }

    /// Writes `<stem>_depth.png` (16-bit, nearer is brighter, empty = 0) and
    /// `<stem>_faces.i32` (row-major little-endian int32 face ids).
    pub fn write_debug(&self, dir: &Path, stem: &str) -> Result<(), ImageError> {
        let finite = self.depth.iter().copied().filter(|d| d.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let levels: Vec<u16> = self
            .depth
            .iter()
            .map(|&d| if d.is_finite() { 1 + ((hi - d) / span * 65534.0).round() as u16 } else { 0 })
            .collect();
        imaging::save_gray16_raw(dir.join(format!("{stem}_depth.png")), self.width, self.height, &levels)?;
        let raw: Vec<u8> = self.face_id.iter().flat_map(|f| f.to_le_bytes()).collect();
        let path = dir.join(format!("{stem}_faces.i32"));
        std::fs::write(&path, raw).map_err(|e| ImageError::Io { path: path.display().to_string(), source: e })
    }
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Top-left ownership for an edge of a positively oriented triangle
/// (y down): top edges run in +x, left edges run in -y.
#[inline]
fn owns_edge(a: &Vec2, b: &Vec2) -> bool {
    let d = b - a;
    d.y < 0.0 || (d.y == 0.0 && d.x > 0.0)
}

/// Edge function anchored at the lexicographically smaller endpoint, so the
/// two triangles sharing an edge evaluate exactly opposite values.
#[derive(Clone, Copy)]
struct Edge {
    anchor: Vec2,
    dir: Vec2,
    sign: f64,
    owned: bool,
}

impl Edge {
    fn new(a: &Vec2, b: &Vec2) -> Self {
        let (anchor, dir, sign) = if (a.x, a.y) <= (b.x, b.y) { (*a, b - a, 1.0) } else { (*b, a - b, -1.0) };
        Edge { anchor, dir, sign, owned: owns_edge(a, b) }
    }

    #[inline]
    fn eval(&self, p: &Vec2) -> f64 {
        self.sign * (self.dir.x * (p.y - self.anchor.y) - self.dir.y * (p.x - self.anchor.x))
    }
}

struct ScreenTri {
    /// Edges opposite vertex 0, 1, 2.
    edges: [Edge; 3],
    z: [f64; 3],
    inv_area: f64,
    x_range: (usize, usize),
    y_range: (usize, usize),
}

impl ScreenTri {
    /// Interpolated depth at `p` if the triangle covers it.
    #[inline]
    fn depth_at(&self, p: &Vec2, perspective: bool) -> Option<f64> {
        let mut w = [0.0; 3];
        for (wi, e) in w.iter_mut().zip(&self.edges) {
            let v = e.eval(p);
            if !(v > 0.0 || (v == 0.0 && e.owned)) {
                return None;
            }
            *wi = v * self.inv_area;
        }
        // relative to vertex 0 so a constant attribute interpolates exactly
        let lerp = |a: [f64; 3]| a[0] + w[1] * (a[1] - a[0]) + w[2] * (a[2] - a[0]);
        Some(if perspective { 1.0 / lerp(self.z.map(|z| 1.0 / z)) } else { lerp(self.z) })
    }
}

/// Rasterizes every face at pixel centres into a depth / face-id buffer.
///
/// Nearest depth wins; at exactly equal depth the lower face index wins, so
/// the result does not depend on how work is split across workers. Faces
/// with a vertex behind a perspective camera are skipped, not clipped.
pub fn rasterize_depth(mesh: &Mesh, camera: &Camera, width: usize, height: usize) -> Result<DepthBuffer, GeometryError> {
    if width == 0 || height == 0 {
        return Err(GeometryError::InvalidCamera(format!("zero-area output {width}x{height}")));
    }
    if mesh.faces.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    camera.validate()?;
    let projector = camera.projector();
    let perspective = projector.is_perspective();

    let projected: Vec<Option<(Vec2, f64)>> = mesh.positions.par_iter().map(|p| projector.project(p).ok()).collect();

    let mut stats = RasterStats::default();
    let mut tris: Vec<Option<ScreenTri>> = Vec::with_capacity(mesh.faces.len());
    for face in &mesh.faces {
        let corners = face.position.map(|i| projected[i as usize]);
        let [Some(a), Some(b), Some(c)] = corners else {
            stats.skipped_behind += 1;
            tris.push(None);
            continue;
        };
        let (mut p, mut z) = ([a.0, b.0, c.0], [a.1, b.1, c.1]);
        let mut area = edge(&p[0], &p[1], &p[2]);
        if area < 0.0 {
            p.swap(1, 2);
            z.swap(1, 2);
            area = -area;
        }
        if !(area > MIN_SCREEN_AREA) || !area.is_finite() {
            stats.degenerate += 1;
            tris.push(None);
            continue;
        }
        let min_x = p.iter().map(|v| v.x).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
        match (center_range(min_x, max_x, width), center_range(min_y, max_y, height)) {
            (Some(x_range), Some(y_range)) => tris.push(Some(ScreenTri {
                edges: [Edge::new(&p[1], &p[2]), Edge::new(&p[2], &p[0]), Edge::new(&p[0], &p[1])],
                z,
                inv_area: 1.0 / area,
                x_range,
                y_range,
            })),
            _ => tris.push(None),
        }
    }

    let row_ranges: Vec<Option<(usize, usize)>> = tris.iter().map(|t| t.as_ref().map(|t| t.y_range)).collect();
    let bins = bin_rows(&row_ranges, height);

    let mut depth = vec![f64::INFINITY; width * height];
    let mut face_id = vec![-1i32; width * height];
    depth
        .par_chunks_mut(BAND_ROWS * width)
        .zip(face_id.par_chunks_mut(BAND_ROWS * width))
        .enumerate()
        .for_each(|(band, (depth, ids))| {
            let y0 = band * BAND_ROWS;
            let rows = depth.len() / width;
            for &fi in &bins[band] {
                let tri = tris[fi as usize].as_ref().expect("binned faces are rasterizable");
                let (ry0, ry1) = tri.y_range;
                let lo = ry0.max(y0);
                let hi = ry1.min(y0 + rows - 1);
                for y in lo..=hi {
                    let py = y as f64 + 0.5;
                    let row = (y - y0) * width;
                    for x in tri.x_range.0..=tri.x_range.1 {
                        let p = Vec2::new(x as f64 + 0.5, py);
                        if let Some(d) = tri.depth_at(&p, perspective) {
                            // strict: equal depth keeps the earlier (lower-index) face
                            if d < depth[row + x] {
                                depth[row + x] = d;
                                ids[row + x] = fi as i32;
                            }
                        }
                    }
                }
            }
        });

    Ok(DepthBuffer { width, height, depth, face_id, stats })
}

/// Inclusive range of pixel indices whose centres lie in `[lo, hi]`.
fn center_range(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    if first > last || !first.is_finite() || !last.is_finite() {
        None
    } else {
        Some((first as usize, last as usize))
    }
}

/// True when `pixel` falls inside the buffer and `depth` is not behind the
/// stored depth by more than `eps`.
#[inline]
pub fn is_visible(buffer: &DepthBuffer, pixel: &Vec2, depth: f64, eps: f64) -> bool {
    match buffer.pixel_of(pixel) {
        Some((x, y)) => depth <= buffer.depth[buffer.index(x, y)] + eps,
        None => false,
    }
}

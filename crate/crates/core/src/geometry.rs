//! Mesh and camera data model, projection math and barycentric utilities.
//!
//! Conventions used throughout the crate:
//!
//! * image origin is the top-left corner, +x right, +y down, pixel centres at
//!   integer + 0.5;
//! * surface normals point outward;
//! * the incidence cosine of a surface point is `n · (-v)` where `v` is the
//!   unit direction from the camera towards the point, so a surface facing the
//!   camera has cosine 1 and angle 0.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance used when checking unit vectors and orthonormal matrices.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Minimum absolute signed area for a triangle to be considered non-degenerate
/// by [`barycentric`].
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Tolerance on barycentric coordinates for inside/on-edge tests.
pub const BARY_EPS: f64 = 1e-7;

/// Smallest camera-space depth accepted by a perspective projection.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind camera (camera-space z = {0})")]
    BehindCamera(f64),
    #[error("degenerate face (signed area {0:e})")]
    DegenerateFace(f64),
    #[error("zero-length view vector: point coincides with the camera centre")]
    ZeroViewVector,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("mesh has no faces")]
    EmptyMesh,
}

/// One triangle: position and uv indices per corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub position: [u32; 3],
    pub uv: [u32; 3],
}

/// A triangle mesh with a UV atlas and derived vertex normals.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub uvs: Vec<Vec2>,
    pub faces: Vec<Face>,
    pub vertex_normals: Vec<Vec3>,
    /// Non-fatal issues found while deriving data (e.g. vertices whose
    /// incident faces are all degenerate).
    pub warnings: Vec<String>,
}

impl Mesh {
    /// Builds a mesh from raw arrays, validating indices and UV range, and
    /// derives vertex normals.
    pub fn new(positions: Vec<Vec3>, uvs: Vec<Vec2>, faces: Vec<Face>) -> Result<Self, MeshError> {
        for (i, uv) in uvs.iter().enumerate() {
            if !uv_in_range(uv) {
                return Err(MeshError::UvOutOfRange { index: i, u: uv.x, v: uv.y });
            }
        }
        for (fi, face) in faces.iter().enumerate() {
            for k in 0..3 {
                if face.position[k] as usize >= positions.len() {
                    return Err(MeshError::IndexOutOfRange { face: fi, kind: "position", index: face.position[k] as i64 });
                }
                if face.uv[k] as usize >= uvs.len() {
                    return Err(MeshError::IndexOutOfRange { face: fi, kind: "uv", index: face.uv[k] as i64 });
                }
            }
        }
        if faces.is_empty() {
            return Err(MeshError::Geometry(GeometryError::EmptyMesh));
        }
        let mut mesh = Mesh { positions, uvs, faces, vertex_normals: Vec::new(), warnings: Vec::new() };
        let (normals, warnings) = compute_vertex_normals(&mesh);
        mesh.vertex_normals = normals;
        mesh.warnings = warnings;
        Ok(mesh)
    }

    pub fn face_positions(&self, face: usize) -> [Vec3; 3] {
        let f = &self.faces[face];
        f.position.map(|i| self.positions[i as usize])
    }

    pub fn face_uvs(&self, face: usize) -> [Vec2; 3] {
        let f = &self.faces[face];
        f.uv.map(|i| self.uvs[i as usize])
    }

    pub fn face_normals(&self, face: usize) -> [Vec3; 3] {
        let f = &self.faces[face];
        f.position.map(|i| self.vertex_normals[i as usize])
    }

    /// Applies the rigid transform `p -> rotation * p + translation` to every
    /// position and re-derives normals.
    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Mesh {
        let positions = self.positions.iter().map(|p| rotation * p + translation).collect();
        let mut mesh = Mesh {
            positions,
            uvs: self.uvs.clone(),
            faces: self.faces.clone(),
            vertex_normals: Vec::new(),
            warnings: Vec::new(),
        };
        let (normals, warnings) = compute_vertex_normals(&mesh);
        mesh.vertex_normals = normals;
        mesh.warnings = warnings;
        mesh
    }

    /// True when both meshes index the same UV atlas (same uv array and the
    /// same per-face uv corners), so textures baked on either are compatible.
    pub fn shares_atlas_with(&self, other: &Mesh) -> bool {
        self.faces.len() == other.faces.len()
            && self.uvs == other.uvs
            && self.faces.iter().zip(&other.faces).all(|(a, b)| a.uv == b.uv)
    }
}

fn uv_in_range(uv: &Vec2) -> bool {
    (0.0..=1.0).contains(&uv.x) && (0.0..=1.0).contains(&uv.y)
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}: file not found")]
    NotFound { path: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face}: {kind} index {index} out of range")]
    IndexOutOfRange { face: usize, kind: &'static str, index: i64 },
    #[error("uv {index} = ({u}, {v}) lies outside [0,1]^2")]
    UvOutOfRange { index: usize, u: f64, v: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Area-weighted vertex normals. Vertices whose incident faces are all
/// degenerate get `(0, 0, 1)` and a warning.
pub fn compute_vertex_normals(mesh: &Mesh) -> (Vec<Vec3>, Vec<String>) {
    let mut acc = vec![Vec3::zeros(); mesh.positions.len()];
    let mut touched = vec![false; mesh.positions.len()];
    for face in &mesh.faces {
        let [a, b, c] = face.position.map(|i| mesh.positions[i as usize]);
        // |cross| is twice the area, so summing raw cross products weights by area
        let n = (b - a).cross(&(c - a));
        for &i in &face.position {
            acc[i as usize] += n;
            touched[i as usize] = true;
        }
    }
    let mut warnings = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                if touched[i] {
                    warnings.push(format!("vertex {i}: all incident faces are degenerate; normal set to (0,0,1)"));
                }
                Vec3::new(0.0, 0.0, 1.0)
            }
        })
        .collect();
    (normals, warnings)
}

/// Projection model of a camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Projection {
    Perspective {
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        /// World-to-camera rotation.
        rotation: [[f64; 3]; 3],
        /// World-to-camera translation.
        translation: [f64; 3],
    },
    /// Orthographic projection followed by uniform scale and image-plane shift.
    /// The optional rotation orients the body in the camera frame (identity
    /// when absent).
    WeakPerspective {
        s: f64,
        tx: f64,
        ty: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation: Option<[[f64; 3]; 3]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    #[serde(flatten)]
    pub projection: Projection,
    pub image_width: u32,
    pub image_height: u32,
}

pub fn mat3_from_rows(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::new(
        rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0], rows[2][1], rows[2][2],
    )
}

pub fn mat3_to_rows(m: &Mat3) -> [[f64; 3]; 3] {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

fn check_rotation(r: &Mat3) -> Result<(), GeometryError> {
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    if !(err <= UNIT_TOLERANCE) {
        return Err(GeometryError::InvalidCamera(format!("rotation is not orthonormal (max |R^T R - I| = {err:e})")));
    }
    let det = r.determinant();
    if !((det - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(GeometryError::InvalidCamera(format!("rotation determinant is {det}, expected +1")));
    }
    Ok(())
}

impl Camera {
    pub fn perspective(fx: f64, fy: f64, cx: f64, cy: f64, rotation: Mat3, translation: Vec3, width: u32, height: u32) -> Self {
        Camera {
            projection: Projection::Perspective {
                fx,
                fy,
                cx,
                cy,
                rotation: mat3_to_rows(&rotation),
                translation: [translation.x, translation.y, translation.z],
            },
            image_width: width,
            image_height: height,
        }
    }

    pub fn weak_perspective(s: f64, tx: f64, ty: f64, width: u32, height: u32) -> Self {
        Camera { projection: Projection::WeakPerspective { s, tx, ty, rotation: None }, image_width: width, image_height: height }
    }

    pub fn weak_perspective_rotated(s: f64, tx: f64, ty: f64, rotation: Mat3, width: u32, height: u32) -> Self {
        Camera {
            projection: Projection::WeakPerspective { s, tx, ty, rotation: Some(mat3_to_rows(&rotation)) },
            image_width: width,
            image_height: height,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match &self.projection {
            Projection::Perspective { fx, fy, cx, cy, rotation, translation } => {
                if !(*fx > 0.0 && *fy > 0.0) {
                    return Err(GeometryError::InvalidCamera(format!("focal lengths must be positive (fx={fx}, fy={fy})")));
                }
                if !(cx.is_finite() && cy.is_finite() && translation.iter().all(|t| t.is_finite())) {
                    return Err(GeometryError::InvalidCamera("non-finite parameter".into()));
                }
                check_rotation(&mat3_from_rows(rotation))?;
            }
            Projection::WeakPerspective { s, tx, ty, rotation } => {
                if !(*s > 0.0) {
                    return Err(GeometryError::InvalidCamera(format!("scale must be positive (s={s})")));
                }
                if !(tx.is_finite() && ty.is_finite()) {
                    return Err(GeometryError::InvalidCamera("non-finite parameter".into()));
                }
                if let Some(r) = rotation {
                    check_rotation(&mat3_from_rows(r))?;
                }
            }
        }
        Ok(())
    }

    /// World-to-camera rotation (identity for an unrotated weak-perspective camera).
    pub fn rotation(&self) -> Mat3 {
        match &self.projection {
            Projection::Perspective { rotation, .. } => mat3_from_rows(rotation),
            Projection::WeakPerspective { rotation, .. } => rotation.as_ref().map(mat3_from_rows).unwrap_or_else(Mat3::identity),
        }
    }

    pub fn is_perspective(&self) -> bool {
        matches!(self.projection, Projection::Perspective { .. })
    }

    /// Camera centre in world coordinates (perspective cameras only).
    pub fn center(&self) -> Option<Vec3> {
        match &self.projection {
            Projection::Perspective { rotation, translation, .. } => {
                let r = mat3_from_rows(rotation);
                let t = Vec3::from(*translation);
                Some(-(r.transpose() * t))
            }
            Projection::WeakPerspective { .. } => None,
        }
    }

    /// Builds a reusable projector with the matrix conversions done once.
    pub fn projector(&self) -> Projector {
        match &self.projection {
            Projection::Perspective { fx, fy, cx, cy, rotation, translation } => Projector::Perspective {
                fx: *fx,
                fy: *fy,
                cx: *cx,
                cy: *cy,
                rotation: mat3_from_rows(rotation),
                translation: Vec3::from(*translation),
            },
            Projection::WeakPerspective { s, tx, ty, .. } => {
                Projector::Weak { s: *s, tx: *tx, ty: *ty, rotation: self.rotation() }
            }
        }
    }
}

/// Pre-converted projection parameters for hot loops.
#[derive(Debug, Clone, Copy)]
pub enum Projector {
    Perspective { fx: f64, fy: f64, cx: f64, cy: f64, rotation: Mat3, translation: Vec3 },
    Weak { s: f64, tx: f64, ty: f64, rotation: Mat3 },
}

impl Projector {
    #[inline]
    pub fn project(&self, point: &Vec3) -> Result<(Vec2, f64), GeometryError> {
        match self {
            Projector::Perspective { fx, fy, cx, cy, rotation, translation } => {
                let p = rotation * point + translation;
                if p.z <= MIN_DEPTH {
                    return Err(GeometryError::BehindCamera(p.z));
                }
                Ok((Vec2::new(fx * p.x / p.z + cx, fy * p.y / p.z + cy), p.z))
            }
            Projector::Weak { s, tx, ty, rotation } => {
                let p = rotation * point;
                Ok((Vec2::new(s * p.x + tx, s * p.y + ty), p.z))
            }
        }
    }

    /// Unit direction from the camera towards `point`, in world coordinates.
    #[inline]
    pub fn view_vector(&self, point: &Vec3) -> Result<Vec3, GeometryError> {
        match self {
            Projector::Perspective { rotation, translation, .. } => {
                // point - C = R^T (R point + t)
                let d = rotation.transpose() * (rotation * point + translation);
                let len = d.norm();
                if !(len > 0.0) {
                    return Err(GeometryError::ZeroViewVector);
                }
                Ok(d / len)
            }
            Projector::Weak { rotation, .. } => {
                let axis = rotation.transpose() * Vec3::new(0.0, 0.0, 1.0);
                Ok(axis / axis.norm())
            }
        }
    }

    #[inline]
    pub fn is_perspective(&self) -> bool {
        matches!(self, Projector::Perspective { .. })
    }
}

/// Projects a world point to pixel coordinates and camera-space depth.
pub fn project(camera: &Camera, point: &Vec3) -> Result<(Vec2, f64), GeometryError> {
    camera.projector().project(point)
}

/// Unit viewing direction from the camera to `point` (world frame). For a
/// weak-perspective camera this is the constant view axis.
pub fn view_vector(camera: &Camera, point: &Vec3) -> Result<Vec3, GeometryError> {
    camera.projector().view_vector(point)
}

/// Barycentric coordinates of `p` with respect to `tri`.
///
/// `λ0` is computed as `1 - λ1 - λ2`, so the coordinates sum to one up to a
/// single rounding.
#[inline]
pub fn barycentric(tri: &[Vec2; 3], p: &Vec2) -> Result<[f64; 3], GeometryError> {
    let d1 = tri[1] - tri[0];
    let d2 = tri[2] - tri[0];
    let det = d1.x * d2.y - d1.y * d2.x;
    if !(det.abs() * 0.5 > MIN_TRIANGLE_AREA) {
        return Err(GeometryError::DegenerateFace(det * 0.5));
    }
    let dp = p - tri[0];
    let l1 = (dp.x * d2.y - dp.y * d2.x) / det;
    let l2 = (d1.x * dp.y - d1.y * dp.x) / det;
    Ok([1.0 - l1 - l2, l1, l2])
}

/// True when all coordinates lie in `[-BARY_EPS, 1 + BARY_EPS]`.
#[inline]
pub fn bary_inside(l: &[f64; 3]) -> bool {
    l.iter().all(|&x| (-BARY_EPS..=1.0 + BARY_EPS).contains(&x))
}

/// Rotation of `angle` radians about a unit `axis`.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}

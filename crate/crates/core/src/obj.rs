//! Wavefront OBJ ingestion (`v`, `vt`, `vn`, `f` records) and a minimal writer.
//!
//! Faces must carry a UV index on every corner. Quads are fan-triangulated;
//! any other polygon size is rejected.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::geometry::{Face, Mesh, MeshError, Vec2, Vec3};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            MeshError::NotFound { path: path.display().to_string() }
        } else {
            MeshError::Io { path: path.display().to_string(), source: e }
        }
    })?;
    parse_obj(BufReader::new(file))
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { line, message: message.into() }
}

/// Resolves a 1-based (or negative, relative) OBJ index.
fn resolve_index(token: &str, count: usize, line: usize, kind: &str) -> Result<u32, MeshError> {
    let raw: i64 = token.parse().map_err(|_| parse_err(line, format!("invalid {kind} index '{token}'")))?;
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        return Err(parse_err(line, format!("{kind} index 0 is not valid (indices are 1-based)")));
    };
    if idx < 0 || idx as usize >= count {
        return Err(parse_err(line, format!("{kind} index {raw} out of range (have {count})")));
    }
    Ok(idx as u32)
}

fn parse_floats<const N: usize>(parts: &[&str], line: usize, record: &str) -> Result<[f64; N], MeshError> {
    if parts.len() < N {
        return Err(parse_err(line, format!("'{record}' record needs {N} components")));
    }
    let mut out = [0.0f64; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| parse_err(line, format!("invalid number '{p}'")))?;
        if !o.is_finite() {
            return Err(parse_err(line, format!("non-finite number '{p}'")));
        }
    }
    Ok(out)
}

pub fn parse_obj(reader: impl BufRead) -> Result<Mesh, MeshError> {
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut normal_count = 0usize;
    let mut faces = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| MeshError::Io { path: format!("line {lineno}"), source: e })?;
        let line = line.split('#').next().unwrap_or("");
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(&rest, lineno, "v")?;
                positions.push(Vec3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(&rest, lineno, "vt")?;
                if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
                    return Err(parse_err(lineno, format!("uv ({u}, {v}) lies outside [0,1]^2")));
                }
                uvs.push(Vec2::new(u, v));
            }
            "vn" => {
                parse_floats::<3>(&rest, lineno, "vn")?;
                normal_count += 1;
            }
            "f" => {
                let mut corners = Vec::with_capacity(4);
                for corner in &rest {
                    let mut fields = corner.split('/');
                    let p = fields.next().unwrap_or("");
                    let t = fields.next().unwrap_or("");
                    if t.is_empty() {
                        return Err(parse_err(lineno, format!("face corner '{corner}' lacks a uv index")));
                    }
                    if let Some(n) = fields.next() {
                        if !n.is_empty() {
                            resolve_index(n, normal_count, lineno, "normal")?;
                        }
                    }
                    let pi = resolve_index(p, positions.len(), lineno, "position")?;
                    let ti = resolve_index(t, uvs.len(), lineno, "uv")?;
                    corners.push((pi, ti));
                }
                match corners.len() {
                    3 => faces.push(face_of(&corners, [0, 1, 2])),
                    4 => {
                        faces.push(face_of(&corners, [0, 1, 2]));
                        faces.push(face_of(&corners, [0, 2, 3]));
                    }
                    n => return Err(parse_err(lineno, format!("face has {n} corners; only triangles and quads are supported"))),
                }
            }
            // groups, materials, smoothing groups and the like do not affect baking
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(parse_err(0, "no faces"));
    }
    Mesh::new(positions, uvs, faces)
}

fn face_of(corners: &[(u32, u32)], idx: [usize; 3]) -> Face {
    Face { position: idx.map(|k| corners[k].0), uv: idx.map(|k| corners[k].1) }
}

/// Writes `v`, `vt` and `f pos/uv` records with full float precision.
pub fn write_obj(mesh: &Mesh, mut out: impl Write) -> std::io::Result<()> {
    for p in &mesh.positions {
        writeln!(out, "v {:?} {:?} {:?}", p.x, p.y, p.z)?;
    }
    for t in &mesh.uvs {
        writeln!(out, "vt {:?} {:?}", t.x, t.y)?;
    }
    for f in &mesh.faces {
        writeln!(
            out,
            "f {}/{} {}/{} {}/{}",
            f.position[0] + 1,
            f.uv[0] + 1,
            f.position[1] + 1,
            f.uv[1] + 1,
            f.position[2] + 1,
            f.uv[2] + 1
        )?;
    }
    Ok(())
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_obj(mesh, &mut w)?;
    w.flush()
}

//! Independent reference implementations used by the integration tests.
//! They favour directness over speed: every query loops over all faces.

#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvbake::geometry::{Camera, Face, Mesh, Projection, Vec2, Vec3};
use uvbake::imaging::LinearImage;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

fn m3(rows: &[[f64; 3]; 3]) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::from_row_slice(&rows.iter().flatten().copied().collect::<Vec<_>>())
}

/// World-space ray through the centre-relative pixel position `(u, v)`.
/// The ray parameter equals camera-space depth.
pub fn camera_ray(camera: &Camera, u: f64, v: f64) -> (Vec3, Vec3) {
    match &camera.projection {
        Projection::Perspective { fx, fy, cx, cy, rotation, translation } => {
            let r = m3(rotation);
            let t = Vec3::from(*translation);
            let origin = -(r.transpose() * t);
            let dir = r.transpose() * Vec3::new((u - cx) / fx, (v - cy) / fy, 1.0);
            (origin, dir)
        }
        Projection::WeakPerspective { s, tx, ty, rotation } => {
            let r = rotation.as_ref().map(m3).unwrap_or_else(nalgebra::Matrix3::identity);
            let origin = r.transpose() * Vec3::new((u - tx) / s, (v - ty) / s, 0.0);
            (origin, r.transpose() * Vec3::z())
        }
    }
}

/// Möller–Trumbore; returns `(t, b1, b2)` without back-face culling.
pub fn intersect(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let b1 = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let b2 = dir.dot(&q) * inv;
    if b1 < 0.0 || b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    Some((e2.dot(&q) * inv, b1, b2))
}

pub fn positions(mesh: &Mesh, f: usize) -> [Vec3; 3] {
    mesh.faces[f].position.map(|i| mesh.positions[i as usize])
}

pub fn uvs(mesh: &Mesh, f: usize) -> [Vec2; 3] {
    mesh.faces[f].uv.map(|i| mesh.uvs[i as usize])
}

/// Nearest hit `(face, depth, b1, b2)` along the camera ray of pixel centre
/// `(u, v)`. Perspective hits must lie in front of the camera.
pub fn ray_cast(mesh: &Mesh, camera: &Camera, u: f64, v: f64) -> Option<(usize, f64, f64, f64)> {
    let (o, d) = camera_ray(camera, u, v);
    let perspective = matches!(camera.projection, Projection::Perspective { .. });
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for f in 0..mesh.faces.len() {
        if let Some((t, b1, b2)) = intersect(&o, &d, &positions(mesh, f)) {
            if perspective && t <= 1e-9 {
                continue;
            }
            if best.is_none_or(|b| t < b.1) {
                best = Some((f, t, b1, b2));
            }
        }
    }
    best
}

/// Random triangle soup in front of the camera volume, UVs random.
pub fn random_soup(rng: &mut Rng8, faces: usize, lo: Vec3, hi: Vec3) -> Mesh {
    let mut pos = Vec::new();
    let mut uv = Vec::new();
    let mut fs = Vec::new();
    for f in 0..faces {
        for _ in 0..3 {
            pos.push(Vec3::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y), rng.gen_range(lo.z..hi.z)));
            uv.push(Vec2::new(rng.gen(), rng.gen()));
        }
        let b = 3 * f as u32;
        fs.push(Face { position: [b, b + 1, b + 2], uv: [b, b + 1, b + 2] });
    }
    Mesh::new(pos, uv, fs).unwrap()
}

/// Height-field grid mesh whose UV layout gives every face its own region.
/// `n × n` cells, two faces each, spanning `[-1, 1]²` in x/y.
pub fn grid_surface(rng: &mut Rng8, n: usize, depth: f64, bumpiness: f64) -> Mesh {
    let mut pos = Vec::new();
    let mut uv = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let (x, y) = (-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64);
            pos.push(Vec3::new(x, y, depth + rng.gen_range(-bumpiness..=bumpiness)));
            uv.push(Vec2::new(0.05 + 0.9 * i as f64 / n as f64, 0.05 + 0.9 * j as f64 / n as f64));
        }
    }
    let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut faces = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            // wound so normals face -z, towards a camera looking along +z
            faces.push(Face { position: [a, c, b], uv: [a, c, b] });
            faces.push(Face { position: [a, d, c], uv: [a, d, c] });
        }
    }
    Mesh::new(pos, uv, faces).unwrap()
}

/// Reference texel bake: brute-force UV lookup, ray-cast visibility, own
/// projection and bilinear sampling.
pub struct OracleTexel {
    pub valid: bool,
    pub rgb: [f64; 3],
}

fn bary2(t: &[Vec2; 3], p: &Vec2) -> Option<[f64; 3]> {
    let den = (t[1].y - t[2].y) * (t[0].x - t[2].x) + (t[2].x - t[1].x) * (t[0].y - t[2].y);
    if den.abs() < 1e-14 {
        return None;
    }
    let a = ((t[1].y - t[2].y) * (p.x - t[2].x) + (t[2].x - t[1].x) * (p.y - t[2].y)) / den;
    let b = ((t[2].y - t[0].y) * (p.x - t[2].x) + (t[0].x - t[2].x) * (p.y - t[2].y)) / den;
    Some([a, b, 1.0 - a - b])
}

fn vertex_normals(mesh: &Mesh) -> Vec<Vec3> {
    let mut n = vec![Vec3::zeros(); mesh.positions.len()];
    for f in 0..mesh.faces.len() {
        let p = positions(mesh, f);
        let g = (p[1] - p[0]).cross(&(p[2] - p[0]));
        for &i in &mesh.faces[f].position {
            n[i as usize] += g;
        }
    }
    n.into_iter().map(|v| if v.norm() > 0.0 { v.normalize() } else { Vec3::z() }).collect()
}

fn project(camera: &Camera, x: &Vec3) -> Option<(f64, f64, f64)> {
    match &camera.projection {
        Projection::Perspective { fx, fy, cx, cy, rotation, translation } => {
            let c = m3(rotation) * x + Vec3::from(*translation);
            (c.z > 1e-9).then(|| (fx * c.x / c.z + cx, fy * c.y / c.z + cy, c.z))
        }
        Projection::WeakPerspective { s, tx, ty, rotation } => {
            let c = rotation.as_ref().map(m3).unwrap_or_else(nalgebra::Matrix3::identity) * x;
            Some((s * c.x + tx, s * c.y + ty, c.z))
        }
    }
}

fn bilinear(img: &LinearImage, u: f64, v: f64) -> [f64; 3] {
    let x = (u - 0.5).clamp(0.0, (img.width - 1) as f64);
    let y = (v - 0.5).clamp(0.0, (img.height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let g = |xx: usize, yy: usize| img.pixels[yy * img.width + xx];
    std::array::from_fn(|c| {
        (1.0 - fy) * ((1.0 - fx) * g(x0, y0)[c] + fx * g(x1, y0)[c]) + fy * ((1.0 - fx) * g(x0, y1)[c] + fx * g(x1, y1)[c])
    })
}

pub fn oracle_bake(mesh: &Mesh, camera: &Camera, image: &LinearImage, res: usize, tau: f64, depth_eps: f64) -> Vec<OracleTexel> {
    let normals = vertex_normals(mesh);
    (0..res * res)
        .map(|i| {
            let p = Vec2::new((i % res) as f64 + 0.5, (i / res) as f64 + 0.5) / res as f64;
            let invalid = OracleTexel { valid: false, rgb: [0.0; 3] };
            let hit = (0..mesh.faces.len()).find_map(|f| {
                let l = bary2(&uvs(mesh, f), &p)?;
                (l.iter().all(|&x| x >= -1e-9)).then_some((f, l))
            });
            let Some((f, l)) = hit else { return invalid };
            let pos = positions(mesh, f);
            let x = pos[0] * l[0] + pos[1] * l[1] + pos[2] * l[2];
            let ni = mesh.faces[f].position.map(|k| normals[k as usize]);
            let n = (ni[0] * l[0] + ni[1] * l[1] + ni[2] * l[2]).normalize();
            let Some((u, v, z)) = project(camera, &x) else { return invalid };
            if u < 0.0 || v < 0.0 || u >= camera.image_width as f64 || v >= camera.image_height as f64 {
                return invalid;
            }
            let (cu, cv) = (u.floor() + 0.5, v.floor() + 0.5);
            // a pixel centre that misses every face has infinite depth
            let front_depth = ray_cast(mesh, camera, cu, cv).map_or(f64::INFINITY, |h| h.1);
            if z > front_depth + depth_eps {
                return invalid;
            }
            let view = match &camera.projection {
                Projection::Perspective { rotation, translation, .. } => {
                    let r = m3(rotation);
                    (x + r.transpose() * Vec3::from(*translation)).normalize()
                }
                Projection::WeakPerspective { rotation, .. } => {
                    rotation.as_ref().map(m3).unwrap_or_else(nalgebra::Matrix3::identity).transpose() * Vec3::z()
                }
            };
            if n.dot(&-view) < tau {
                return invalid;
            }
            OracleTexel { valid: true, rgb: bilinear(image, u, v) }
        })
        .collect()
}

/// Renders `texture(uv)` as seen by `camera`, point-sampled at pixel
/// centres; `background` where no surface is hit.
pub fn render(mesh: &Mesh, camera: &Camera, texture: impl Fn(Vec2) -> [f64; 3], background: [f64; 3]) -> LinearImage {
    let (w, h) = (camera.image_width as usize, camera.image_height as usize);
    LinearImage::from_fn(w, h, |x, y| match ray_cast(mesh, camera, x as f64 + 0.5, y as f64 + 0.5) {
        Some((f, _, b1, b2)) => {
            let t = uvs(mesh, f);
            texture(t[0] * (1.0 - b1 - b2) + t[1] * b1 + t[2] * b2)
        }
        None => background,
    })
}

/// Faster renderer for closed convex-ish meshes: only faces whose screen
/// bounding box contains the pixel are tested.
pub fn render_binned(mesh: &Mesh, camera: &Camera, texture: impl Fn(Vec2) -> [f64; 3] + Sync, background: [f64; 3]) -> LinearImage {
    use rayon::prelude::*;
    let (w, h) = (camera.image_width as usize, camera.image_height as usize);
    let boxes: Vec<Option<[f64; 4]>> = (0..mesh.faces.len())
        .map(|f| {
            let p: Vec<_> = positions(mesh, f).iter().map(|x| project(camera, x)).collect::<Option<Vec<_>>>()?;
            let xs = p.iter().map(|q| q.0);
            let ys = p.iter().map(|q| q.1);
            Some([
                xs.clone().fold(f64::INFINITY, f64::min),
                xs.fold(f64::NEG_INFINITY, f64::max),
                ys.clone().fold(f64::INFINITY, f64::min),
                ys.fold(f64::NEG_INFINITY, f64::max),
            ])
        })
        .collect();
    let rows: Vec<Vec<[f64; 3]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let cy = y as f64 + 0.5;
            let cand: Vec<usize> = (0..mesh.faces.len()).filter(|&f| boxes[f].is_some_and(|b| b[2] <= cy && cy <= b[3])).collect();
            (0..w)
                .map(|x| {
                    let cx = x as f64 + 0.5;
                    let (o, d) = camera_ray(camera, cx, cy);
                    let mut best: Option<(f64, usize, f64, f64)> = None;
                    for &f in &cand {
                        let b = boxes[f].unwrap();
                        if cx < b[0] || cx > b[1] {
                            continue;
                        }
                        if let Some((t, b1, b2)) = intersect(&o, &d, &positions(mesh, f)) {
                            if best.is_none_or(|q| t < q.0) {
                                best = Some((t, f, b1, b2));
                            }
                        }
                    }
                    match best {
                        Some((_, f, b1, b2)) => {
                            let t = uvs(mesh, f);
                            texture(t[0] * (1.0 - b1 - b2) + t[1] * b1 + t[2] * b2)
                        }
                        None => background,
                    }
                })
                .collect()
        })
        .collect();
    LinearImage { width: w, height: h, pixels: rows.into_iter().flatten().collect() }
}

/// Checkerboard of `nu × nv` cells over the unit UV square.
pub fn checker(nu: usize, nv: usize, a: [f64; 3], b: [f64; 3]) -> impl Fn(Vec2) -> [f64; 3] + Sync + Copy {
    move |uv: Vec2| {
        let i = ((uv.x * nu as f64).floor() as i64).clamp(0, nu as i64 - 1);
        let j = ((uv.y * nv as f64).floor() as i64).clamp(0, nv as i64 - 1);
        if (i + j) % 2 == 0 {
            a
        } else {
            b
        }
    }
}

/// RMS residual of the best similarity alignment found by a coarse Euler
/// angle grid refined with coordinate descent. Scale is solved in closed
/// form for each rotation.
pub fn grid_search_rms(pred: &[Vec3], gt: &[Vec3]) -> f64 {
    let centre = |p: &[Vec3]| p.iter().fold(Vec3::zeros(), |a, x| a + x) / p.len() as f64;
    let (mp, mg) = (centre(pred), centre(gt));
    let xp: Vec<Vec3> = pred.iter().map(|p| p - mp).collect();
    let xg: Vec<Vec3> = gt.iter().map(|g| g - mg).collect();
    let cost = |r: &nalgebra::Matrix3<f64>| {
        let rp: Vec<Vec3> = xp.iter().map(|p| r * p).collect();
        let num: f64 = rp.iter().zip(&xg).map(|(a, b)| a.dot(b)).sum();
        let den: f64 = rp.iter().map(|a| a.norm_squared()).sum();
        let s = (num / den).max(0.0);
        (rp.iter().zip(&xg).map(|(a, b)| (a * s - b).norm_squared()).sum::<f64>() / pred.len() as f64).sqrt()
    };
    let rot = |a: f64, b: f64, c: f64| {
        nalgebra::Rotation3::from_euler_angles(a, b, c).into_inner()
    };
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    let steps = 24;
    let pi = std::f64::consts::PI;
    for i in 0..steps {
        for j in 0..=steps / 2 {
            for k in 0..steps {
                let (a, b, c) = (-pi + 2.0 * pi * i as f64 / steps as f64, -pi / 2.0 + pi * j as f64 / (steps / 2) as f64, -pi + 2.0 * pi * k as f64 / steps as f64);
                let v = cost(&rot(a, b, c));
                if v < best.0 {
                    best = (v, a, b, c);
                }
            }
        }
    }
    let mut step = 2.0 * pi / steps as f64;
    for _ in 0..40 {
        let mut improved = false;
        for (da, db, dc) in [(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, -1.0)] {
            let (a, b, c) = (best.1 + da * step, best.2 + db * step, best.3 + dc * step);
            let v = cost(&rot(a, b, c));
            if v < best.0 {
                best = (v, a, b, c);
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best.0
}

pub fn files_equal(a: &Path, b: &Path) -> bool {
    std::fs::read(a).ok() == std::fs::read(b).ok()
}

/// Camera looking along world -z (sees the +z side), image y pointing down.
pub fn front_camera(s: f64, size: u32) -> Camera {
    let r = nalgebra::Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
    Camera::weak_perspective_rotated(s, size as f64 / 2.0, size as f64 / 2.0, r, size, size)
}

/// Camera looking along world +z (sees the -z side).
pub fn back_camera(s: f64, size: u32) -> Camera {
    let r = nalgebra::Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0));
    Camera::weak_perspective_rotated(s, size as f64 / 2.0, size as f64 / 2.0, r, size, size)
}

/// Camera looking along world -x (sees the +x side).
pub fn side_camera(s: f64, size: u32) -> Camera {
    let r = nalgebra::Matrix3::new(0.0, 0.0, -1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 0.0);
    Camera::weak_perspective_rotated(s, size as f64 / 2.0, size as f64 / 2.0, r, size, size)
}

pub struct Fixture {
    pub dir: std::path::PathBuf,
    pub config: std::path::PathBuf,
}

/// Writes mesh, fit files, images and a config (relative paths) into `dir`.
pub fn write_fixture(
    dir: &Path,
    mesh: &Mesh,
    cams: [&Camera; 2],
    images: [&LinearImage; 2],
    resolution: usize,
    extra: serde_json::Value,
) -> Fixture {
    std::fs::create_dir_all(dir).unwrap();
    uvbake::obj::save_mesh(mesh, dir.join("mesh.obj")).unwrap();
    for (name, cam, img) in [("front", cams[0], images[0]), ("back", cams[1], images[1])] {
        let fit = uvbake::pipeline::FitFile { view: Some(name.into()), camera: cam.clone(), image: Some(format!("{name}.png").into()) };
        uvbake::formats::write_json(dir.join(format!("{name}_fit.json")), &fit).unwrap();
        img.save_png(dir.join(format!("{name}.png"))).unwrap();
    }
    let mut cfg = serde_json::json!({
        "mesh": "mesh.obj",
        "front": {"fit": "front_fit.json", "image": "front.png"},
        "back": {"fit": "back_fit.json", "image": "back.png"},
        "resolution": resolution,
        "output_dir": "out",
        "label": "fixture",
    });
    if let serde_json::Value::Object(m) = extra {
        for (k, v) in m {
            cfg[k] = v;
        }
    }
    let config = dir.join("config.json");
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    Fixture { dir: dir.to_path_buf(), config }
}

pub const CHECKER_A: [f64; 3] = [0.8, 0.25, 0.1];
pub const CHECKER_B: [f64; 3] = [0.1, 0.45, 0.8];
pub const SPHERE_IMAGE: u32 = 1024;

/// Unit sphere with its poles on the z axis, so both opposing cameras look
/// straight at a pole.
pub fn pole_sphere() -> Mesh {
    let m = uvbake::synth::uv_sphere(64, 96, 1.0);
    let r = uvbake::geometry::axis_angle(&Vec3::x(), -std::f64::consts::FRAC_PI_2);
    m.transformed(&r, &Vec3::zeros())
}

pub fn sphere_texture() -> impl Fn(Vec2) -> [f64; 3] + Sync + Copy {
    checker(8, 7, CHECKER_A, CHECKER_B)
}

/// Sphere round-trip fixture: checkerboard-textured sphere rendered from
/// two opposing orthographic cameras.
pub fn sphere_fixture(dir: &Path, resolution: usize) -> Fixture {
    let mesh = pole_sphere();
    let scale = 0.45 * SPHERE_IMAGE as f64;
    let (f, b) = (front_camera(scale, SPHERE_IMAGE), back_camera(scale, SPHERE_IMAGE));
    let fi = render_binned(&mesh, &f, sphere_texture(), [0.0; 3]);
    let bi = render_binned(&mesh, &b, sphere_texture(), [0.0; 3]);
    write_fixture(dir, &mesh, [&f, &b], [&fi, &bi], resolution, serde_json::json!({}))
}

/// Two parallel squares facing away from each other, each seen head-on by
/// exactly one camera; solid red in front, solid blue behind.
pub fn two_plane_fixture(dir: &Path, resolution: usize) -> Fixture {
    // plane() faces -z; a half turn about y gives the +z-facing square
    let r = uvbake::geometry::axis_angle(&Vec3::y(), std::f64::consts::PI);
    let front_plane = uvbake::synth::plane(1.0, -0.5).transformed(&r, &Vec3::zeros());
    let back_plane = uvbake::synth::plane(1.0, -0.5);
    // front square takes the left half of the atlas, back square the right
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    for (k, m) in [&front_plane, &back_plane].iter().enumerate() {
        let base = positions.len() as u32;
        positions.extend(m.positions.iter().copied());
        uvs.extend(m.uvs.iter().map(|uv| Vec2::new(0.5 * k as f64 + 0.05 + 0.4 * uv.x, 0.05 + 0.9 * uv.y)));
        faces.extend(m.faces.iter().map(|f| Face { position: f.position.map(|i| i + base), uv: f.uv.map(|i| i + base) }));
    }
    let mesh = Mesh::new(positions, uvs, faces).unwrap();
    let size = 128;
    let (f, b) = (front_camera(40.0, size), back_camera(40.0, size));
    let fi = LinearImage::new(size as usize, size as usize, [1.0, 0.0, 0.0]);
    let bi = LinearImage::new(size as usize, size as usize, [0.0, 0.0, 1.0]);
    write_fixture(dir, &mesh, [&f, &b], [&fi, &bi], resolution, serde_json::json!({}))
}

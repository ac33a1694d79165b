//! Procedural meshes with valid UV atlases, used for fixtures and demos.

use std::f64::consts::PI;

use crate::geometry::{Face, Mesh, Vec2, Vec3};

/// Closed surface of revolution about the y axis.
///
/// `profile(t)` gives `(radius, height)` for `t` in `(0, 1)` from the top
/// pole to the bottom pole. The result has `rings * segments + 2` vertices
/// and `2 * rings * segments` faces. UVs are equirectangular with a seam
/// column at `u = 0 / 1`; `v` runs from 1 at the top pole to 0 at the bottom.
/// `x_scale` stretches the cross sections along x.
pub fn lathe(rings: usize, segments: usize, x_scale: f64, profile: impl Fn(f64) -> (f64, f64)) -> Mesh {
    assert!(rings >= 1 && segments >= 3);
    let mut positions = Vec::with_capacity(rings * segments + 2);
    let mut uvs = Vec::with_capacity(rings * (segments + 1) + 2 * segments);
    let t_of = |k: usize| (k + 1) as f64 / (rings + 1) as f64;
    for k in 0..rings {
        let (r, y) = profile(t_of(k));
        for j in 0..segments {
            let th = 2.0 * PI * j as f64 / segments as f64;
            positions.push(Vec3::new(x_scale * r * th.sin(), y, r * th.cos()));
        }
        for j in 0..=segments {
            uvs.push(Vec2::new(j as f64 / segments as f64, 1.0 - t_of(k)));
        }
    }
    let top = positions.len() as u32;
    positions.push(Vec3::new(0.0, profile(0.0).1, 0.0));
    let bottom = positions.len() as u32;
    positions.push(Vec3::new(0.0, profile(1.0).1, 0.0));
    let top_uv = uvs.len() as u32;
    for j in 0..segments {
        uvs.push(Vec2::new((j as f64 + 0.5) / segments as f64, 1.0));
    }
    let bottom_uv = uvs.len() as u32;
    for j in 0..segments {
        uvs.push(Vec2::new((j as f64 + 0.5) / segments as f64, 0.0));
    }

    let p = |k: usize, j: usize| (k * segments + j % segments) as u32;
    let t = |k: usize, j: usize| (k * (segments + 1) + j) as u32;
    let mut faces = Vec::with_capacity(2 * rings * segments);
    for j in 0..segments {
        faces.push(Face { position: [top, p(0, j), p(0, j + 1)], uv: [top_uv + j as u32, t(0, j), t(0, j + 1)] });
    }
    for k in 0..rings - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (p(k, j), p(k, j + 1), p(k + 1, j + 1), p(k + 1, j));
            let (ta, tb, tc, td) = (t(k, j), t(k, j + 1), t(k + 1, j + 1), t(k + 1, j));
            faces.push(Face { position: [a, d, c], uv: [ta, td, tc] });
            faces.push(Face { position: [a, c, b], uv: [ta, tc, tb] });
        }
    }
    let k = rings - 1;
    for j in 0..segments {
        faces.push(Face { position: [p(k, j), bottom, p(k, j + 1)], uv: [t(k, j), bottom_uv + j as u32, t(k, j + 1)] });
    }
    Mesh::new(positions, uvs, faces).expect("lathe produces a valid mesh")
}

/// Sphere centred at the origin with its poles on the y axis.
pub fn uv_sphere(rings: usize, segments: usize, radius: f64) -> Mesh {
    lathe(rings, segments, 1.0, |t| ((PI * t).sin() * radius, (PI * t).cos() * radius))
}

fn bump(t: f64, centre: f64, width: f64) -> f64 {
    let x = (t - centre) / width;
    (-x * x).exp()
}

/// Standing body stand-in, 1.8 units tall with feet at y = 0 and the front
/// facing +z. Same vertex and face count as the common parametric body
/// template (6890 / 13776).
pub fn body_proxy() -> Mesh {
    lathe(82, 84, 1.4, |t| {
        let r = if t < 0.14 {
            0.09 * (PI * t / 0.14).sin().sqrt()
        } else {
            0.05 + 0.1 * bump(t, 0.36, 0.14) + 0.06 * bump(t, 0.52, 0.08) + 0.05 * bump(t, 0.72, 0.16)
        };
        (r.max(0.01), 1.8 * (1.0 - t))
    })
}

/// Axis-aligned square in the plane `z = depth`, spanning `[-half, half]²`,
/// with the full unit UV square and its normal facing `-z`.
pub fn plane(half: f64, depth: f64) -> Mesh {
    let positions = vec![
        Vec3::new(-half, -half, depth),
        Vec3::new(half, -half, depth),
        Vec3::new(half, half, depth),
        Vec3::new(-half, half, depth),
    ];
    let uvs = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];
    let faces = vec![Face { position: [0, 2, 1], uv: [0, 2, 1] }, Face { position: [0, 3, 2], uv: [0, 3, 2] }];
    Mesh::new(positions, uvs, faces).expect("plane is valid")
}

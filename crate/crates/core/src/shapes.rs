//! Closed, outward-oriented reference surfaces: spheres, a torus, boxes and a
//! box-assembled chair. Used as voxelization inputs and closest-point targets.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::geom::Vec3;
use crate::trimesh::TriMesh;

/// Unit icosphere centered at the origin; `20 * 4^subdivisions` triangles.
pub fn icosphere(subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriMesh::new(vertices, faces)
}

/// Unit latitude/longitude sphere with `2 * n_lon * (n_lat - 1)` triangles.
pub fn uv_sphere(n_lon: usize, n_lat: usize) -> TriMesh {
    assert!(n_lon >= 3 && n_lat >= 2);
    let mut vertices = vec![Vec3::new(0.0, 0.0, 1.0)];
    for i in 1..n_lat {
        let theta = PI * i as f64 / n_lat as f64;
        for j in 0..n_lon {
            let phi = 2.0 * PI * j as f64 / n_lon as f64;
            vertices.push(Vec3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -1.0));
    let south = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * n_lon + (j % n_lon);
    let mut faces = Vec::new();
    for j in 0..n_lon {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..n_lat - 1 {
        for j in 0..n_lon {
            let (a, b) = (ring(i, j), ring(i, j + 1));
            let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for j in 0..n_lon {
        faces.push([south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)]);
    }
    TriMesh::new(vertices, faces)
}

/// Torus around the z axis centered at the origin.
pub fn torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = 2.0 * PI * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let v = 2.0 * PI * j as f64 / n_minor as f64;
            let rho = major + minor * v.cos();
            vertices.push(Vec3::new(rho * u.cos(), rho * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut faces = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            let (a, b) = (idx(i, j), idx(i + 1, j));
            let (c, d) = (idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, faces)
}

/// Closed box surface, 12 triangles.
pub fn axis_box(min: Vec3, max: Vec3) -> TriMesh {
    let corner = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    let vertices = (0..8).map(corner).collect();
    let quads = [
        [0, 2, 3, 1], // z = min
        [4, 5, 7, 6], // z = max
        [0, 1, 5, 4], // y = min
        [2, 6, 7, 3], // y = max
        [0, 4, 6, 2], // x = min
        [1, 3, 7, 5], // x = max
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh::new(vertices, faces)
}

/// Seat, back and four legs as one soup of overlapping closed boxes.
pub fn chair() -> TriMesh {
    let b = |x0, y0, z0, x1, y1, z1| axis_box(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1));
    TriMesh::merged(&[
        b(0.0, 0.0, 0.45, 0.8, 0.8, 0.57),
        b(0.0, 0.66, 0.57, 0.8, 0.8, 1.5),
        b(0.03, 0.03, 0.0, 0.15, 0.15, 0.45),
        b(0.65, 0.03, 0.0, 0.77, 0.15, 0.45),
        b(0.03, 0.65, 0.0, 0.15, 0.77, 0.45),
        b(0.65, 0.65, 0.0, 0.77, 0.77, 0.45),
    ])
}

#![allow(dead_code)]

use rand::Rng;
use tetvox::deform::{self, terms, DeformConfig, Topology};
use tetvox::tet::TetMesh;
use tetvox::voxel::{Frame, VoxelGrid};
use tetvox::Vec3;

/// 1 to 3 voxels of a 2³ grid with every vertex jittered by up to `jitter`,
/// redrawn until all tets keep positive det.
pub fn random_small_mesh(rng: &mut impl Rng, jitter: f64) -> TetMesh {
    let count = rng.random_range(1..=3);
    let mut picked = [false; 8];
    while picked.iter().filter(|&&p| p).count() < count {
        picked[rng.random_range(0..8)] = true;
    }
    let grid = VoxelGrid::from_occupancy(2, picked.to_vec(), Frame::unit(2)).unwrap();
    let fresh = TetMesh::from_grid(&grid).unwrap();
    loop {
        let mut m = fresh.clone();
        for v in m.vertices_mut() {
            *v += Vec3::new(
                rng.random_range(-jitter..jitter),
                rng.random_range(-jitter..jitter),
                rng.random_range(-jitter..jitter),
            );
        }
        if m.min_det() > 0.05 {
            return m;
        }
    }
}

/// Relative L2 error between an analytic gradient and central differences.
pub fn fd_relative_error(
    pos: &[Vec3],
    h: f64,
    mut f: impl FnMut(&[Vec3], &mut [Vec3]) -> f64,
) -> f64 {
    let mut analytic = vec![Vec3::zeros(); pos.len()];
    f(pos, &mut analytic);
    let mut scratch = vec![Vec3::zeros(); pos.len()];
    let mut p = pos.to_vec();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..pos.len() {
        for c in 0..3 {
            let orig = p[i][c];
            p[i][c] = orig + h;
            let fp = f(&p, &mut scratch);
            p[i][c] = orig - h;
            let fm = f(&p, &mut scratch);
            p[i][c] = orig;
            let fd = (fp - fm) / (2.0 * h);
            num += (analytic[i][c] - fd).powi(2);
            den += fd * fd;
        }
    }
    num.sqrt() / den.sqrt().max(1e-12)
}

pub enum Term {
    Edge,
    Laplacian,
    Normal,
    Orientation,
    Projection,
    Total,
}

/// Largest FD relative error of `term` over `trials` random small meshes.
pub fn worst_gradient_error(term: &Term, trials: usize, rng: &mut impl Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mesh = random_small_mesh(rng, 0.2);
        let topo = Topology::new(&mesh);
        let ns = topo.surface_vertices.len();
        let targets: Vec<Vec3> = (0..ns)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 4.0 - Vec3::repeat(1.0))
            .collect();
        let noise = deform::draw_noise(ns, rng);
        let config = DeformConfig {
            lambda_a: 0.3,
            lambda_b: 0.7,
            lambda_c: 1.3,
            v0: 2.0,
            ..DeformConfig::default()
        };
        let err = fd_relative_error(mesh.vertices(), 1e-5, |p, g| {
            g.iter_mut().for_each(|x| *x = Vec3::zeros());
            match term {
                Term::Edge => terms::edge_term(p, &topo, 1.0, g),
                Term::Laplacian => terms::laplacian_term(p, &topo, 1.0, 0.5, 1.0, g),
                Term::Normal => terms::normal_term(p, &topo, 1.0, g).0,
                Term::Orientation => terms::orientation_term(p, &topo, 2.0, 1.0, g),
                Term::Projection => terms::projection_term(p, &topo, &targets, &noise, 0.0, 1.0, g),
                Term::Total => deform::evaluate(p, &topo, &config, &targets, &noise, 0.1, g).0.total,
            }
        });
        worst = worst.max(err);
    }
    worst
}

mod common;

use common::{worst_gradient_error, Term};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tetvox::deform::{self, terms, Topology};
use tetvox::voxel::{Frame, VoxelGrid};
use tetvox::tet::TetMesh;
use tetvox::Vec3;

fn check(term: Term, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let err = worst_gradient_error(&term, 25, &mut rng);
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn edge_gradient() {
    check(Term::Edge, 1);
}

#[test]
fn laplacian_gradient() {
    check(Term::Laplacian, 2);
}

#[test]
fn normal_gradient() {
    check(Term::Normal, 3);
}

#[test]
fn orientation_gradient_with_active_barrier() {
    check(Term::Orientation, 4);
}

#[test]
fn projection_gradient() {
    check(Term::Projection, 5);
}

#[test]
fn total_gradient() {
    check(Term::Total, 6);
}

#[test]
fn regularizers_are_translation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mesh = common::random_small_mesh(&mut rng, 0.2);
    let topo = Topology::new(&mesh);
    let shift = Vec3::new(3.0, -2.0, 0.5);
    let moved: Vec<Vec3> = mesh.vertices().iter().map(|v| v + shift).collect();
    let mut g = vec![Vec3::zeros(); moved.len()];
    let eval = |p: &[Vec3], g: &mut [Vec3]| {
        [
            terms::edge_term(p, &topo, 1.0, g),
            terms::laplacian_term(p, &topo, 1.0, 0.5, 1.0, g),
            terms::normal_term(p, &topo, 1.0, g).0,
            terms::orientation_term(p, &topo, 2.0, 1.0, g),
        ]
    };
    let a = eval(mesh.vertices(), &mut g);
    let b = eval(&moved, &mut g);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn mesh_level_wrappers_agree_with_terms() {
    let g = VoxelGrid::from_fn(3, Frame::unit(3), |x, y, z| x + y + z < 4).unwrap();
    let m = TetMesh::from_grid(&g).unwrap();
    assert_eq!(deform::r_orientation(&m, 0.01).0, 0.0);
    let (e, ge) = deform::r_edge(&m);
    assert!(e > 0.0 && ge.len() == m.vertices().len());
    let shifted = {
        let mut s = m.clone();
        s.vertices_mut().iter_mut().for_each(|v| *v += Vec3::repeat(10.0));
        s
    };
    let (la, lb) = (deform::r_laplacian(&m, 1.0, 0.5).0, deform::r_laplacian(&shifted, 1.0, 0.5).0);
    assert!((la - lb).abs() < 1e-12 * la);
    assert!((deform::r_normal(&m).0 - deform::r_normal(&shifted).0).abs() < 1e-12);
}

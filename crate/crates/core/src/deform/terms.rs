//! Objective terms with analytic gradients. Every function adds its gradient,
//! scaled by `weight`, into `grad` and returns the unweighted value.

use crate::geom::{homogeneous_det, homogeneous_det_grad, triangle_normal, Vec3};
use crate::tet::{surface_edge_valence, TetMesh};

/// Compressed adjacency lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Adjacency {
    fn from_edges(n: usize, edges: impl Iterator<Item = [usize; 2]> + Clone) -> Self {
        let mut degree = vec![0usize; n];
        for [a, b] in edges.clone() {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0; offsets[n]];
        for [a, b] in edges {
            neighbors[fill[a]] = b;
            fill[a] += 1;
            neighbors[fill[b]] = a;
            fill[b] += 1;
        }
        Adjacency { offsets, neighbors }
    }

    pub fn of(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Connectivity derived once from a [`TetMesh`]; positions live elsewhere.
#[derive(Debug, Clone)]
pub struct Topology {
    pub edges: Vec<[usize; 2]>,
    pub tets: Vec<[usize; 4]>,
    pub surface_tris: Vec<[usize; 3]>,
    /// Surface vertex ids, ascending.
    pub surface_vertices: Vec<usize>,
    pub volume_adjacency: Adjacency,
    pub surface_adjacency: Adjacency,
    /// Surface triangles sharing a manifold edge.
    pub face_pairs: Vec<[usize; 2]>,
    /// Surface edges bordered by more than two triangles; left out of the
    /// normal term.
    pub nonmanifold_edges: usize,
}

impl Topology {
    pub fn new(mesh: &TetMesh) -> Topology {
        let n = mesh.vertices().len();
        let edges = mesh.edges().to_vec();
        let volume_adjacency = Adjacency::from_edges(n, edges.iter().copied());

        let surface_tris = mesh.surface_tris().to_vec();
        let valence = surface_edge_valence(&surface_tris);
        let mut surface_edges: Vec<[usize; 2]> = valence.keys().copied().collect();
        surface_edges.sort_unstable();
        let surface_adjacency = Adjacency::from_edges(n, surface_edges.iter().copied());

        let mut by_edge: std::collections::HashMap<[usize; 2], Vec<usize>> =
            std::collections::HashMap::new();
        for (f, t) in surface_tris.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                by_edge.entry([a.min(b), a.max(b)]).or_default().push(f);
            }
        }
        let mut face_pairs = Vec::new();
        let mut nonmanifold_edges = 0;
        for e in &surface_edges {
            match by_edge[e].as_slice() {
                [f, g] => face_pairs.push([*f, *g]),
                _ => nonmanifold_edges += 1,
            }
        }

        let surface_vertices = mesh
            .surface_vertex_flags()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| i)
            .collect();

        Topology {
            edges,
            tets: mesh.tets().to_vec(),
            surface_tris,
            surface_vertices,
            volume_adjacency,
            surface_adjacency,
            face_pairs,
            nonmanifold_edges,
        }
    }
}

/// `Σ_(i,j) ‖v_i − v_j‖²` over the volumetric edge set.
pub fn edge_term(pos: &[Vec3], topo: &Topology, weight: f64, grad: &mut [Vec3]) -> f64 {
    let mut value = 0.0;
    for &[a, b] in &topo.edges {
        let d = pos[a] - pos[b];
        value += d.norm_squared();
        let g = d * (2.0 * weight);
        grad[a] += g;
        grad[b] -= g;
    }
    value
}

fn umbrella(
    pos: &[Vec3],
    adjacency: &Adjacency,
    vertices: impl Iterator<Item = usize>,
    coef: f64,
    grad: &mut [Vec3],
) -> f64 {
    let mut value = 0.0;
    for i in vertices {
        let nbrs = adjacency.of(i);
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let mean = nbrs.iter().fold(Vec3::zeros(), |acc, &j| acc + pos[j]) * inv;
        let r = mean - pos[i];
        value += r.norm_squared();
        let g = r * (2.0 * coef);
        grad[i] -= g;
        let gj = g * inv;
        for &j in nbrs {
            grad[j] += gj;
        }
    }
    value
}

/// `α Σ ‖δ_i − v_i‖² + β Σ_surface ‖δ^s_i − v_i‖²` with uniform neighbor
/// averages from the volume graph and the surface graph respectively.
pub fn laplacian_term(
    pos: &[Vec3],
    topo: &Topology,
    alpha: f64,
    beta: f64,
    weight: f64,
    grad: &mut [Vec3],
) -> f64 {
    let volume = umbrella(pos, &topo.volume_adjacency, 0..pos.len(), weight * alpha, grad);
    let surface = umbrella(
        pos,
        &topo.surface_adjacency,
        topo.surface_vertices.iter().copied(),
        weight * beta,
        grad,
    );
    alpha * volume + beta * surface
}

/// `Σ 1 − cos(n_f, n_g)` over surface faces sharing an edge. Pairs touching a
/// zero-area face contribute nothing; their number is returned alongside.
pub fn normal_term(pos: &[Vec3], topo: &Topology, weight: f64, grad: &mut [Vec3]) -> (f64, usize) {
    let raw: Vec<(Vec3, f64)> = topo
        .surface_tris
        .iter()
        .map(|&[a, b, c]| {
            let n = triangle_normal(&pos[a], &pos[b], &pos[c]);
            (n, n.norm())
        })
        .collect();
    let mut value = 0.0;
    let mut degenerate = 0;
    for &[f, g] in &topo.face_pairs {
        let (cf, lf) = raw[f];
        let (cg, lg) = raw[g];
        if !(lf > 0.0 && lg > 0.0) {
            degenerate += 1;
            continue;
        }
        let nf = cf / lf;
        let ng = cg / lg;
        let cos = nf.dot(&ng);
        value += 1.0 - cos;
        // d(−cos)/d(c_f) = −(I − n_f n_fᵀ) n_g / |c_f|
        let gf = -(ng - nf * cos) / lf * weight;
        let gg = -(nf - ng * cos) / lg * weight;
        scatter_normal_grad(pos, topo.surface_tris[f], &gf, grad);
        scatter_normal_grad(pos, topo.surface_tris[g], &gg, grad);
    }
    (value, degenerate)
}

/// Chains a gradient with respect to `(b − a) × (c − a)` back to the corners.
fn scatter_normal_grad(pos: &[Vec3], [a, b, c]: [usize; 3], g: &Vec3, grad: &mut [Vec3]) {
    let e1 = pos[b] - pos[a];
    let e2 = pos[c] - pos[a];
    let gb = e2.cross(g);
    let gc = g.cross(&e1);
    grad[b] += gb;
    grad[c] += gc;
    grad[a] -= gb + gc;
}

/// Log barrier on the homogeneous determinant:
/// `−(d − v0)² ln(d / v0)` for `0 < d ≤ v0`, zero above `v0`, `+∞` at or
/// below zero. Returns the value and `dl/dd`.
pub fn barrier_l(det: f64, v0: f64) -> (f64, f64) {
    if det <= 0.0 || det.is_nan() {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    if det >= v0 {
        return (0.0, 0.0);
    }
    let s = det - v0;
    let log = (det / v0).ln();
    (-s * s * log, -2.0 * s * log - s * s / det)
}

/// `Σ_tets l(det M)`; `+∞` if any tet is inverted or flat.
pub fn orientation_term(
    pos: &[Vec3],
    topo: &Topology,
    v0: f64,
    weight: f64,
    grad: &mut [Vec3],
) -> f64 {
    let mut value = 0.0;
    for t in &topo.tets {
        let p = [pos[t[0]], pos[t[1]], pos[t[2]], pos[t[3]]];
        let det = homogeneous_det(&p[0], &p[1], &p[2], &p[3]);
        if det > v0 {
            continue;
        }
        let (l, dl) = barrier_l(det, v0);
        if !l.is_finite() {
            return f64::INFINITY;
        }
        value += l;
        let g = homogeneous_det_grad(&p[0], &p[1], &p[2], &p[3]);
        for k in 0..4 {
            grad[t[k]] += g[k] * (dl * weight);
        }
    }
    value
}

/// `Σ_s ‖v_s − h_s + k n_s‖` with fixed targets `h_s` and noise `n_s`, one
/// entry per surface vertex (in `topo.surface_vertices` order). The gradient
/// is the unit residual; a zero residual contributes nothing.
pub fn projection_term(
    pos: &[Vec3],
    topo: &Topology,
    targets: &[Vec3],
    noise: &[Vec3],
    k: f64,
    weight: f64,
    grad: &mut [Vec3],
) -> f64 {
    let mut value = 0.0;
    for (s, &v) in topo.surface_vertices.iter().enumerate() {
        let r = pos[v] - targets[s] + noise[s] * k;
        let len = r.norm();
        value += len;
        if len > 0.0 {
            grad[v] += r * (weight / len);
        }
    }
    value
}

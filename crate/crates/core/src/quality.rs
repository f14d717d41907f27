//! Mesh quality auditing: aspect ratios, flipped elements, self-intersections
//! and Chamfer distance, plus batch aggregation and a text table.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use robust::{orient2d, orient3d, Coord, Coord3D};
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::geom::{homogeneous_det, triangle_area, triangle_normal, Aabb, Vec3};
use crate::tet::TetMesh;
use crate::trimesh::TriMesh;

/// Triangles above this aspect ratio are highlighted as poor.
pub const AR_THRESHOLD: f64 = 2.6;

/// Circumradius over twice the inradius; 1 for an equilateral triangle and
/// `+∞` when the area is below `1e-12 × longest edge²`.
pub fn triangle_ar(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let la = (b - c).norm();
    let lb = (c - a).norm();
    let lc = (a - b).norm();
    let area = triangle_area(a, b, c);
    let longest = la.max(lb).max(lc);
    if !(area > 1e-12 * longest * longest) {
        return f64::INFINITY;
    }
    let s = 0.5 * (la + lb + lc);
    let circum = la * lb * lc / (4.0 * area);
    let inr = area / s;
    circum / (2.0 * inr)
}

/// Longest edge over `2√6` times the inradius; 1 for a regular tet and `+∞`
/// for non-positive signed volume.
pub fn tet_ar(p: &[Vec3; 4]) -> f64 {
    let volume = homogeneous_det(&p[0], &p[1], &p[2], &p[3]) / 6.0;
    if !(volume > 0.0) {
        return f64::INFINITY;
    }
    let mut h_max: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            h_max = h_max.max((p[i] - p[j]).norm());
        }
    }
    let faces = triangle_area(&p[1], &p[2], &p[3])
        + triangle_area(&p[0], &p[2], &p[3])
        + triangle_area(&p[0], &p[1], &p[3])
        + triangle_area(&p[0], &p[1], &p[2]);
    let inradius = 3.0 * volume / faces;
    h_max / (2.0 * 6f64.sqrt() * inradius)
}

pub fn count_flipped_tets(mesh: &TetMesh) -> usize {
    mesh.dets().iter().filter(|&&d| d <= 0.0).count()
}

/// Surface triangles whose normal no longer points away from the fourth
/// vertex of the tet they bound.
pub fn count_flipped_triangles(mesh: &TetMesh) -> usize {
    let v = mesh.vertices();
    mesh.surface_tris()
        .iter()
        .zip(mesh.surface_owner())
        .filter(|([a, b, c], (_, d))| {
            let n = triangle_normal(&v[*a], &v[*b], &v[*c]);
            let centroid = (v[*a] + v[*b] + v[*c]) / 3.0;
            !(n.dot(&(centroid - v[*d])) > 0.0)
        })
        .count()
}

fn c3(p: &Vec3) -> Coord3D<f64> {
    Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Drops the coordinate along which `normal` is largest.
fn project(p: &Vec3, axis: usize) -> Coord<f64> {
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    Coord { x: p[i], y: p[j] }
}

fn dominant_axis(n: &Vec3) -> usize {
    let a = n.abs();
    if a.x >= a.y && a.x >= a.z {
        0
    } else if a.y >= a.z {
        1
    } else {
        2
    }
}

fn o2(a: Coord<f64>, b: Coord<f64>, c: Coord<f64>) -> i8 {
    sign(orient2d(a, b, c))
}

fn on_segment_2d(p: Coord<f64>, q: Coord<f64>, r: Coord<f64>) -> bool {
    r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
}

fn segments_meet_2d(p: Coord<f64>, q: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> bool {
    let d1 = o2(a, b, p);
    let d2 = o2(a, b, q);
    let d3 = o2(p, q, a);
    let d4 = o2(p, q, b);
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment_2d(a, b, p))
        || (d2 == 0 && on_segment_2d(a, b, q))
        || (d3 == 0 && on_segment_2d(p, q, a))
        || (d4 == 0 && on_segment_2d(p, q, b))
}

fn point_in_triangle_2d(p: Coord<f64>, t: [Coord<f64>; 3]) -> bool {
    let s = [o2(t[0], t[1], p), o2(t[1], t[2], p), o2(t[2], t[0], p)];
    !(s.iter().any(|&x| x > 0) && s.iter().any(|&x| x < 0))
}

/// Closed segment against closed triangle, both lying in one plane.
fn segment_triangle_coplanar(p: &Vec3, q: &Vec3, t: [&Vec3; 3], axis: usize) -> bool {
    let (p2, q2) = (project(p, axis), project(q, axis));
    let t2 = [project(t[0], axis), project(t[1], axis), project(t[2], axis)];
    if point_in_triangle_2d(p2, t2) || point_in_triangle_2d(q2, t2) {
        return true;
    }
    (0..3).any(|k| segments_meet_2d(p2, q2, t2[k], t2[(k + 1) % 3]))
}

/// Closed segment `pq` against closed triangle `t`, exact in sign.
fn segment_hits_triangle(p: &Vec3, q: &Vec3, t: [&Vec3; 3], axis: usize) -> bool {
    let (a, b, c) = (c3(t[0]), c3(t[1]), c3(t[2]));
    let sp = sign(orient3d(a, b, c, c3(p)));
    let sq = sign(orient3d(a, b, c, c3(q)));
    if sp * sq > 0 {
        return false;
    }
    if sp == 0 && sq == 0 {
        return segment_triangle_coplanar(p, q, t, axis);
    }
    let (cp, cq) = (c3(p), c3(q));
    let s = [
        sign(orient3d(cp, cq, a, b)),
        sign(orient3d(cp, cq, b, c)),
        sign(orient3d(cp, cq, c, a)),
    ];
    !(s.iter().any(|&x| x > 0) && s.iter().any(|&x| x < 0))
}

/// Exact closed triangle–triangle intersection test.
pub fn triangles_intersect(t1: [&Vec3; 3], t2: [&Vec3; 3]) -> bool {
    let axis1 = dominant_axis(&triangle_normal(t1[0], t1[1], t1[2]));
    let axis2 = dominant_axis(&triangle_normal(t2[0], t2[1], t2[2]));
    (0..3).any(|k| segment_hits_triangle(t1[k], t1[(k + 1) % 3], t2, axis2))
        || (0..3).any(|k| segment_hits_triangle(t2[k], t2[(k + 1) % 3], t1, axis1))
}

fn shares_vertex(a: &[usize; 3], b: &[usize; 3]) -> bool {
    a.iter().any(|v| b.contains(v))
}

fn pair_intersects(vertices: &[Vec3], a: &[usize; 3], b: &[usize; 3]) -> bool {
    !shares_vertex(a, b)
        && triangles_intersect(
            [&vertices[a[0]], &vertices[a[1]], &vertices[a[2]]],
            [&vertices[b[0]], &vertices[b[1]], &vertices[b[2]]],
        )
}

fn count_marked(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> usize {
    let mut hit = vec![false; n];
    for (i, j) in pairs {
        hit[i] = true;
        hit[j] = true;
    }
    hit.iter().filter(|&&h| h).count()
}

/// Number of triangles that intersect at least one triangle sharing no
/// vertex with them.
pub fn count_self_intersections(vertices: &[Vec3], tris: &[[usize; 3]]) -> usize {
    let boxes: Vec<Aabb> = tris
        .iter()
        .map(|t| Aabb::from_points(t.iter().map(|&i| &vertices[i])))
        .collect();
    let bvh = Bvh::build(&boxes);
    let pairs: Vec<Vec<usize>> = (0..tris.len())
        .into_par_iter()
        .map(|i| {
            let mut hits = Vec::new();
            bvh.for_each_overlap(&boxes[i], |j| {
                if j > i && pair_intersects(vertices, &tris[i], &tris[j]) {
                    hits.push(j);
                }
            });
            hits
        })
        .collect();
    count_marked(
        tris.len(),
        pairs
            .iter()
            .enumerate()
            .flat_map(|(i, js)| js.iter().map(move |&j| (i, j))),
    )
}

/// All-pairs reference for [`count_self_intersections`].
pub fn count_self_intersections_brute_force(vertices: &[Vec3], tris: &[[usize; 3]]) -> usize {
    let n = tris.len();
    count_marked(
        n,
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| pair_intersects(vertices, &tris[i], &tris[j])),
    )
}

fn mean_nearest_squared(from: &[Vec3], to: &[Vec3]) -> f64 {
    let d: Vec<f64> = from
        .par_iter()
        .map(|p| to.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
        .collect();
    d.iter().sum::<f64>() / from.len() as f64
}

/// Mean squared nearest-neighbor distance, averaged over both directions.
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("point set"));
    }
    Ok(0.5 * (mean_nearest_squared(a, b) + mean_nearest_squared(b, a)))
}

/// Area-weighted uniform samples on a triangle surface.
pub fn sample_surface(mesh: &TriMesh, count: usize, rng: &mut impl Rng) -> Result<Vec<Vec3>> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for i in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(i);
        total += triangle_area(&a, &b, &c);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Empty("surface area"));
    }
    Ok((0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect())
}

/// Uniform samples on a sphere.
pub fn sample_sphere(center: &Vec3, radius: f64, count: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    use rand_distr::StandardNormal;
    (0..count)
        .map(|_| loop {
            let d = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let n = d.norm();
            if n > 1e-12 {
                break center + d * (radius / n);
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub tri_ar_mean: f64,
    pub tri_ar_min: f64,
    pub tri_ar_max: f64,
    pub tet_ar_mean: f64,
    pub tet_ar_min: f64,
    pub tet_ar_max: f64,
    pub tri_flip_count: usize,
    pub tet_flip_count: usize,
    pub self_intersection_count: usize,
    pub n_tris: usize,
    pub n_tets: usize,
    pub tri_ar_over_threshold_count: usize,
    /// Elements whose aspect ratio is infinite; left out of the statistics.
    pub degenerate_tri_count: usize,
    pub degenerate_tet_count: usize,
}

fn stats(values: &[f64]) -> (f64, f64, f64, usize) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (0.0, 0.0, 0.0, values.len());
    }
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (finite.iter().sum::<f64>() / finite.len() as f64).clamp(min, max);
    (mean, min, max, values.len() - finite.len())
}

pub fn triangle_ars(mesh: &TetMesh) -> Vec<f64> {
    let v = mesh.vertices();
    mesh.surface_tris()
        .iter()
        .map(|t| triangle_ar(&v[t[0]], &v[t[1]], &v[t[2]]))
        .collect()
}

pub fn tet_ars(mesh: &TetMesh) -> Vec<f64> {
    (0..mesh.tets().len())
        .into_par_iter()
        .map(|i| tet_ar(&mesh.tet_points(i)))
        .collect()
}

/// Audits the surface triangles and tets of `mesh`.
pub fn quality_report(mesh: &TetMesh) -> QualityReport {
    let tri = triangle_ars(mesh);
    let tet = tet_ars(mesh);
    let (tri_ar_mean, tri_ar_min, tri_ar_max, degenerate_tri_count) = stats(&tri);
    let (tet_ar_mean, tet_ar_min, tet_ar_max, degenerate_tet_count) = stats(&tet);
    QualityReport {
        tri_ar_mean,
        tri_ar_min,
        tri_ar_max,
        tet_ar_mean,
        tet_ar_min,
        tet_ar_max,
        tri_flip_count: count_flipped_triangles(mesh),
        tet_flip_count: count_flipped_tets(mesh),
        self_intersection_count: count_self_intersections(mesh.vertices(), mesh.surface_tris()),
        n_tris: tri.len(),
        n_tets: tet.len(),
        tri_ar_over_threshold_count: tri.iter().filter(|&&a| a > AR_THRESHOLD).count(),
        degenerate_tri_count,
        degenerate_tet_count,
    }
}

/// Aggregate over many meshes: mean of means, median of extremes, mean of
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub meshes: usize,
    pub tri_ar_mean: f64,
    pub tri_ar_min: f64,
    pub tri_ar_max: f64,
    pub tet_ar_mean: f64,
    pub tet_ar_min: f64,
    pub tet_ar_max: f64,
    pub tri_flip_count: f64,
    pub tet_flip_count: f64,
    pub self_intersection_count: f64,
    pub n_tris: f64,
    pub n_tets: f64,
    pub tri_ar_over_threshold_count: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn batch_report(reports: &[QualityReport]) -> Result<BatchReport> {
    if reports.is_empty() {
        return Err(Error::Empty("report list"));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&QualityReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let med = |f: &dyn Fn(&QualityReport) -> f64| median(reports.iter().map(f).collect());
    Ok(BatchReport {
        meshes: reports.len(),
        tri_ar_mean: mean(&|r| r.tri_ar_mean),
        tri_ar_min: med(&|r| r.tri_ar_min),
        tri_ar_max: med(&|r| r.tri_ar_max),
        tet_ar_mean: mean(&|r| r.tet_ar_mean),
        tet_ar_min: med(&|r| r.tet_ar_min),
        tet_ar_max: med(&|r| r.tet_ar_max),
        tri_flip_count: mean(&|r| r.tri_flip_count as f64),
        tet_flip_count: mean(&|r| r.tet_flip_count as f64),
        self_intersection_count: mean(&|r| r.self_intersection_count as f64),
        n_tris: mean(&|r| r.n_tris as f64),
        n_tets: mean(&|r| r.n_tets as f64),
        tri_ar_over_threshold_count: mean(&|r| r.tri_ar_over_threshold_count as f64),
    })
}

/// Aligned table with one row per `(label, report)`.
pub fn format_table(rows: &[(String, BatchReport)]) -> String {
    let header = [
        "",
        "triAR (mean/min/max)",
        "tetAR (mean/min/max)",
        "triFlip",
        "tetFlip",
        "self-intersection",
    ];
    let mut cells: Vec<[String; 6]> = vec![header.map(String::from)];
    for (label, r) in rows {
        cells.push([
            label.clone(),
            format!("{:.2}/{:.2}/{:.2}", r.tri_ar_mean, r.tri_ar_min, r.tri_ar_max),
            format!("{:.2}/{:.2}/{:.2}", r.tet_ar_mean, r.tet_ar_min, r.tet_ar_max),
            format!("{:.2}", r.tri_flip_count),
            format!("{:.2}", r.tet_flip_count),
            format!("{:.2}", r.self_intersection_count),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap())
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| {
                if c == 0 {
                    format!("{s:<w$}")
                } else {
                    format!("{s:>w$}")
                }
            })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    out
}

//! Median-split AABB trees: a generic box hierarchy and the triangle tree used
//! for exact closest-point queries.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geom::{closest_point_on_triangle, triangle_normal, Aabb, Vec3};
use crate::trimesh::TriMesh;

pub const MAX_LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Internal { left: usize, right: usize },
    /// Range into [`Bvh::items`].
    Leaf { start: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub bounds: Aabb,
    pub kind: NodeKind,
}

/// Hierarchy over arbitrary boxes; node 0 is the root.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    items: Vec<usize>,
    boxes: Vec<Aabb>,
}

impl Bvh {
    pub fn build(boxes: &[Aabb]) -> Bvh {
        let mut items: Vec<usize> = (0..boxes.len()).collect();
        let centers: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / MAX_LEAF_SIZE + 1);
        if !boxes.is_empty() {
            build_node(&mut nodes, &mut items, 0, boxes, &centers);
        }
        Bvh {
            nodes,
            items,
            boxes: boxes.to_vec(),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn root_bounds(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| n.bounds)
    }

    /// Calls `visit` with every item whose box overlaps `query`.
    pub fn for_each_overlap(&self, query: &Aabb, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bounds.overlaps(query) {
                continue;
            }
            match node.kind {
                NodeKind::Internal { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
                NodeKind::Leaf { start, count } => {
                    for &item in &self.items[start..start + count] {
                        if self.boxes[item].overlaps(query) {
                            visit(item);
                        }
                    }
                }
            }
        }
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    items: &mut [usize],
    offset: usize,
    boxes: &[Aabb],
    centers: &[Vec3],
) -> usize {
    let bounds = items
        .iter()
        .fold(Aabb::empty(), |acc, &i| acc.merge(&boxes[i]));
    let id = nodes.len();
    nodes.push(Node {
        bounds,
        kind: NodeKind::Leaf {
            start: offset,
            count: items.len(),
        },
    });
    if items.len() <= MAX_LEAF_SIZE {
        return id;
    }
    let spread = Aabb::from_points(items.iter().map(|&i| &centers[i])).extent();
    let axis = spread.imax();
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |&a, &b| {
        centers[a][axis]
            .total_cmp(&centers[b][axis])
            .then(a.cmp(&b))
    });
    let (lo, hi) = items.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, boxes, centers);
    let right = build_node(nodes, hi, offset + mid, boxes, centers);
    nodes[id].kind = NodeKind::Internal { left, right };
    id
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vec3,
    pub triangle: usize,
    pub distance_squared: f64,
}

impl Hit {
    pub fn distance(&self) -> f64 {
        self.distance_squared.sqrt()
    }

    /// Lexicographic (distance, triangle index) order used for tie-breaking.
    fn better_than(&self, other: &Hit) -> bool {
        match self.distance_squared.total_cmp(&other.distance_squared) {
            Ordering::Less => true,
            Ordering::Equal => self.triangle < other.triangle,
            Ordering::Greater => false,
        }
    }
}

/// AABB tree over a triangle surface. Zero-area triangles are left out.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    tree: Bvh,
    triangles: Vec<[Vec3; 3]>,
    /// Index of each stored triangle in the source mesh.
    source: Vec<usize>,
}

impl TriangleBvh {
    pub fn build(surface: &TriMesh) -> Result<TriangleBvh> {
        let mut triangles = Vec::with_capacity(surface.faces.len());
        let mut source = Vec::with_capacity(surface.faces.len());
        for i in 0..surface.faces.len() {
            let [a, b, c] = surface.triangle(i);
            if triangle_normal(&a, &b, &c).norm_squared() > 0.0 {
                triangles.push([a, b, c]);
                source.push(i);
            }
        }
        if triangles.is_empty() {
            return Err(Error::InvalidInput(
                "surface has no non-degenerate triangles".into(),
            ));
        }
        let boxes: Vec<Aabb> = triangles.iter().map(|t| Aabb::from_points(t)).collect();
        Ok(TriangleBvh {
            tree: Bvh::build(&boxes),
            triangles,
            source,
        })
    }

    pub fn tree(&self) -> &Bvh {
        &self.tree
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Exact closest point on the surface; ties go to the lowest triangle index.
    pub fn closest_point(&self, x: &Vec3) -> Hit {
        self.closest_point_counted(x).0
    }

    /// Closest point plus the number of nodes and triangles touched.
    pub fn closest_point_counted(&self, x: &Vec3) -> (Hit, usize) {
        let nodes = self.tree.nodes();
        let mut best = Hit {
            point: Vec3::repeat(f64::NAN),
            triangle: usize::MAX,
            distance_squared: f64::INFINITY,
        };
        let mut work = 0usize;
        let mut stack: Vec<(usize, f64)> = vec![(0, nodes[0].bounds.distance_squared(x))];
        while let Some((n, d2)) = stack.pop() {
            if d2 > best.distance_squared {
                continue;
            }
            work += 1;
            match nodes[n].kind {
                NodeKind::Internal { left, right } => {
                    let dl = nodes[left].bounds.distance_squared(x);
                    let dr = nodes[right].bounds.distance_squared(x);
                    // push the farther child first so the nearer one pops next
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
                NodeKind::Leaf { start, count } => {
                    for &i in &self.tree.items()[start..start + count] {
                        work += 1;
                        let [a, b, c] = &self.triangles[i];
                        let p = closest_point_on_triangle(x, a, b, c);
                        let hit = Hit {
                            point: p,
                            triangle: self.source[i],
                            distance_squared: (p - x).norm_squared(),
                        };
                        if hit.better_than(&best) {
                            best = hit;
                        }
                    }
                }
            }
        }
        (best, work)
    }

    /// Linear scan over every triangle; the reference the tree must agree with.
    pub fn closest_point_brute_force(&self, x: &Vec3) -> Hit {
        let mut best = Hit {
            point: Vec3::repeat(f64::NAN),
            triangle: usize::MAX,
            distance_squared: f64::INFINITY,
        };
        for (i, [a, b, c]) in self.triangles.iter().enumerate() {
            let p = closest_point_on_triangle(x, a, b, c);
            let hit = Hit {
                point: p,
                triangle: self.source[i],
                distance_squared: (p - x).norm_squared(),
            };
            if hit.better_than(&best) {
                best = hit;
            }
        }
        best
    }
}

/// Convenience wrapper for [`TriangleBvh::build`].
pub fn build_bvh(surface: &TriMesh) -> Result<TriangleBvh> {
    TriangleBvh::build(surface)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_triangle_is_one_leaf() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        );
        let bvh = TriangleBvh::build(&m).unwrap();
        assert_eq!(bvh.tree().nodes().len(), 1);
        assert!(matches!(
            bvh.tree().nodes()[0].kind,
            NodeKind::Leaf { start: 0, count: 1 }
        ));
    }

    #[test]
    fn cube_tree_covers_everything() {
        let m = shapes::axis_box(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0));
        let bvh = TriangleBvh::build(&m).unwrap();
        assert_eq!(bvh.tree().root_bounds().unwrap(), m.bounds());
        let mut seen = vec![0; 12];
        for node in bvh.tree().nodes() {
            if let NodeKind::Leaf { start, count } = node.kind {
                assert!(count <= MAX_LEAF_SIZE);
                for &i in &bvh.tree().items()[start..start + count] {
                    seen[i] += 1;
                    assert!(node.bounds.contains_box(&Aabb::from_points(&bvh.triangles[i])));
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn children_are_nested_in_parents() {
        let m = shapes::icosphere(3);
        let bvh = TriangleBvh::build(&m).unwrap();
        for node in bvh.tree().nodes() {
            if let NodeKind::Internal { left, right } = node.kind {
                assert!(node.bounds.contains_box(&bvh.tree().nodes()[left].bounds));
                assert!(node.bounds.contains_box(&bvh.tree().nodes()[right].bounds));
            }
        }
    }

    #[test]
    fn all_degenerate_rejected() {
        let m = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]);
        assert!(TriangleBvh::build(&m).is_err());
    }

    #[test]
    fn radial_query_on_sphere() {
        let bvh = TriangleBvh::build(&shapes::icosphere(4)).unwrap();
        let x = Vec3::new(1.2, -0.4, 1.5).normalize() * 2.0;
        let hit = bvh.closest_point(&x);
        // facets are flat, so the foot point drifts sideways by up to an edge fraction
        assert!((hit.point - x / 2.0).norm() < 2e-2);
        assert_eq!(hit, bvh.closest_point_brute_force(&x));
        assert!((hit.distance() - 1.0).abs() < 5e-3);
    }

    #[test]
    fn surface_point_is_fixed() {
        let m = shapes::icosphere(2);
        let bvh = TriangleBvh::build(&m).unwrap();
        let [a, b, c] = m.triangle(17);
        let p = (a + b * 2.0 + c) / 4.0;
        let hit = bvh.closest_point(&p);
        assert!(hit.distance() < 1e-15);
        assert!((hit.point - p).norm() < 1e-15);
    }

    #[test]
    fn matches_brute_force() {
        let bvh = TriangleBvh::build(&shapes::uv_sphere(40, 21)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x = Vec3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            let fast = bvh.closest_point(&x);
            let slow = bvh.closest_point_brute_force(&x);
            assert!((fast.distance() - slow.distance()).abs() < 1e-12);
            assert_eq!(fast.triangle, slow.triangle);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // Two copies of the same triangle: the query must report the first.
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2], [0, 2, 1], [0, 1, 2]],
        );
        let bvh = TriangleBvh::build(&m).unwrap();
        assert_eq!(bvh.closest_point(&Vec3::new(0.2, 0.2, 1.0)).triangle, 0);
    }

    #[test]
    fn overlap_query_finds_neighbors() {
        let boxes: Vec<Aabb> = (0..50)
            .map(|i| {
                let p = Vec3::new(i as f64, 0.0, 0.0);
                Aabb { min: p, max: p + Vec3::repeat(0.5) }
            })
            .collect();
        let bvh = Bvh::build(&boxes);
        let mut hits = Vec::new();
        bvh.for_each_overlap(
            &Aabb { min: Vec3::new(9.8, 0.0, 0.0), max: Vec3::new(12.2, 0.1, 0.1) },
            |i| hits.push(i),
        );
        hits.sort();
        assert_eq!(hits, vec![10, 11, 12]);
    }
}

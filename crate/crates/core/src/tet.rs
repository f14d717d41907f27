//! Six-tetrahedra cube splitting with a tracked, outward-wound boundary.
//!
//! Every occupied voxel is cut along its main diagonal `(0,0,0) → (1,1,1)`.
//! The pattern is translation invariant, so the face diagonal a cube picks on
//! a shared quad is the one its neighbor picks too, and the result is
//! face-to-face consistent without any global bookkeeping.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geom::{homogeneous_det, triangle_normal, Vec3};
use crate::trimesh::TriMesh;
use crate::voxel::{Frame, VoxelGrid};

/// Cube corner `i` sits at `(i & 1, (i >> 1) & 1, (i >> 2) & 1)`.
const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// The six tets around the main diagonal, ordered so the homogeneous
/// determinant is +1 for a unit cube.
pub const CUBE_TETS: [[usize; 4]; 6] = [
    [0, 3, 1, 7],
    [0, 2, 3, 7],
    [0, 6, 2, 7],
    [0, 4, 6, 7],
    [0, 5, 4, 7],
    [0, 1, 5, 7],
];

/// Face `k` of a tet omits local vertex `k`.
const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

const TET_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Tetrahedral mesh in voxel-index units, plus its boundary surface.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    vertices: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    surface_tris: Vec<[usize; 3]>,
    /// For each surface triangle: the tet it bounds and that tet's fourth vertex.
    surface_owner: Vec<(usize, usize)>,
    surface_vertex: Vec<bool>,
    edges: Vec<[usize; 2]>,
    cube_of_tet: Vec<usize>,
    frame: Frame,
}

/// Boundary surface re-indexed onto its own compact vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub mesh: TriMesh,
    /// `vertex_map[s]` is the tet-mesh index of surface vertex `s`.
    pub vertex_map: Vec<usize>,
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

impl TetMesh {
    /// Splits every occupied voxel of `grid` into six tetrahedra.
    pub fn from_grid(grid: &VoxelGrid) -> Result<TetMesh> {
        if grid.is_empty() {
            return Err(Error::Empty("voxel grid has no occupied voxels"));
        }
        let r = grid.resolution();
        let side = r + 1;
        let mut lattice: Vec<usize> = vec![usize::MAX; side * side * side];
        let mut vertices = Vec::new();
        let mut tets = Vec::with_capacity(6 * grid.count());
        let mut cube_of_tet = Vec::with_capacity(6 * grid.count());

        for (cube, c) in grid.occupied().enumerate() {
            let mut corner = [0usize; 8];
            for (k, off) in CORNER_OFFSETS.iter().enumerate() {
                let (x, y, z) = (c.x + off[0], c.y + off[1], c.z + off[2]);
                let slot = &mut lattice[x + side * (y + side * z)];
                if *slot == usize::MAX {
                    *slot = vertices.len();
                    vertices.push(Vec3::new(x as f64, y as f64, z as f64));
                }
                corner[k] = *slot;
            }
            for t in &CUBE_TETS {
                tets.push([corner[t[0]], corner[t[1]], corner[t[2]], corner[t[3]]]);
                cube_of_tet.push(cube);
            }
        }
        Self::assemble(vertices, tets, cube_of_tet, None, *grid.frame())
    }

    /// Rebuilds topology from raw arrays (e.g. a mesh read back from disk).
    ///
    /// When `surface` is given, its winding is kept as stored; every triangle
    /// must be a boundary face of `tets`, and all boundary faces must be listed.
    pub fn from_parts(
        vertices: Vec<Vec3>,
        tets: Vec<[usize; 4]>,
        surface: Option<Vec<[usize; 3]>>,
        frame: Frame,
    ) -> Result<TetMesh> {
        if tets.is_empty() {
            return Err(Error::Empty("tet mesh has no tetrahedra"));
        }
        let n = vertices.len();
        for t in &tets {
            if let Some(&bad) = t.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: bad, len: n });
            }
        }
        let cube_of_tet = (0..tets.len()).map(|i| i / 6).collect();
        Self::assemble(vertices, tets, cube_of_tet, surface, frame)
    }

    fn assemble(
        vertices: Vec<Vec3>,
        tets: Vec<[usize; 4]>,
        cube_of_tet: Vec<usize>,
        surface: Option<Vec<[usize; 3]>>,
        frame: Frame,
    ) -> Result<TetMesh> {
        let mut face_count: HashMap<[usize; 3], u32> = HashMap::with_capacity(tets.len() * 3);
        for t in &tets {
            for f in &TET_FACES {
                *face_count
                    .entry(sorted3([t[f[0]], t[f[1]], t[f[2]]]))
                    .or_insert(0) += 1;
            }
        }
        if let Some((face, _)) = face_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidInput(format!(
                "face {face:?} is shared by more than two tetrahedra"
            )));
        }

        // Boundary faces in tet order, wound so the normal points away from
        // the owning tet's fourth vertex.
        let mut boundary: Vec<([usize; 3], (usize, usize))> = Vec::new();
        for (ti, t) in tets.iter().enumerate() {
            for (k, f) in TET_FACES.iter().enumerate() {
                let tri = [t[f[0]], t[f[1]], t[f[2]]];
                if face_count[&sorted3(tri)] == 1 {
                    let opposite = t[k];
                    let [a, b, c] = tri;
                    let n = triangle_normal(&vertices[a], &vertices[b], &vertices[c]);
                    let centroid = (vertices[a] + vertices[b] + vertices[c]) / 3.0;
                    let tri = if n.dot(&(centroid - vertices[opposite])) >= 0.0 {
                        [a, b, c]
                    } else {
                        [a, c, b]
                    };
                    boundary.push((tri, (ti, opposite)));
                }
            }
        }

        let (surface_tris, surface_owner) = match surface {
            None => boundary.into_iter().unzip(),
            Some(stored) => {
                let owner: HashMap<[usize; 3], (usize, usize)> = boundary
                    .iter()
                    .map(|(tri, own)| (sorted3(*tri), *own))
                    .collect();
                if stored.len() != owner.len() {
                    return Err(Error::InvalidInput(format!(
                        "surface lists {} triangles but the tets have {} boundary faces",
                        stored.len(),
                        owner.len()
                    )));
                }
                let owners = stored
                    .iter()
                    .map(|tri| {
                        owner.get(&sorted3(*tri)).copied().ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "surface triangle {tri:?} is not a boundary face"
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (stored, owners)
            }
        };

        let mut surface_vertex = vec![false; vertices.len()];
        for tri in &surface_tris {
            for &v in tri {
                surface_vertex[v] = true;
            }
        }

        let mut edge_set: HashSet<[usize; 2]> = HashSet::with_capacity(tets.len() * 2);
        for t in &tets {
            for e in &TET_EDGES {
                let (a, b) = (t[e[0]], t[e[1]]);
                edge_set.insert([a.min(b), a.max(b)]);
            }
        }
        let mut edges: Vec<[usize; 2]> = edge_set.into_iter().collect();
        edges.sort_unstable();

        Ok(TetMesh {
            vertices,
            tets,
            surface_tris,
            surface_owner,
            surface_vertex,
            edges,
            cube_of_tet,
            frame,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    /// Positions are the only mutable state; topology is fixed at construction.
    pub fn vertices_mut(&mut self) -> &mut [Vec3] {
        &mut self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn surface_tris(&self) -> &[[usize; 3]] {
        &self.surface_tris
    }

    /// `(tet index, fourth vertex)` of the tet bounded by each surface triangle.
    pub fn surface_owner(&self) -> &[(usize, usize)] {
        &self.surface_owner
    }

    pub fn surface_vertex_flags(&self) -> &[bool] {
        &self.surface_vertex
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cube_of_tet(&self) -> &[usize] {
        &self.cube_of_tet
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn tet_points(&self, i: usize) -> [Vec3; 4] {
        let t = self.tets[i];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
            self.vertices[t[3]],
        ]
    }

    /// Homogeneous 4×4 determinant of tet `i` (6 × signed volume).
    pub fn tet_det(&self, i: usize) -> Result<f64> {
        if i >= self.tets.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.tets.len(),
            });
        }
        let [a, b, c, d] = self.tet_points(i);
        Ok(homogeneous_det(&a, &b, &c, &d))
    }

    pub fn dets(&self) -> Vec<f64> {
        (0..self.tets.len())
            .map(|i| {
                let [a, b, c, d] = self.tet_points(i);
                homogeneous_det(&a, &b, &c, &d)
            })
            .collect()
    }

    pub fn min_det(&self) -> f64 {
        self.dets().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn total_volume(&self) -> f64 {
        self.dets().iter().map(|d| d / 6.0).sum()
    }

    /// Boundary surface with outward winding and its vertex map.
    pub fn extract_surface(&self) -> Surface {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertex_map = Vec::new();
        for tri in &self.surface_tris {
            for &v in tri {
                if remap[v] == usize::MAX {
                    remap[v] = vertex_map.len();
                    vertex_map.push(v);
                }
            }
        }
        let vertices = vertex_map.iter().map(|&v| self.vertices[v]).collect();
        let faces = self
            .surface_tris
            .iter()
            .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
            .collect();
        Surface {
            mesh: TriMesh::new(vertices, faces),
            vertex_map,
        }
    }

    /// Surface triangles in world coordinates, sharing the full vertex list.
    pub fn surface_world(&self) -> TriMesh {
        TriMesh::new(
            self.vertices.iter().map(|v| self.frame.to_world(v)).collect(),
            self.surface_tris.clone(),
        )
    }

    pub fn vertices_world(&self) -> Vec<Vec3> {
        self.vertices.iter().map(|v| self.frame.to_world(v)).collect()
    }
}

/// Convenience wrapper for [`TetMesh::from_grid`].
pub fn build_tet_mesh(grid: &VoxelGrid) -> Result<TetMesh> {
    TetMesh::from_grid(grid)
}

/// Number of surface triangles on each undirected surface edge.
pub fn surface_edge_valence(tris: &[[usize; 3]]) -> HashMap<[usize; 2], usize> {
    let mut valence = HashMap::new();
    for t in tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *valence.entry([a.min(b), a.max(b)]).or_insert(0) += 1;
        }
    }
    valence
}

/// `V - E + F` of a triangle surface, counting only referenced vertices.
pub fn euler_characteristic(tris: &[[usize; 3]]) -> i64 {
    let verts: HashSet<usize> = tris.iter().flatten().copied().collect();
    let edges = surface_edge_valence(tris).len();
    verts.len() as i64 - edges as i64 + tris.len() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{Frame, VoxelGrid};

    fn grid_of(r: usize, cells: &[(usize, usize, usize)]) -> VoxelGrid {
        VoxelGrid::from_fn(r, Frame::unit(r), |x, y, z| cells.contains(&(x, y, z))).unwrap()
    }

    #[test]
    fn single_voxel_counts() {
        let m = TetMesh::from_grid(&grid_of(1, &[(0, 0, 0)])).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.tets().len(), 6);
        assert_eq!(m.surface_tris().len(), 12);
        assert_eq!(m.edges().len(), 19);
        for i in 0..6 {
            assert_eq!(m.tet_det(i).unwrap(), 1.0);
        }
        assert!((m.total_volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn edge_lengths_of_single_voxel() {
        // 12 cube edges, 6 face diagonals, 1 main diagonal.
        let m = TetMesh::from_grid(&grid_of(1, &[(0, 0, 0)])).unwrap();
        let mut by_len = [0usize; 4];
        for [a, b] in m.edges() {
            let l2 = (m.vertices()[*a] - m.vertices()[*b]).norm_squared();
            by_len[l2.round() as usize] += 1;
        }
        assert_eq!(by_len, [0, 12, 6, 1]);
    }

    #[test]
    fn face_neighbors_share_diagonal() {
        let m = TetMesh::from_grid(&grid_of(2, &[(0, 0, 0), (1, 0, 0)])).unwrap();
        assert_eq!(m.vertices().len(), 12);
        assert_eq!(m.tets().len(), 12);
        assert_eq!(m.surface_tris().len(), 20);
        // On the shared quad x = 1 exactly one diagonal exists.
        let on_plane: Vec<_> = m
            .edges()
            .iter()
            .filter(|[a, b]| m.vertices()[*a].x == 1.0 && m.vertices()[*b].x == 1.0)
            .collect();
        assert_eq!(on_plane.len(), 5);
    }

    #[test]
    fn surface_is_outward_and_closed() {
        let m = TetMesh::from_grid(&grid_of(3, &[(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)]))
            .unwrap();
        for (tri, &(_, opp)) in m.surface_tris().iter().zip(m.surface_owner()) {
            let v = m.vertices();
            let n = triangle_normal(&v[tri[0]], &v[tri[1]], &v[tri[2]]);
            let c = (v[tri[0]] + v[tri[1]] + v[tri[2]]) / 3.0;
            assert!(n.dot(&(c - v[opp])) > 0.0);
        }
        assert!(surface_edge_valence(m.surface_tris()).values().all(|&k| k == 2));
        assert_eq!(euler_characteristic(m.surface_tris()), 2);
    }

    #[test]
    fn extract_surface_single_voxel() {
        let m = TetMesh::from_grid(&grid_of(1, &[(0, 0, 0)])).unwrap();
        let s = m.extract_surface();
        assert_eq!(s.mesh.faces.len(), 12);
        assert_eq!(s.mesh.vertices.len(), 8);
        assert_eq!(euler_characteristic(&s.mesh.faces), 2);
        // outward: winding number 1 at the center
        assert!((s.mesh.winding_number(&Vec3::repeat(0.5)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bar_surface() {
        let m = TetMesh::from_grid(&grid_of(2, &[(0, 0, 0), (1, 0, 0)])).unwrap();
        assert_eq!(m.surface_tris().len(), 20);
        assert_eq!(euler_characteristic(m.surface_tris()), 2);
    }

    #[test]
    fn det_edge_cases() {
        let mut m = TetMesh::from_grid(&grid_of(1, &[(0, 0, 0)])).unwrap();
        assert!(matches!(m.tet_det(6), Err(Error::IndexOutOfRange { .. })));
        let t = m.tets()[0];
        m.vertices_mut()[t[1]] = m.vertices()[t[0]];
        assert_eq!(m.tet_det(0).unwrap(), 0.0);
    }

    #[test]
    fn swapped_order_negates_det() {
        let m = TetMesh::from_grid(&grid_of(1, &[(0, 0, 0)])).unwrap();
        let mut tets = m.tets().to_vec();
        tets[2].swap(0, 3);
        let m2 = TetMesh::from_parts(m.vertices().to_vec(), tets, None, *m.frame()).unwrap();
        assert_eq!(m2.tet_det(2).unwrap(), -m.tet_det(2).unwrap());
    }

    #[test]
    fn empty_grid_rejected() {
        let g = VoxelGrid::empty(3, Frame::unit(3)).unwrap();
        assert!(matches!(TetMesh::from_grid(&g), Err(Error::Empty(_))));
    }

    #[test]
    fn from_parts_round_trip_keeps_surface() {
        let m = TetMesh::from_grid(&grid_of(2, &[(0, 0, 0), (1, 0, 0), (1, 1, 1)])).unwrap();
        let back = TetMesh::from_parts(
            m.vertices().to_vec(),
            m.tets().to_vec(),
            Some(m.surface_tris().to_vec()),
            *m.frame(),
        )
        .unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn from_parts_rejects_foreign_surface() {
        let m = TetMesh::from_grid(&grid_of(2, &[(0, 0, 0), (1, 0, 0)])).unwrap();
        let mut surf = m.surface_tris().to_vec();
        surf.pop();
        assert!(TetMesh::from_parts(m.vertices().to_vec(), m.tets().to_vec(), Some(surf), *m.frame())
            .is_err());
    }
}

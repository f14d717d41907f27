//! Volume mesh writers (MEDIT `.mesh`, legacy VTK) and a MEDIT reader.
//! Vertices are written in world coordinates.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::tet::TetMesh;
use crate::trimesh::TriMesh;
use crate::voxel::Frame;

/// ASCII MEDIT with 1-based indices: vertices, tetrahedra and the boundary
/// triangles in their stored winding. Element references are 0.
pub fn medit_string(mesh: &TetMesh) -> String {
    let mut s = String::new();
    s.push_str("MeshVersionFormatted 2\nDimension 3\n\n");
    let world = mesh.vertices_world();
    writeln!(s, "Vertices\n{}", world.len()).unwrap();
    for v in &world {
        writeln!(s, "{} {} {} 0", v.x, v.y, v.z).unwrap();
    }
    writeln!(s, "\nTetrahedra\n{}", mesh.tets().len()).unwrap();
    for t in mesh.tets() {
        writeln!(s, "{} {} {} {} 0", t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1).unwrap();
    }
    writeln!(s, "\nTriangles\n{}", mesh.surface_tris().len()).unwrap();
    for t in mesh.surface_tris() {
        writeln!(s, "{} {} {} 0", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    s.push_str("\nEnd\n");
    s
}

pub fn write_medit(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, medit_string(mesh)).map_err(|e| Error::io(path, e))
}

struct Tokens<'a> {
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let inner = text.lines().enumerate().flat_map(|(i, l)| {
            let l = l.split('#').next().unwrap_or("");
            l.split_whitespace().map(move |t| (i + 1, t))
        });
        Tokens {
            inner: Box::new(inner),
            line: 0,
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        self.inner.next().map(|(l, t)| {
            self.line = l;
            t
        })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.next().ok_or_else(|| self.err(format!("expected {what}")))?;
        tok.parse()
            .map_err(|_| self.err(format!("bad {what} '{tok}'")))
    }

    fn indices<const N: usize>(&mut self, n_vertices: usize) -> Result<[usize; N]> {
        let mut out = [0; N];
        for o in out.iter_mut() {
            let i: usize = self.parse("vertex index")?;
            if i == 0 || i > n_vertices {
                return Err(self.err(format!("vertex index {i} outside 1..={n_vertices}")));
            }
            *o = i - 1;
        }
        let _reference: i64 = self.parse("element reference")?;
        Ok(out)
    }
}

/// Reads an ASCII MEDIT volume mesh. Coordinates are taken as given
/// (identity frame); triangles, if present, must be exactly the boundary.
pub fn parse_medit(text: &str) -> Result<TetMesh> {
    let mut tok = Tokens::new(text);
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut tets: Vec<[usize; 4]> = Vec::new();
    let mut tris: Option<Vec<[usize; 3]>> = None;
    while let Some(kw) = tok.next() {
        match kw {
            "MeshVersionFormatted" | "Dimension" => {
                let v: u32 = tok.parse(kw)?;
                if kw == "Dimension" && v != 3 {
                    return Err(tok.err(format!("only 3D meshes are supported, got {v}")));
                }
            }
            "Vertices" => {
                let n: usize = tok.parse("vertex count")?;
                vertices.reserve(n);
                for _ in 0..n {
                    let p = Vec3::new(tok.parse("x")?, tok.parse("y")?, tok.parse("z")?);
                    if !p.iter().all(|c| c.is_finite()) {
                        return Err(Error::NonFinite(vertices.len()));
                    }
                    let _reference: i64 = tok.parse("vertex reference")?;
                    vertices.push(p);
                }
            }
            "Tetrahedra" => {
                let n: usize = tok.parse("tetrahedron count")?;
                for _ in 0..n {
                    tets.push(tok.indices::<4>(vertices.len())?);
                }
            }
            "Triangles" => {
                let n: usize = tok.parse("triangle count")?;
                let list = tris.get_or_insert_with(Vec::new);
                for _ in 0..n {
                    list.push(tok.indices::<3>(vertices.len())?);
                }
            }
            "Edges" => {
                let n: usize = tok.parse("edge count")?;
                for _ in 0..n {
                    tok.indices::<2>(vertices.len())?;
                }
            }
            "End" => break,
            other => return Err(tok.err(format!("unsupported keyword '{other}'"))),
        }
    }
    TetMesh::from_parts(vertices, tets, tris, Frame::identity())
}

pub fn read_medit(path: impl AsRef<Path>) -> Result<TetMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_medit(&text)
}

/// Legacy ASCII VTK unstructured grid of tetrahedra (cell type 10).
pub fn vtk_string(mesh: &TetMesh) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\ntetvox\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let world = mesh.vertices_world();
    writeln!(s, "POINTS {} double", world.len()).unwrap();
    for v in &world {
        writeln!(s, "{} {} {}", v.x, v.y, v.z).unwrap();
    }
    let n = mesh.tets().len();
    writeln!(s, "CELLS {} {}", n, 5 * n).unwrap();
    for t in mesh.tets() {
        writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    writeln!(s, "CELL_TYPES {n}").unwrap();
    for _ in 0..n {
        s.push_str("10\n");
    }
    s
}

pub fn write_vtk(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, vtk_string(mesh)).map_err(|e| Error::io(path, e))
}

/// Writes `.mesh` or `.vtk` by extension, anything else as a surface OBJ.
pub fn write_by_extension(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("mesh") => write_medit(mesh, path),
        Some("vtk") => write_vtk(mesh, path),
        Some("obj") => {
            let surface = mesh.extract_surface().mesh;
            let frame = mesh.frame();
            let world = surface.vertices.iter().map(|v| frame.to_world(v)).collect();
            TriMesh::new(world, surface.faces).write_obj(path)
        }
        _ => Err(Error::InvalidInput(format!(
            "unknown mesh extension for {} (expected .mesh, .vtk or .obj)",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::VoxelGrid;

    fn sample() -> TetMesh {
        let g = VoxelGrid::from_fn(3, Frame::unit(3), |x, y, z| x * y + z < 3).unwrap();
        TetMesh::from_grid(&g).unwrap()
    }

    #[test]
    fn medit_layout() {
        let m = sample();
        let s = medit_string(&m);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "MeshVersionFormatted 2");
        let at = lines.iter().position(|l| *l == "Tetrahedra").unwrap();
        assert_eq!(lines[at + 1].parse::<usize>().unwrap(), m.tets().len());
        let first: Vec<usize> = lines[at + 2].split(' ').map(|t| t.parse().unwrap()).collect();
        assert_eq!(first[..4], m.tets()[0].map(|i| i + 1));
        assert!(s.ends_with("End\n"));
    }

    #[test]
    fn medit_round_trip() {
        let m = sample();
        let back = parse_medit(&medit_string(&m)).unwrap();
        assert_eq!(back.tets(), m.tets());
        assert_eq!(back.surface_tris(), m.surface_tris());
        for (a, b) in back.vertices().iter().zip(m.vertices_world()) {
            assert_eq!(*a, b);
        }
        assert_eq!(medit_string(&back), medit_string(&m));
    }

    #[test]
    fn medit_errors() {
        assert!(parse_medit("Vertices\n1\n0 0 0 0\nTetrahedra\n1\n1 2 3 4 0\n").is_err());
        assert!(parse_medit("Vertices\n2\n0 0 0 0\n").is_err());
        assert!(parse_medit("Dimension 2\n").is_err());
        assert!(parse_medit("Quadrilaterals 0\n").is_err());
        let e = parse_medit("Vertices\n1\n0 zero 0 0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn vtk_layout() {
        let m = sample();
        let s = vtk_string(&m);
        let n = m.tets().len();
        assert!(s.contains(&format!("CELLS {} {}\n", n, 5 * n)));
        assert_eq!(s.lines().filter(|l| *l == "10").count(), n);
        assert!(s.contains(&format!("POINTS {} double", m.vertices().len())));
    }

    #[test]
    fn unknown_extension() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_by_extension(&sample(), dir.path().join("a.stl")).is_err());
        write_by_extension(&sample(), dir.path().join("a.vtk")).unwrap();
        write_by_extension(&sample(), dir.path().join("a.obj")).unwrap();
    }
}

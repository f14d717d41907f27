//! Indexed triangle meshes and their OBJ / OFF readers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{solid_angle, triangle_area, Aabb, Vec3};

/// Indexed triangle mesh. Faces are counter-clockwise seen from outside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

/// Uniform scale + translation, `world = scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub translation: Vec3,
}

impl Similarity {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.translation
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        TriMesh { vertices, faces }
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                triangle_area(&a, &b, &c)
            })
            .sum()
    }

    /// Checks indices and coordinates, returning the first problem found.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() || self.faces.is_empty() {
            return Err(Error::Empty("triangle mesh"));
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        let n = self.vertices.len();
        for f in &self.faces {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: bad, len: n });
            }
        }
        Ok(())
    }

    /// Generalized winding number at `p`: 1 inside a closed outward-oriented
    /// surface, 0 outside, fractional near gaps.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        let total: f64 = self
            .faces
            .iter()
            .map(|&[a, b, c]| {
                solid_angle(p, &self.vertices[a], &self.vertices[b], &self.vertices[c])
            })
            .sum();
        total / (4.0 * std::f64::consts::PI)
    }

    /// Transform that puts the mesh in the unit cube: the longest bounding-box
    /// axis maps onto `[0, 1]` and the other axes are centered.
    pub fn unit_cube_normalization(&self) -> Result<Similarity> {
        self.validate()?;
        let bounds = self.bounds();
        let extent = bounds.extent();
        let longest = extent.max();
        if !(longest > 0.0) || !longest.is_finite() {
            return Err(Error::DegenerateBounds);
        }
        let scale = 1.0 / longest;
        let translation = Vec3::repeat(0.5) - bounds.center() * scale;
        Ok(Similarity { scale, translation })
    }

    pub fn transformed(&self, t: &Similarity) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|p| t.apply(p)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Concatenates meshes into one triangle soup.
    pub fn merged(parts: &[TriMesh]) -> TriMesh {
        let mut out = TriMesh::default();
        for part in parts {
            let base = out.vertices.len();
            out.vertices.extend_from_slice(&part.vertices);
            out.faces
                .extend(part.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<TriMesh> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("off") => parse_off(&text),
            Some("obj") => parse_obj(&text),
            _ => Err(Error::InvalidInput(format!(
                "unsupported mesh extension for {}",
                path.display()
            ))),
        }
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("expected number, found `{tok}`"),
    })
}

fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for k in 1..poly.len().saturating_sub(1) {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
}

/// Parses `v` and `f` records; everything else is ignored. Polygons are fanned.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<f64> = toks
                    .take(3)
                    .map(|t| parse_f64(t, line))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        message: "vertex needs 3 coordinates".into(),
                    });
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("bad face index `{t}`"),
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        -1
                    };
                    if resolved < 0 {
                        return Err(Error::Parse {
                            line,
                            message: format!("face index `{t}` out of range"),
                        });
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        message: "face needs at least 3 vertices".into(),
                    });
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    let mesh = TriMesh::new(vertices, faces);
    mesh.validate()?;
    Ok(mesh)
}

pub fn parse_off(text: &str) -> Result<TriMesh> {
    // Tokens with their line numbers, comments stripped.
    let mut toks = text.lines().enumerate().flat_map(|(ln, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        body.split_whitespace().map(move |t| (ln + 1, t))
    });
    fn next<'a>(
        toks: &mut impl Iterator<Item = (usize, &'a str)>,
        what: &str,
    ) -> Result<(usize, &'a str)> {
        toks.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })
    }
    fn count<'a>(toks: &mut impl Iterator<Item = (usize, &'a str)>, what: &str) -> Result<usize> {
        let (line, t) = next(toks, what)?;
        t.parse().map_err(|_| Error::Parse {
            line,
            message: format!("expected {what}, found `{t}`"),
        })
    }
    let (line, magic) = next(&mut toks, "OFF header")?;
    if magic != "OFF" {
        return Err(Error::Parse {
            line,
            message: format!("expected `OFF`, found `{magic}`"),
        });
    }
    let nv = count(&mut toks, "vertex count")?;
    let nf = count(&mut toks, "face count")?;
    let _ne = count(&mut toks, "edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut c = [0.0; 3];
        for v in c.iter_mut() {
            let (line, t) = next(&mut toks, "coordinate")?;
            *v = parse_f64(t, line)?;
        }
        vertices.push(Vec3::new(c[0], c[1], c[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let k = count(&mut toks, "polygon size")?;
        let poly: Vec<usize> = (0..k).map(|_| count(&mut toks, "vertex index")).collect::<Result<_>>()?;
        fan(&poly, &mut faces);
    }
    let mesh = TriMesh::new(vertices, faces);
    mesh.validate()?;
    Ok(mesh)
}

//! Binary occupancy grids: voxelization, editing, boolean combination and the
//! text `.vox` format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::trimesh::TriMesh;

/// Maps voxel-index units to world space: `world = origin + edge * p`.
/// Voxel `(x, y, z)` spans `[x, x+1] × [y, y+1] × [z, z+1]` in index units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: [f64; 3],
    pub edge: f64,
}

impl Frame {
    /// The unit cube split into `r` voxels per axis.
    pub fn unit(resolution: usize) -> Self {
        Frame {
            origin: [0.0; 3],
            edge: 1.0 / resolution as f64,
        }
    }

    pub fn identity() -> Self {
        Frame {
            origin: [0.0; 3],
            edge: 1.0,
        }
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        Vec3::from(self.origin) + p * self.edge
    }

    pub fn to_index(&self, w: &Vec3) -> Vec3 {
        (w - Vec3::from(self.origin)) / self.edge
    }

    fn validate(&self) -> Result<()> {
        if !(self.edge > 0.0) || !self.edge.is_finite() {
            return Err(Error::InvalidInput(format!(
                "voxel edge length must be positive, got {}",
                self.edge
            )));
        }
        if !self.origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite frame origin".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCoord {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl GridCoord {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        GridCoord { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    Union,
    Difference,
    Intersection,
}

/// Whether voxelization keeps the whole solid or only its boundary layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fill {
    #[default]
    Solid,
    /// Occupied voxels with at least one empty (or out-of-grid) face neighbor.
    Shell,
}

/// `r³` binary occupancy, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    occupancy: Vec<bool>,
    frame: Frame,
}

impl VoxelGrid {
    pub fn empty(resolution: usize, frame: Frame) -> Result<Self> {
        Self::from_occupancy(resolution, vec![false; resolution.pow(3)], frame)
    }

    pub fn from_occupancy(resolution: usize, occupancy: Vec<bool>, frame: Frame) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidInput("resolution must be positive".into()));
        }
        frame.validate()?;
        let expected = resolution.pow(3);
        if occupancy.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                found: occupancy.len(),
            });
        }
        Ok(VoxelGrid {
            resolution,
            occupancy,
            frame,
        })
    }

    pub fn from_fn(
        resolution: usize,
        frame: Frame,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let r = resolution;
        let occ = (0..r * r * r)
            .map(|i| f(i % r, (i / r) % r, i / (r * r)))
            .collect();
        Self::from_occupancy(r, occ, frame)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    #[inline]
    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution * (y + self.resolution * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        let r = self.resolution;
        x < r && y < r && z < r && self.occupancy[self.linear_index(x, y, z)]
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.occupancy.iter().any(|&b| b)
    }

    /// Occupied voxel coordinates in linear (x-fastest) order.
    pub fn occupied(&self) -> impl Iterator<Item = GridCoord> + '_ {
        let r = self.resolution;
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| GridCoord::new(i % r, (i / r) % r, i / (r * r)))
    }

    /// World-space center of voxel `(x, y, z)`.
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.frame
            .to_world(&Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5))
    }

    fn check(&self, c: GridCoord) -> Result<()> {
        let r = self.resolution;
        if c.x >= r || c.y >= r || c.z >= r {
            return Err(Error::OutOfRange {
                x: c.x,
                y: c.y,
                z: c.z,
                resolution: r,
            });
        }
        Ok(())
    }

    /// Sets every voxel in the inclusive box `[lo, hi]` to `value`.
    pub fn edit_region(&self, lo: GridCoord, hi: GridCoord, value: bool) -> Result<VoxelGrid> {
        self.check(lo)?;
        self.check(hi)?;
        if lo.x > hi.x || lo.y > hi.y || lo.z > hi.z {
            return Err(Error::InvalidInput(format!(
                "edit box lower corner {lo:?} exceeds upper corner {hi:?}"
            )));
        }
        let mut out = self.clone();
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    let i = out.linear_index(x, y, z);
                    out.occupancy[i] = value;
                }
            }
        }
        Ok(out)
    }

    pub fn combine(&self, other: &VoxelGrid, op: BoolOp) -> Result<VoxelGrid> {
        if self.resolution != other.resolution {
            return Err(Error::GridMismatch(format!(
                "resolution {} vs {}",
                self.resolution, other.resolution
            )));
        }
        if self.frame != other.frame {
            return Err(Error::GridMismatch("frames differ".into()));
        }
        let occupancy = self
            .occupancy
            .iter()
            .zip(&other.occupancy)
            .map(|(&a, &b)| match op {
                BoolOp::Union => a || b,
                BoolOp::Difference => a && !b,
                BoolOp::Intersection => a && b,
            })
            .collect();
        Ok(VoxelGrid {
            resolution: self.resolution,
            occupancy,
            frame: self.frame,
        })
    }

    /// Keeps only occupied voxels touching empty space across a face.
    pub fn shell(&self) -> VoxelGrid {
        let r = self.resolution as isize;
        let occupied = |x: isize, y: isize, z: isize| {
            x >= 0 && y >= 0 && z >= 0 && x < r && y < r && z < r && {
                self.get(x as usize, y as usize, z as usize)
            }
        };
        let mut out = self.clone();
        for c in self.occupied() {
            let (x, y, z) = (c.x as isize, c.y as isize, c.z as isize);
            let interior = occupied(x - 1, y, z)
                && occupied(x + 1, y, z)
                && occupied(x, y - 1, z)
                && occupied(x, y + 1, z)
                && occupied(x, y, z - 1)
                && occupied(x, y, z + 1);
            if interior {
                let i = out.linear_index(c.x, c.y, c.z);
                out.occupancy[i] = false;
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let r = self.resolution;
        let f = &self.frame;
        let mut s = String::with_capacity(2 * r * r * r + 64);
        let _ = writeln!(s, "voxelgrid {r}");
        let _ = writeln!(
            s,
            "frame {} {} {} {}",
            f.origin[0], f.origin[1], f.origin[2], f.edge
        );
        for row in self.occupancy.chunks(r) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<VoxelGrid> {
        let mut lines = text.lines().enumerate();
        let header = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("missing `{key}` header"),
                })
                .and_then(|(line, l)| {
                    let mut toks = l.split_whitespace();
                    if toks.next() != Some(key) {
                        return Err(Error::Parse {
                            line,
                            message: format!("expected `{key}` header"),
                        });
                    }
                    Ok((line, toks.map(str::to_owned).collect::<Vec<_>>()))
                })
        };
        let (line, args) = header(&mut lines, "voxelgrid")?;
        let resolution: usize = match args.as_slice() {
            [r] => r.parse().ok().filter(|&r: &usize| r > 0),
            _ => None,
        }
        .ok_or_else(|| Error::Parse {
            line,
            message: "expected `voxelgrid <r>` with r > 0".into(),
        })?;
        let (line, args) = header(&mut lines, "frame")?;
        if args.len() != 4 {
            return Err(Error::Parse {
                line,
                message: "expected `frame <ox> <oy> <oz> <edge>`".into(),
            });
        }
        let nums: Vec<f64> = args
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad frame value `{t}`"),
                })
            })
            .collect::<Result<_>>()?;
        let frame = Frame {
            origin: [nums[0], nums[1], nums[2]],
            edge: nums[3],
        };

        let expected = resolution.pow(3);
        let mut occupancy = Vec::with_capacity(expected);
        for (i, l) in lines {
            for tok in l.split_whitespace() {
                occupancy.push(match tok {
                    "0" => false,
                    "1" => true,
                    _ => {
                        return Err(Error::Parse {
                            line: i + 1,
                            message: format!("occupancy token must be 0 or 1, found `{tok}`"),
                        })
                    }
                });
            }
        }
        if occupancy.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                found: occupancy.len(),
            });
        }
        VoxelGrid::from_occupancy(resolution, occupancy, frame)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<VoxelGrid> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Normalizes `surface` into the unit cube and marks every voxel whose center
/// has generalized winding number ≥ 0.5.
pub fn voxelize_mesh(surface: &TriMesh, resolution: usize) -> Result<VoxelGrid> {
    voxelize_mesh_with(surface, resolution, Fill::Solid)
}

pub fn voxelize_mesh_with(surface: &TriMesh, resolution: usize, fill: Fill) -> Result<VoxelGrid> {
    if resolution < 2 {
        return Err(Error::InvalidInput(format!(
            "resolution must be at least 2, got {resolution}"
        )));
    }
    let normalization = surface.unit_cube_normalization()?;
    let normalized = surface.transformed(&normalization);
    let frame = Frame::unit(resolution);
    let r = resolution;
    let occupancy: Vec<bool> = (0..r * r * r)
        .into_par_iter()
        .map(|i| {
            let c = frame.to_world(&Vec3::new(
                (i % r) as f64 + 0.5,
                ((i / r) % r) as f64 + 0.5,
                (i / (r * r)) as f64 + 0.5,
            ));
            normalized.winding_number(&c) >= 0.5
        })
        .collect();
    let grid = VoxelGrid::from_occupancy(r, occupancy, frame)?;
    Ok(match fill {
        Fill::Solid => grid,
        Fill::Shell => grid.shell(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use proptest::prelude::*;

    fn full(r: usize) -> VoxelGrid {
        VoxelGrid::from_occupancy(r, vec![true; r * r * r], Frame::unit(r)).unwrap()
    }

    #[test]
    fn sphere_r4_center_and_corners() {
        let grid = voxelize_mesh(&shapes::icosphere(4), 4).unwrap();
        for z in 1..3 {
            for y in 1..3 {
                for x in 1..3 {
                    assert!(grid.get(x, y, z));
                }
            }
        }
        for &c in &[0, 3] {
            for &b in &[0, 3] {
                for &a in &[0, 3] {
                    assert!(!grid.get(a, b, c));
                }
            }
        }
    }

    #[test]
    fn sphere_matches_analytic_membership() {
        // Brute-force oracle: the normalized icosphere's radius is the inverse of
        // its longest extent; compare against the exact ball test of each center.
        let sphere = shapes::icosphere(4);
        let t = sphere.unit_cube_normalization().unwrap();
        let grid = voxelize_mesh(&sphere, 8).unwrap();
        let center = Vec3::repeat(0.5);
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    let d = (grid.voxel_center(x, y, z) - center).norm();
                    // centers close to the faceted surface are ambiguous
                    if (d - t.scale).abs() > 0.01 {
                        assert_eq!(grid.get(x, y, z), d < t.scale, "voxel {x} {y} {z}");
                    }
                }
            }
        }
    }

    #[test]
    fn full_box_r2() {
        let m = shapes::axis_box(Vec3::zeros(), Vec3::repeat(1.0));
        assert_eq!(voxelize_mesh(&m, 2).unwrap().count(), 8);
    }

    #[test]
    fn torus_ring_has_empty_center() {
        let grid = voxelize_mesh(&shapes::torus(0.35, 0.1, 96, 32), 16).unwrap();
        for z in 0..16 {
            assert!(!grid.get(7, 7, z) && !grid.get(8, 8, z));
        }
        // analytic torus membership, scaled by the normalization
        let m = shapes::torus(0.35, 0.1, 96, 32);
        let t = m.unit_cube_normalization().unwrap();
        let (big, small) = (0.35 * t.scale, 0.1 * t.scale);
        let mut agree = 0;
        for c in (0..16usize.pow(3)).map(|i| (i % 16, (i / 16) % 16, i / 256)) {
            let p = grid.voxel_center(c.0, c.1, c.2) - Vec3::repeat(0.5);
            let q = ((p.x * p.x + p.y * p.y).sqrt() - big).hypot(p.z);
            if grid.get(c.0, c.1, c.2) == (q < small) {
                agree += 1;
            }
        }
        assert!(agree >= 4096 - 8, "agreement {agree}");
    }

    #[test]
    fn voxelize_rejects_bad_input() {
        let m = shapes::icosphere(0);
        assert!(voxelize_mesh(&m, 1).is_err());
        assert!(voxelize_mesh(&TriMesh::default(), 4).is_err());
        let mut bad = m.clone();
        bad.vertices[3].y = f64::INFINITY;
        assert!(matches!(voxelize_mesh(&bad, 4), Err(Error::NonFinite(3))));
    }

    #[test]
    fn voxelize_is_deterministic() {
        let m = shapes::torus(0.35, 0.1, 48, 16);
        assert_eq!(voxelize_mesh(&m, 12).unwrap(), voxelize_mesh(&m, 12).unwrap());
    }

    #[test]
    fn shell_of_solid_cube() {
        let g = full(4).shell();
        assert_eq!(g.count(), 64 - 8);
    }

    #[test]
    fn edit_examples() {
        let cleared = full(2)
            .edit_region(GridCoord::new(0, 0, 0), GridCoord::new(1, 1, 0), false)
            .unwrap();
        assert_eq!(cleared.count(), 4);
        let set = VoxelGrid::empty(5, Frame::unit(5))
            .unwrap()
            .edit_region(GridCoord::new(2, 3, 4), GridCoord::new(2, 3, 4), true)
            .unwrap();
        assert_eq!(set.count(), 1);
        assert!(set.get(2, 3, 4));
    }

    #[test]
    fn edit_torus_top_half() {
        let torus = voxelize_mesh(&shapes::torus(0.35, 0.1, 48, 16), 16).unwrap();
        let edited = torus
            .edit_region(GridCoord::new(0, 0, 8), GridCoord::new(15, 15, 15), false)
            .unwrap();
        let mut recount = 0;
        for z in 0..8 {
            for y in 0..16 {
                for x in 0..16 {
                    recount += torus.occupancy[x + 16 * (y + 16 * z)] as usize;
                }
            }
        }
        assert_eq!(edited.count(), recount);
    }

    #[test]
    fn edit_errors() {
        let g = full(3);
        assert!(matches!(
            g.edit_region(GridCoord::new(0, 0, 0), GridCoord::new(3, 0, 0), true),
            Err(Error::OutOfRange { .. })
        ));
        assert!(g
            .edit_region(GridCoord::new(2, 0, 0), GridCoord::new(1, 0, 0), true)
            .is_err());
    }

    #[test]
    fn combine_examples() {
        let r = 8;
        let frame = Frame::unit(r);
        let seat = VoxelGrid::from_fn(r, frame, |x, y, z| z == 3 && x < 6 && y < 6).unwrap();
        let back = VoxelGrid::from_fn(r, frame, |x, y, z| z >= 4 && x < 6 && y == 5).unwrap();
        let empty = VoxelGrid::empty(r, frame).unwrap();
        assert_eq!(seat.combine(&empty, BoolOp::Union).unwrap(), seat);
        assert!(seat.combine(&seat, BoolOp::Difference).unwrap().is_empty());
        assert_eq!(seat.combine(&back, BoolOp::Intersection).unwrap().count(), 0);
        assert_eq!(
            seat.combine(&back, BoolOp::Union).unwrap().count(),
            seat.count() + back.count()
        );
        let other = VoxelGrid::empty(4, Frame::unit(4)).unwrap();
        assert!(matches!(
            seat.combine(&other, BoolOp::Union),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn parse_errors() {
        let mut text = String::from("voxelgrid 4\nframe 0 0 0 0.25\n");
        text.push_str(&"0 ".repeat(63));
        assert!(matches!(
            VoxelGrid::parse(&text),
            Err(Error::PayloadLength {
                expected: 64,
                found: 63
            })
        ));
        let bad = "voxelgrid 1\nframe 0 0 0 1\n2\n";
        assert!(matches!(VoxelGrid::parse(bad), Err(Error::Parse { line: 3, .. })));
        assert!(VoxelGrid::parse("voxelgrid x\nframe 0 0 0 1\n0\n").is_err());
        assert!(VoxelGrid::parse("voxelgrid 1\nframe 0 0 0 -1\n0\n").is_err());
        assert!(VoxelGrid::parse("grid 1\n").is_err());
    }

    #[test]
    fn random_8_cube_file_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let occ = (0..512).map(|_| rng.random_bool(0.5)).collect();
        let g = VoxelGrid::from_occupancy(8, occ, Frame::unit(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.vox");
        g.write(&path).unwrap();
        assert_eq!(VoxelGrid::read(&path).unwrap(), g);
    }

    proptest! {
        #[test]
        fn text_round_trip(
            r in 1usize..6,
            seed in any::<u64>(),
            ox in -10.0f64..10.0,
            edge in 1e-3f64..10.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let occ = (0..r * r * r).map(|_| rng.random_bool(0.3)).collect();
            let frame = Frame { origin: [ox, -ox / 3.0, 0.1], edge };
            let g = VoxelGrid::from_occupancy(r, occ, frame).unwrap();
            prop_assert_eq!(VoxelGrid::parse(&g.to_text()).unwrap(), g);
        }

        #[test]
        fn union_plus_intersection_counts(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let r = 5;
            let a = VoxelGrid::from_fn(r, Frame::unit(r), |_, _, _| rng.random_bool(0.4)).unwrap();
            let b = VoxelGrid::from_fn(r, Frame::unit(r), |x, y, z| (x * 7 + y * 3 + z + seed as usize) % 3 == 0).unwrap();
            let u = a.combine(&b, BoolOp::Union).unwrap().count();
            let i = a.combine(&b, BoolOp::Intersection).unwrap().count();
            prop_assert_eq!(u + i, a.count() + b.count());
        }
    }
}

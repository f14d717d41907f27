//! Closest-point targets for the deformation: the predictor interface a learned
//! model would implement, the exact BVH-backed oracle, and generation of
//! (query, closest point) training pairs along vertex-to-surface segments.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bvh::TriangleBvh;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::tet::TetMesh;
use crate::trimesh::TriMesh;
use crate::voxel::VoxelGrid;

/// Maps a world-space query to a point on the (possibly implicit) target
/// surface, conditioned on the voxel grid the mesh came from.
pub trait ClosestPointPredictor: Send + Sync {
    fn predict(&self, grid: &VoxelGrid, x: &Vec3) -> Vec3;
}

/// Exact closest point on a reference triangle surface. Ignores the grid.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    bvh: TriangleBvh,
}

impl ExactOracle {
    pub fn new(surface: &TriMesh) -> Result<Self> {
        Ok(ExactOracle {
            bvh: TriangleBvh::build(surface)?,
        })
    }

    pub fn from_bvh(bvh: TriangleBvh) -> Self {
        ExactOracle { bvh }
    }

    pub fn bvh(&self) -> &TriangleBvh {
        &self.bvh
    }
}

impl ClosestPointPredictor for ExactOracle {
    fn predict(&self, _grid: &VoxelGrid, x: &Vec3) -> Vec3 {
        self.bvh.closest_point(x).point
    }
}

/// A query point and its closest point on the target surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpSample {
    pub query: Vec3,
    pub target: Vec3,
}

/// Exact closest-point query.
pub fn closest_point(bvh: &TriangleBvh, x: &Vec3) -> CpSample {
    CpSample {
        query: *x,
        target: bvh.closest_point(x).point,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub count: usize,
    /// Isotropic jitter standard deviation, in voxel edges.
    pub jitter_sigma: f64,
    pub seed: u64,
    /// Pins the segment parameter instead of drawing it from `U[0, 1]`.
    pub fixed_alpha: Option<f64>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            count: 75_000,
            jitter_sigma: 0.5,
            seed: 0,
            fixed_alpha: None,
        }
    }
}

const SAMPLE_CHUNK: usize = 4096;

/// Draws `count` queries near the segments joining each surface vertex `v` of
/// `mesh` to its closest point `p` on the `bvh` surface:
/// `x = (1 - α) p + α v + jitter`, labelled with the exact `CP(x)`.
///
/// All points are in world coordinates. Chunks of the output use independent
/// ChaCha streams, so the result does not depend on the thread count.
pub fn gen_training_samples(
    mesh: &TetMesh,
    bvh: &TriangleBvh,
    config: &SampleConfig,
) -> Result<Vec<CpSample>> {
    if config.count == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    if !(config.jitter_sigma >= 0.0) || !config.jitter_sigma.is_finite() {
        return Err(Error::InvalidInput("jitter sigma must be finite and ≥ 0".into()));
    }
    if let Some(a) = config.fixed_alpha {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidInput("fixed alpha must lie in [0, 1]".into()));
        }
    }
    let frame = mesh.frame();
    let anchors: Vec<Vec3> = mesh
        .surface_vertex_flags()
        .iter()
        .zip(mesh.vertices())
        .filter(|(&s, _)| s)
        .map(|(_, v)| frame.to_world(v))
        .collect();
    if anchors.is_empty() {
        return Err(Error::Empty("tet mesh surface"));
    }
    let projected: Vec<Vec3> = anchors
        .par_iter()
        .map(|v| bvh.closest_point(v).point)
        .collect();
    let sigma = config.jitter_sigma * frame.edge;

    let chunks = config.count.div_ceil(SAMPLE_CHUNK);
    let samples: Vec<Vec<CpSample>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(chunk as u64);
            let n = SAMPLE_CHUNK.min(config.count - chunk * SAMPLE_CHUNK);
            (0..n)
                .map(|_| {
                    let k = rng.random_range(0..anchors.len());
                    let alpha = match config.fixed_alpha {
                        Some(a) => a,
                        None => rng.random::<f64>(),
                    };
                    let jitter = Vec3::new(
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    ) * sigma;
                    let x = projected[k] * (1.0 - alpha) + anchors[k] * alpha + jitter;
                    closest_point(bvh, &x)
                })
                .collect()
        })
        .collect();
    Ok(samples.into_iter().flatten().collect())
}

pub const SAMPLE_MAGIC: &[u8; 8] = b"NVMGCPS1";

/// Magic header followed by six little-endian f64 per sample.
pub fn encode_samples(samples: &[CpSample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + samples.len() * 48);
    out.extend_from_slice(SAMPLE_MAGIC);
    for s in samples {
        for v in s.query.iter().chain(s.target.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_samples(bytes: &[u8]) -> Result<Vec<CpSample>> {
    if bytes.len() < 8 || &bytes[..8] != SAMPLE_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: "missing NVMGCPS1 magic".into(),
        });
    }
    let body = &bytes[8..];
    if body.len() % 48 != 0 {
        return Err(Error::PayloadLength {
            expected: body.len() / 48 * 48 + 48,
            found: body.len(),
        });
    }
    Ok(body
        .chunks_exact(48)
        .map(|rec| {
            let f = |k: usize| f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().unwrap());
            CpSample {
                query: Vec3::new(f(0), f(1), f(2)),
                target: Vec3::new(f(3), f(4), f(5)),
            }
        })
        .collect())
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[CpSample]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_samples(samples)).map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<CpSample>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_samples(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use crate::voxel::voxelize_mesh;
    use proptest::prelude::*;

    fn sphere_setup(r: usize) -> (TetMesh, TriangleBvh) {
        let sphere = shapes::icosphere(3);
        let grid = voxelize_mesh(&sphere, r).unwrap();
        let t = sphere.unit_cube_normalization().unwrap();
        let bvh = TriangleBvh::build(&sphere.transformed(&t)).unwrap();
        (TetMesh::from_grid(&grid).unwrap(), bvh)
    }

    #[test]
    fn alpha_one_gives_vertex_queries() {
        let (mesh, bvh) = sphere_setup(6);
        let cfg = SampleConfig {
            count: 200,
            jitter_sigma: 0.0,
            seed: 1,
            fixed_alpha: Some(1.0),
        };
        let world: Vec<Vec3> = mesh.vertices_world();
        for s in gen_training_samples(&mesh, &bvh, &cfg).unwrap() {
            assert!(world.iter().any(|v| (v - s.query).norm() == 0.0));
            assert_eq!(s.target, bvh.closest_point(&s.query).point);
        }
    }

    #[test]
    fn alpha_zero_gives_surface_fixed_points() {
        let (mesh, bvh) = sphere_setup(6);
        let cfg = SampleConfig {
            count: 200,
            jitter_sigma: 0.0,
            seed: 2,
            fixed_alpha: Some(0.0),
        };
        for s in gen_training_samples(&mesh, &bvh, &cfg).unwrap() {
            assert!((s.query - s.target).norm() < 1e-12);
        }
    }

    #[test]
    fn exact_count_and_determinism() {
        let (mesh, bvh) = sphere_setup(6);
        let cfg = SampleConfig {
            count: 10_001,
            seed: 9,
            ..SampleConfig::default()
        };
        let a = gen_training_samples(&mesh, &bvh, &cfg).unwrap();
        let b = gen_training_samples(&mesh, &bvh, &cfg).unwrap();
        assert_eq!(a.len(), 10_001);
        assert_eq!(encode_samples(&a), encode_samples(&b));
        let c = gen_training_samples(&mesh, &bvh, &SampleConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs() {
        let (mesh, bvh) = sphere_setup(4);
        let base = SampleConfig::default();
        assert!(gen_training_samples(&mesh, &bvh, &SampleConfig { count: 0, ..base }).is_err());
        assert!(gen_training_samples(
            &mesh,
            &bvh,
            &SampleConfig {
                fixed_alpha: Some(1.5),
                ..base
            }
        )
        .is_err());
    }

    #[test]
    fn oracle_ignores_grid() {
        let (_, bvh) = sphere_setup(4);
        let oracle = ExactOracle::from_bvh(bvh.clone());
        let g = crate::voxel::VoxelGrid::empty(2, crate::voxel::Frame::unit(2)).unwrap();
        let x = Vec3::new(0.9, 0.1, 0.4);
        assert_eq!(oracle.predict(&g, &x), bvh.closest_point(&x).point);
    }

    #[test]
    fn decode_rejects_bad_payload() {
        assert!(decode_samples(b"NOTMAGIC").is_err());
        let mut bytes = encode_samples(&[CpSample {
            query: Vec3::zeros(),
            target: Vec3::x(),
        }]);
        bytes.pop();
        assert!(matches!(decode_samples(&bytes), Err(Error::PayloadLength { .. })));
    }

    #[test]
    fn sample_file_round_trip() {
        let (mesh, bvh) = sphere_setup(4);
        let cfg = SampleConfig { count: 100, ..SampleConfig::default() };
        let s = gen_training_samples(&mesh, &bvh, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_samples(&p, &s).unwrap();
        assert_eq!(read_samples(&p).unwrap(), s);
    }

    proptest! {
        #[test]
        fn encoding_round_trips(vals in prop::collection::vec(prop::array::uniform6(-1e6f64..1e6), 0..20)) {
            let samples: Vec<CpSample> = vals.iter().map(|v| CpSample {
                query: Vec3::new(v[0], v[1], v[2]),
                target: Vec3::new(v[3], v[4], v[5]),
            }).collect();
            prop_assert_eq!(decode_samples(&encode_samples(&samples)).unwrap(), samples);
        }
    }
}

//! Regularized projection of a voxel tet mesh onto a target surface.
//!
//! The objective, in voxel-index units, is
//!
//! ```text
//! Σ_s ‖v_s − h(v_s) + k n_s‖ + λa·edge + λb·laplacian + λc·normal + Σ_t l(det M_t)
//! ```
//!
//! minimized with Adam. Closest points `h` are re-queried every step and any
//! step that would invert a tet is halved until it does not.

pub mod terms;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closest_point::ClosestPointPredictor;
use crate::error::{Error, Result};
use crate::geom::{homogeneous_det, Vec3};
use crate::tet::TetMesh;
use crate::voxel::VoxelGrid;

pub use terms::{barrier_l, Topology};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformConfig {
    pub steps: usize,
    /// Edge-length weight.
    pub lambda_a: f64,
    /// Laplacian weight.
    pub lambda_b: f64,
    /// Normal-consistency weight.
    pub lambda_c: f64,
    pub laplacian_alpha: f64,
    pub laplacian_beta: f64,
    /// Determinant below which the barrier switches on.
    pub v0: f64,
    /// Initial noise coefficient, in voxel edges.
    pub k0: f64,
    pub noise_decay: f64,
    pub noise_period: usize,
    /// Adam learning rate, in voxel edges per step.
    pub step_size: f64,
    pub seed: u64,
    /// Barrier term plus flip rejection. Off only for ablations.
    pub orientation: bool,
    pub max_halvings: usize,
}

impl Default for DeformConfig {
    fn default() -> Self {
        DeformConfig {
            steps: 80,
            lambda_a: 0.01,
            lambda_b: 0.5,
            lambda_c: 0.05,
            laplacian_alpha: 1.0,
            laplacian_beta: 0.5,
            v0: 0.01,
            k0: 0.1,
            noise_decay: 0.5,
            noise_period: 10,
            step_size: 0.05,
            seed: 0,
            orientation: true,
            max_halvings: 20,
        }
    }
}

impl DeformConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let finite = [
            self.lambda_a,
            self.lambda_b,
            self.lambda_c,
            self.laplacian_alpha,
            self.laplacian_beta,
            self.v0,
            self.k0,
            self.noise_decay,
            self.step_size,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all numeric fields must be finite");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.v0 <= 0.0 {
            return bad("v0 must be positive");
        }
        if self.k0 < 0.0 {
            return bad("k0 must be non-negative");
        }
        if !(0.0..1.0).contains(&self.noise_decay) {
            return bad("noise_decay must lie in [0, 1)");
        }
        if self.noise_period == 0 {
            return bad("noise_period must be at least 1");
        }
        if [self.lambda_a, self.lambda_b, self.lambda_c, self.laplacian_alpha, self.laplacian_beta]
            .iter()
            .any(|&l| l < 0.0)
        {
            return bad("weights must be non-negative");
        }
        if self.step_size <= 0.0 {
            return bad("step_size must be positive");
        }
        Ok(())
    }

    /// Noise coefficient used at 0-based `step`.
    pub fn noise_at(&self, step: usize) -> f64 {
        self.k0 * self.noise_decay.powi((step / self.noise_period) as i32)
    }

    /// Projection only: no regularizers, no noise, no barrier.
    pub fn projection_only(&self) -> DeformConfig {
        DeformConfig {
            lambda_a: 0.0,
            lambda_b: 0.0,
            lambda_c: 0.0,
            k0: 0.0,
            orientation: false,
            ..self.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<DeformConfig> {
        let c: DeformConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<DeformConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    pub proj: f64,
    pub edge: f64,
    pub laplacian: f64,
    pub normal: f64,
    pub orientation: f64,
}

/// Evaluates the objective at `pos` for fixed targets and noise, writing the
/// full gradient into `grad` (which is overwritten).
pub fn evaluate(
    pos: &[Vec3],
    topo: &Topology,
    config: &DeformConfig,
    targets: &[Vec3],
    noise: &[Vec3],
    k: f64,
    grad: &mut [Vec3],
) -> (ObjectiveBreakdown, usize) {
    grad.iter_mut().for_each(|g| *g = Vec3::zeros());
    let proj = terms::projection_term(pos, topo, targets, noise, k, 1.0, grad);
    let edge = terms::edge_term(pos, topo, config.lambda_a, grad);
    let laplacian = terms::laplacian_term(
        pos,
        topo,
        config.laplacian_alpha,
        config.laplacian_beta,
        config.lambda_b,
        grad,
    );
    let (normal, degenerate) = terms::normal_term(pos, topo, config.lambda_c, grad);
    let orientation = if config.orientation {
        terms::orientation_term(pos, topo, config.v0, 1.0, grad)
    } else {
        0.0
    };
    let total = proj
        + config.lambda_a * edge
        + config.lambda_b * laplacian
        + config.lambda_c * normal
        + orientation;
    (
        ObjectiveBreakdown {
            total,
            proj,
            edge,
            laplacian,
            normal,
            orientation,
        },
        degenerate,
    )
}

fn term_on_mesh(
    mesh: &TetMesh,
    f: impl FnOnce(&[Vec3], &Topology, &mut [Vec3]) -> f64,
) -> (f64, Vec<Vec3>) {
    let topo = Topology::new(mesh);
    let mut grad = vec![Vec3::zeros(); mesh.vertices().len()];
    let v = f(mesh.vertices(), &topo, &mut grad);
    (v, grad)
}

pub fn r_edge(mesh: &TetMesh) -> (f64, Vec<Vec3>) {
    term_on_mesh(mesh, |p, t, g| terms::edge_term(p, t, 1.0, g))
}

pub fn r_laplacian(mesh: &TetMesh, alpha: f64, beta: f64) -> (f64, Vec<Vec3>) {
    term_on_mesh(mesh, |p, t, g| terms::laplacian_term(p, t, alpha, beta, 1.0, g))
}

pub fn r_normal(mesh: &TetMesh) -> (f64, Vec<Vec3>) {
    term_on_mesh(mesh, |p, t, g| terms::normal_term(p, t, 1.0, g).0)
}

pub fn r_orientation(mesh: &TetMesh, v0: f64) -> (f64, Vec<Vec3>) {
    term_on_mesh(mesh, |p, t, g| terms::orientation_term(p, t, v0, 1.0, g))
}

/// Closest-point targets for the surface vertices, in index units.
pub fn query_targets(
    pos: &[Vec3],
    topo: &Topology,
    mesh: &TetMesh,
    grid: &VoxelGrid,
    predictor: &dyn ClosestPointPredictor,
) -> Vec<Vec3> {
    let frame = mesh.frame();
    topo.surface_vertices
        .par_iter()
        .map(|&v| frame.to_index(&predictor.predict(grid, &frame.to_world(&pos[v]))))
        .collect()
}

/// One standard-normal 3-vector per surface vertex.
pub fn draw_noise(count: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    (0..count)
        .map(|_| {
            Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            )
        })
        .collect()
}

/// Robust projection value and gradient with freshly drawn noise.
pub fn robust_proj(
    mesh: &TetMesh,
    grid: &VoxelGrid,
    predictor: &dyn ClosestPointPredictor,
    k: f64,
    rng: &mut impl Rng,
) -> (f64, Vec<Vec3>) {
    let topo = Topology::new(mesh);
    let targets = query_targets(mesh.vertices(), &topo, mesh, grid, predictor);
    let noise = draw_noise(targets.len(), rng);
    let mut grad = vec![Vec3::zeros(); mesh.vertices().len()];
    let v = terms::projection_term(mesh.vertices(), &topo, &targets, &noise, k, 1.0, &mut grad);
    (v, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub breakdown: ObjectiveBreakdown,
    pub k: f64,
    pub min_det: f64,
    /// Step-size halvings applied before the step was accepted.
    pub halvings: usize,
}

pub const TRACE_HEADER: &str = "step,total,proj,edge,laplacian,normal,orientation,k,min_det";

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let b = &r.breakdown;
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.step, b.total, b.proj, b.edge, b.laplacian, b.normal, b.orientation, r.k, r.min_det
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct DeformResult {
    pub mesh: TetMesh,
    /// One row per step, describing the iterate the step started from.
    pub trace: Vec<TraceRow>,
    /// Largest number of degenerate normal pairs seen in any step.
    pub degenerate_normal_pairs: usize,
}

fn min_det(pos: &[Vec3], tets: &[[usize; 4]]) -> (f64, usize) {
    tets.iter()
        .enumerate()
        .map(|(i, t)| (homogeneous_det(&pos[t[0]], &pos[t[1]], &pos[t[2]], &pos[t[3]]), i))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
}

/// Runs `config.steps` Adam iterations on all vertex positions.
pub fn optimize(
    mesh: &TetMesh,
    grid: &VoxelGrid,
    predictor: &dyn ClosestPointPredictor,
    config: &DeformConfig,
) -> Result<DeformResult> {
    config.validate()?;
    let topo = Topology::new(mesh);
    let n = mesh.vertices().len();
    let mut pos = mesh.vertices().to_vec();
    if config.orientation {
        let (d, tet) = min_det(&pos, &topo.tets);
        if d <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "tet {tet} is already inverted (det {d})"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut m = vec![Vec3::zeros(); n];
    let mut v = vec![Vec3::zeros(); n];
    let mut grad = vec![Vec3::zeros(); n];
    let mut trial = pos.clone();
    let mut trace = Vec::with_capacity(config.steps);
    let mut degenerate_max = 0;

    for step in 0..config.steps {
        let k = config.noise_at(step);
        let targets = query_targets(&pos, &topo, mesh, grid, predictor);
        let noise = draw_noise(targets.len(), &mut rng);
        let (breakdown, degenerate) =
            evaluate(&pos, &topo, config, &targets, &noise, k, &mut grad);
        degenerate_max = degenerate_max.max(degenerate);
        if let Some(vertex) = grad.iter().position(|g| !g.iter().all(|c| c.is_finite())) {
            return Err(Error::NanGradient { step, vertex });
        }
        let current_min = min_det(&pos, &topo.tets).0;

        let t = (step + 1) as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for i in 0..n {
            let g = grad[i];
            m[i] = m[i] * ADAM_BETA1 + g * (1.0 - ADAM_BETA1);
            v[i] = v[i] * ADAM_BETA2 + g.component_mul(&g) * (1.0 - ADAM_BETA2);
        }
        let delta: Vec<Vec3> = (0..n)
            .map(|i| {
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                -mh.zip_map(&vh, |a, b| a / (b.sqrt() + ADAM_EPS)) * config.step_size
            })
            .collect();

        let mut halvings = 0;
        loop {
            let scale = 0.5f64.powi(halvings as i32);
            for i in 0..n {
                trial[i] = pos[i] + delta[i] * scale;
            }
            if !config.orientation {
                break;
            }
            let (d, tet) = min_det(&trial, &topo.tets);
            if d > 0.0 {
                break;
            }
            if halvings == config.max_halvings {
                return Err(Error::BacktrackExhausted {
                    step,
                    tet,
                    halvings,
                });
            }
            halvings += 1;
        }
        std::mem::swap(&mut pos, &mut trial);
        trace.push(TraceRow {
            step,
            breakdown,
            k,
            min_det: current_min,
            halvings,
        });
    }

    let mut out = mesh.clone();
    out.vertices_mut().copy_from_slice(&pos);
    Ok(DeformResult {
        mesh: out,
        trace,
        degenerate_normal_pairs: degenerate_max,
    })
}

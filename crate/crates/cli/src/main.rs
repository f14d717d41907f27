use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use tetvox::closest_point::{gen_training_samples, write_samples, ExactOracle, SampleConfig};
use tetvox::deform::{optimize, trace_to_csv, DeformConfig};
use tetvox::diffusion::{
    encode_grid, sample_grid, Denoiser, GaussianPriorDenoiser, NoiseSchedule, ZeroDenoiser,
    DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS,
};
use tetvox::export::{read_medit, write_by_extension};
use tetvox::quality::{batch_report, format_table, quality_report};
use tetvox::tet::TetMesh;
use tetvox::trimesh::TriMesh;
use tetvox::voxel::{voxelize_mesh_with, BoolOp, Fill, GridCoord, VoxelGrid};
use tetvox::{bvh::TriangleBvh, Error};

#[derive(Parser)]
#[command(name = "tetvox", version, about = "Voxel grids to deformed tetrahedral meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize a closed OBJ/OFF surface into a .vox grid.
    Voxelize {
        input: PathBuf,
        #[arg(short, long)]
        resolution: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Keep only occupied voxels with an empty 6-neighbor.
        #[arg(long)]
        shell: bool,
    },
    /// Split every occupied voxel into six tetrahedra.
    Tetmesh {
        grid: PathBuf,
        /// .mesh, .vtk or .obj (surface only).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Deform the grid's tet mesh onto a reference surface.
    Deform(DeformArgs),
    /// Audit one or more MEDIT meshes.
    Quality {
        #[arg(required = true)]
        meshes: Vec<PathBuf>,
        /// JSON report; printed to stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print an aligned table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Set every voxel in an inclusive box.
    Edit {
        grid: PathBuf,
        /// Lower corner as x,y,z.
        #[arg(long, value_parser = parse_coord)]
        lo: GridCoord,
        /// Upper corner as x,y,z.
        #[arg(long, value_parser = parse_coord)]
        hi: GridCoord,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        value: u8,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Boolean combination of two grids of equal resolution.
    Combine {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum)]
        op: Op,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Draw a grid with the reverse diffusion chain.
    Sample {
        #[arg(short, long)]
        resolution: usize,
        #[arg(long, value_enum, default_value_t = DenoiserKind::Zero)]
        denoiser: DenoiserKind,
        /// Grid whose ±1 encoding is the prior mean for `template`.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        variance: f64,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write closest-point training pairs near the grid's surface.
    GenCpData {
        grid: PathBuf,
        #[arg(long)]
        surface: PathBuf,
        #[arg(short = 'n', long, default_value_t = 75_000)]
        count: usize,
        /// Jitter standard deviation in voxel edges.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        as_is: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct DeformArgs {
    grid: PathBuf,
    /// Reference surface for the exact closest-point oracle.
    #[arg(long)]
    oracle: PathBuf,
    /// Use the oracle surface's coordinates as they are instead of
    /// normalizing it into the unit cube like `voxelize` does.
    #[arg(long)]
    as_is: bool,
    /// JSON config; missing fields take defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    lambda_a: Option<f64>,
    #[arg(long)]
    lambda_b: Option<f64>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Union,
    Difference,
    Intersection,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum DenoiserKind {
    Zero,
    Template,
}

fn parse_coord(s: &str) -> Result<GridCoord, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got '{s}'"));
    }
    let v: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse().map_err(|_| format!("bad coordinate '{p}'")))
        .collect::<Result<_, _>>()?;
    Ok(GridCoord::new(v[0], v[1], v[2]))
}

fn write_text(path: &Path, text: &str) -> tetvox::Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_mesh_extension(path: &Path) -> tetvox::Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mesh" | "vtk" | "obj") => Ok(()),
        _ => Err(Error::InvalidInput(format!(
            "unknown mesh extension for {} (expected .mesh, .vtk or .obj)",
            path.display()
        ))),
    }
}

/// Fails early when an output's directory does not exist.
fn check_parent(path: &Path) -> tetvox::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Error::InvalidInput(
            format!("output directory {} does not exist", dir.display()),
        )),
        _ => Ok(()),
    }
}

fn reference_surface(path: &Path, as_is: bool) -> tetvox::Result<TriMesh> {
    let surface = TriMesh::read(path)?;
    if as_is {
        surface.validate()?;
        return Ok(surface);
    }
    let t = surface.unit_cube_normalization()?;
    Ok(surface.transformed(&t))
}

fn effective_config(args: &DeformArgs) -> tetvox::Result<DeformConfig> {
    let mut c = match &args.config {
        Some(p) => DeformConfig::read(p)?,
        None => DeformConfig::default(),
    };
    if let Some(v) = args.steps {
        c.steps = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.step_size {
        c.step_size = v;
    }
    if let Some(v) = args.lambda_a {
        c.lambda_a = v;
    }
    if let Some(v) = args.lambda_b {
        c.lambda_b = v;
    }
    if let Some(v) = args.lambda_c {
        c.lambda_c = v;
    }
    if let Some(v) = args.k0 {
        c.k0 = v;
    }
    if let Some(v) = args.v0 {
        c.v0 = v;
    }
    c.validate()?;
    Ok(c)
}

/// `dir/stem.config.json` next to `output`.
fn config_echo_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("deform");
    output.with_file_name(format!("{stem}.config.json"))
}

fn cmd_deform(args: &DeformArgs) -> tetvox::Result<serde_json::Value> {
    check_mesh_extension(&args.output)?;
    check_parent(&args.output)?;
    if let Some(t) = &args.trace {
        check_parent(t)?;
    }
    let config = effective_config(args)?;
    let grid = VoxelGrid::read(&args.grid)?;
    let mesh = TetMesh::from_grid(&grid)?;
    let oracle = ExactOracle::new(&reference_surface(&args.oracle, args.as_is)?)?;
    let out = optimize(&mesh, &grid, &oracle, &config)?;

    write_by_extension(&out.mesh, &args.output)?;
    if let Some(t) = &args.trace {
        write_text(t, &trace_to_csv(&out.trace))?;
    }
    let echo = config_echo_path(&args.output);
    write_text(&echo, &format!("{}\n", config.to_json()))?;
    let last = out.trace.last().map(|r| r.breakdown.total);
    Ok(json!({
        "vertices": out.mesh.vertices().len(),
        "tets": out.mesh.tets().len(),
        "steps": out.trace.len(),
        "min_det": out.mesh.min_det(),
        "last_logged_total": last,
        "config": echo,
    }))
}

fn run(command: Command) -> tetvox::Result<serde_json::Value> {
    match command {
        Command::Voxelize {
            input,
            resolution,
            output,
            shell,
        } => {
            let surface = TriMesh::read(&input)?;
            let fill = if shell { Fill::Shell } else { Fill::Solid };
            let grid = voxelize_mesh_with(&surface, resolution, fill)?;
            grid.write(&output)?;
            Ok(json!({ "resolution": resolution, "occupied": grid.count() }))
        }
        Command::Tetmesh { grid, output } => {
            check_mesh_extension(&output)?;
            let grid = VoxelGrid::read(&grid)?;
            let mesh = TetMesh::from_grid(&grid)?;
            write_by_extension(&mesh, &output)?;
            Ok(json!({
                "vertices": mesh.vertices().len(),
                "tets": mesh.tets().len(),
                "surface_triangles": mesh.surface_tris().len(),
            }))
        }
        Command::Deform(args) => cmd_deform(&args),
        Command::Quality {
            meshes,
            output,
            table,
        } => {
            let reports = meshes
                .iter()
                .map(|p| read_medit(p).map(|m| quality_report(&m)))
                .collect::<tetvox::Result<Vec<_>>>()?;
            let body = if table {
                let rows: Vec<(String, _)> = meshes
                    .iter()
                    .zip(&reports)
                    .map(|(p, r)| Ok((p.display().to_string(), batch_report(std::slice::from_ref(r))?)))
                    .collect::<tetvox::Result<_>>()?;
                let mut rows = rows;
                if reports.len() > 1 {
                    rows.push(("batch".into(), batch_report(&reports)?));
                }
                format_table(&rows)
            } else if reports.len() == 1 {
                format!("{}\n", serde_json::to_string_pretty(&reports[0])?)
            } else {
                let batch = batch_report(&reports)?;
                format!(
                    "{}\n",
                    serde_json::to_string_pretty(&json!({ "meshes": reports, "batch": batch }))?
                )
            };
            match output {
                Some(p) => {
                    write_text(&p, &body)?;
                    Ok(json!({ "meshes": reports.len(), "report": p }))
                }
                None => {
                    print!("{body}");
                    Ok(serde_json::Value::Null)
                }
            }
        }
        Command::Edit {
            grid,
            lo,
            hi,
            value,
            output,
        } => {
            let grid = VoxelGrid::read(&grid)?;
            let edited = grid.edit_region(lo, hi, value == 1)?;
            edited.write(&output)?;
            Ok(json!({ "occupied_before": grid.count(), "occupied": edited.count() }))
        }
        Command::Combine { a, b, op, output } => {
            let a = VoxelGrid::read(&a)?;
            let b = VoxelGrid::read(&b)?;
            let op = match op {
                Op::Union => BoolOp::Union,
                Op::Difference => BoolOp::Difference,
                Op::Intersection => BoolOp::Intersection,
            };
            let c = a.combine(&b, op)?;
            c.write(&output)?;
            Ok(json!({ "occupied": c.count() }))
        }
        Command::Sample {
            resolution,
            denoiser,
            template,
            variance,
            steps,
            threshold,
            seed,
            output,
        } => {
            let sched = NoiseSchedule::linear(steps, DEFAULT_BETA_START, DEFAULT_BETA_END)?;
            let model: Box<dyn Denoiser> = match (denoiser, template) {
                (DenoiserKind::Zero, None) => Box::new(ZeroDenoiser),
                (DenoiserKind::Template, Some(path)) => {
                    let t = VoxelGrid::read(&path)?;
                    if t.resolution() != resolution {
                        return Err(Error::GridMismatch(format!(
                            "template resolution {} differs from requested {resolution}",
                            t.resolution()
                        )));
                    }
                    Box::new(GaussianPriorDenoiser::new(encode_grid(&t), variance, sched.clone())?)
                }
                (DenoiserKind::Zero, Some(_)) => {
                    return Err(Error::InvalidInput("--template needs --denoiser template".into()))
                }
                (DenoiserKind::Template, None) => {
                    return Err(Error::InvalidInput("--denoiser template needs --template".into()))
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = sample_grid(model.as_ref(), &sched, resolution, &mut rng, threshold)?;
            grid.write(&output)?;
            Ok(json!({ "resolution": resolution, "occupied": grid.count() }))
        }
        Command::GenCpData {
            grid,
            surface,
            count,
            sigma,
            seed,
            as_is,
            output,
        } => {
            let grid = VoxelGrid::read(&grid)?;
            let mesh = TetMesh::from_grid(&grid)?;
            let bvh = TriangleBvh::build(&reference_surface(&surface, as_is)?)?;
            let config = SampleConfig {
                count,
                jitter_sigma: sigma,
                seed,
                fixed_alpha: None,
            };
            let samples = gen_training_samples(&mesh, &bvh, &config)?;
            write_samples(&output, &samples)?;
            Ok(json!({ "samples": samples.len() }))
        }
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.to_string());
        }
    };
    match run(cli.command) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}

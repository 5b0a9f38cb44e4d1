//! The `peelkit` command line.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::body::{apply_weak_perspective, load_lbsm, load_params};
use crate::fusion::{
    clamp_residual, compute_mask, decompose, foreground_file, fuse, load_foreground, AuxiliaryStack, ResidualStack,
};
use crate::geometry::{load_mesh, shapes, Bvh, Camera, CameraRecord, Projection, Vec3};
use crate::losses::{total_loss, LossInputs, LossWeights};
use crate::map::{Mask, Plane};
use crate::metrics::{chamfer_mean, chamfer_sum, normal_reprojection, p2s, MetricConventions, MetricReport};
use crate::peel::{
    render_normal_map, render_peel, render_prior_peel, save_depth_preview, PeelFile, PeelStack, DEFAULT_LAYERS,
    MAX_LAYERS,
};
use crate::pointcloud::{
    backproject, estimate_normals, filter_outliers, ColoredPointCloud, Orientation, DEFAULT_KNN,
    DEFAULT_OUTLIER_THRESHOLD,
};
use crate::synth::{build_scene, write_scene};

pub const THREADS_ENV: &str = "PEELKIT_THREADS";
pub const DEFAULT_RESOLUTION: usize = 512;

#[derive(Debug, Parser)]
#[command(name = "peelkit", version, about = "Depth peel maps, body priors, fusion and point-cloud tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ViewArgs {
    /// Square image resolution in pixels (>= 16).
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// `perspective[:FOV_DEG]`, `orthographic[:HALF_HEIGHT]` or a camera JSON
    /// file.
    #[arg(long, default_value = "perspective")]
    pub camera: String,
}

#[derive(Debug, Clone, Args)]
pub struct LayerArgs {
    #[arg(long, default_value_t = DEFAULT_LAYERS)]
    pub layers: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrientArg {
    LayerParity,
    CameraOnly,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render depth + RGB peel maps of a mesh.
    Render {
        mesh: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[command(flatten)]
        layers: LayerArgs,
        /// Skip the 16-bit depth preview PNGs.
        #[arg(long)]
        no_preview: bool,
    },
    /// Render prior peel maps of a body model; optionally write Γ masks.
    Prior {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Foreground mask (PNG or FG container).
        #[arg(long)]
        foreground: Option<PathBuf>,
        /// Where to write the Γ masks; requires --foreground.
        #[arg(long)]
        gamma: Option<PathBuf>,
        #[command(flatten)]
        view: ViewArgs,
        #[command(flatten)]
        layers: LayerArgs,
    },
    /// Split ground-truth peel maps into residual and auxiliary maps.
    Decompose {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        foreground: PathBuf,
        /// Receives rd.peel, conflict.peel, aux.peel, gamma.peel, fg.peel.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fuse prior, residual and auxiliary maps.
    Fuse {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        rd: PathBuf,
        #[arg(long)]
        conflict: Option<PathBuf>,
        #[arg(long)]
        aux: PathBuf,
        #[arg(long)]
        foreground: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Clamp normalized residuals to `LO,HI` first (e.g. `-1,0.5`).
        #[arg(long, allow_hyphen_values = true)]
        clamp: Option<String>,
    },
    /// Back-project depth peel maps to a colored point cloud (PLY).
    Backproject {
        #[arg(long)]
        depth: PathBuf,
        /// Color source; defaults to the depth container when it has RGB.
        #[arg(long)]
        rgb: Option<PathBuf>,
        #[arg(long)]
        foreground: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Also estimate oriented normals.
        #[arg(long)]
        normals: bool,
        #[arg(long, default_value_t = DEFAULT_KNN)]
        knn: usize,
        #[arg(long, value_enum, default_value_t = OrientArg::LayerParity)]
        orient: OrientArg,
    },
    /// Remove sparse outliers from a point cloud.
    Filter {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_KNN)]
        knn: usize,
        #[arg(long, default_value_t = DEFAULT_OUTLIER_THRESHOLD)]
        threshold: f64,
    },
    /// Surface metrics of a prediction against a mesh, and/or training losses.
    Eval(EvalArgs),
    /// Write a deterministic test scene.
    Synth {
        scene: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted point cloud (PLY) or depth peel maps (PEEL).
    #[arg(long, requires = "gt_mesh")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt_mesh: Option<PathBuf>,
    /// Surface samples drawn from the ground-truth mesh for Chamfer.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_KNN)]
    pub knn: usize,
    #[command(flatten)]
    pub view: ViewArgs,
    #[arg(long, requires_all = ["pred_rd", "gt_rd", "pred_fused", "gt_fused", "foreground"])]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub pred_rd: Option<PathBuf>,
    #[arg(long)]
    pub gt_rd: Option<PathBuf>,
    #[arg(long)]
    pub gt_conflict: Option<PathBuf>,
    #[arg(long)]
    pub pred_fused: Option<PathBuf>,
    #[arg(long)]
    pub gt_fused: Option<PathBuf>,
    #[arg(long)]
    pub foreground: Option<PathBuf>,
    #[arg(long, default_value_t = LossWeights::default().rd)]
    pub lambda_rd: f64,
    #[arg(long, default_value_t = LossWeights::default().rgb)]
    pub lambda_rgb: f64,
    #[arg(long, default_value_t = LossWeights::default().sm)]
    pub lambda_sm: f64,
    /// JSON report path; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Caps the global worker pool at `PEELKIT_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    ensure!(n >= 1, "{THREADS_ENV} must be at least 1");
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        warn!("worker pool already initialized; ignoring {THREADS_ENV}");
    }
    Ok(())
}

impl ViewArgs {
    pub fn camera(&self) -> Result<Camera> {
        ensure!(self.resolution >= 16, "--resolution must be at least 16, got {}", self.resolution);
        parse_camera(&self.camera, self.resolution)
    }
}

impl LayerArgs {
    fn get(&self) -> Result<usize> {
        ensure!(
            (1..=MAX_LAYERS).contains(&self.layers),
            "--layers must be in 1..={MAX_LAYERS}, got {}",
            self.layers
        );
        Ok(self.layers)
    }
}

/// Parses a `--camera` value for a square image of `resolution` pixels.
pub fn parse_camera(value: &str, resolution: usize) -> Result<Camera> {
    let (kind, arg) = match value.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (value, None),
    };
    let num = |a: &str| a.parse::<f64>().with_context(|| format!("bad camera parameter {a:?}"));
    let projection = match kind {
        "perspective" => match arg {
            Some(a) => Projection::Perspective {
                fov_y: num(a)?.to_radians(),
            },
            None => Projection::default_perspective(),
        },
        "orthographic" => match arg {
            Some(a) => Projection::Orthographic { half_height: num(a)? },
            None => Projection::default_orthographic(),
        },
        _ if Path::new(value).extension().is_some_and(|e| e == "json") => {
            let text = std::fs::read_to_string(value).with_context(|| format!("reading camera file {value}"))?;
            let rec: CameraRecord = serde_json::from_str(&text).with_context(|| format!("parsing camera file {value}"))?;
            return Ok(Camera::from_record(&rec)?.with_resolution(resolution, resolution)?);
        }
        _ => bail!("unknown camera {value:?}; expected perspective[:FOV_DEG], orthographic[:HALF_HEIGHT] or a .json file"),
    };
    Ok(Camera::looking_down_z(resolution, resolution, projection)?)
}

/// Saves a container and checks that it reads back identically.
fn save_checked(file: &PeelFile, path: &Path) -> Result<()> {
    file.save(path).with_context(|| format!("writing {}", path.display()))?;
    let back = PeelFile::load(path)?;
    ensure!(&back == file, "{} did not read back identically", path.display());
    info!("wrote {} ({} layers, tag {})", path.display(), file.layers(), file.tag.name());
    Ok(())
}

fn save_cloud(cloud: &ColoredPointCloud, path: &Path) -> Result<()> {
    cloud.save_ply(path).with_context(|| format!("writing {}", path.display()))?;
    let back = ColoredPointCloud::load_ply(path)?;
    ensure!(back.len() == cloud.len(), "{} did not read back", path.display());
    info!("wrote {} ({} points)", path.display(), cloud.len());
    Ok(())
}

fn load_stack(path: &Path) -> Result<PeelStack> {
    PeelStack::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_mask(path: &Path, dims: (usize, usize)) -> Result<Mask> {
    let m = load_foreground(path).with_context(|| format!("reading foreground {}", path.display()))?;
    ensure!(
        m.dims() == dims,
        "foreground {} is {}x{}, expected {}x{}",
        path.display(),
        m.width(),
        m.height(),
        dims.0,
        dims.1
    );
    Ok(m)
}

fn preview_path(output: &Path, layer: usize) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}_layer{}.png", layer + 1))
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Render {
            mesh,
            output,
            view,
            layers,
            no_preview,
        } => {
            let camera = view.camera()?;
            let layers = layers.get()?;
            let mesh = load_mesh(&mesh).with_context(|| format!("loading mesh {}", mesh.display()))?;
            let bvh = Bvh::build(&mesh)?;
            let stack = render_peel(&mesh, &bvh, &camera, layers)?;
            if stack.overflow_pixels() > 0 {
                warn!("{} pixels have more than {layers} surface crossings", stack.overflow_pixels());
            }
            stack.validate().map_err(|e| anyhow!("rendered stack invalid: {e}"))?;
            save_checked(&stack.to_file(), &output)?;
            if !no_preview {
                for l in 0..layers {
                    save_depth_preview(stack.depth(l), stack.range(), &preview_path(&output, l))?;
                }
            }
        }
        Command::Prior {
            model,
            params,
            output,
            foreground,
            gamma,
            view,
            layers,
        } => {
            let camera = view.camera()?;
            let layers = layers.get()?;
            let model = load_lbsm(&model).with_context(|| format!("loading model {}", model.display()))?;
            let params = load_params(&params).with_context(|| format!("loading params {}", params.display()))?;
            let mesh = apply_weak_perspective(&model.evaluate(&params)?, &params.camera)?;
            let bvh = Bvh::build(&mesh)?;
            let stack = render_prior_peel(&mesh, &bvh, &camera, layers)?;
            save_checked(&stack.to_file(), &output)?;
            match (foreground, gamma) {
                (Some(f), Some(g)) => {
                    let masks = compute_mask(&stack, &load_mask(&f, stack.dims())?)?;
                    save_checked(&masks.gamma_file(&camera, stack.range()), &g)?;
                }
                (None, Some(_)) => bail!("--gamma needs --foreground"),
                _ => {}
            }
        }
        Command::Decompose {
            gt,
            prior,
            foreground,
            out_dir,
        } => {
            let (gt, prior) = (load_stack(&gt)?, load_stack(&prior)?);
            let f = load_mask(&foreground, prior.dims())?;
            let masks = compute_mask(&prior, &f)?;
            let (rd, aux) = decompose(&gt, &prior, &masks)?;
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let (rd_file, conflict_file) = rd.to_files();
            save_checked(&rd_file, &out_dir.join("rd.peel"))?;
            save_checked(&conflict_file, &out_dir.join("conflict.peel"))?;
            save_checked(&aux.to_file(), &out_dir.join("aux.peel"))?;
            save_checked(&masks.gamma_file(prior.camera(), prior.range()), &out_dir.join("gamma.peel"))?;
            save_checked(&foreground_file(&f, prior.camera(), prior.range()), &out_dir.join("fg.peel"))?;
        }
        Command::Fuse {
            prior,
            rd,
            conflict,
            aux,
            foreground,
            output,
            clamp,
        } => {
            let prior = load_stack(&prior)?;
            let conflict = conflict.map(|c| PeelFile::load(&c)).transpose()?;
            let mut rd = ResidualStack::from_files(PeelFile::load(&rd)?, conflict)?;
            if let Some(c) = clamp {
                let (lo, hi) = c
                    .split_once(',')
                    .ok_or_else(|| anyhow!("--clamp expects LO,HI, got {c:?}"))?;
                rd = clamp_residual(&rd, lo.trim().parse()?, hi.trim().parse()?)?;
            }
            let aux = AuxiliaryStack::from_file(PeelFile::load(&aux)?)?;
            let masks = compute_mask(&prior, &load_mask(&foreground, prior.dims())?)?;
            let fused = fuse(&prior, &rd, &aux, &masks)?;
            save_checked(&fused.to_file(), &output)?;
        }
        Command::Backproject {
            depth,
            rgb,
            foreground,
            output,
            normals,
            knn,
            orient,
        } => {
            let depth = load_stack(&depth)?;
            let rgb = rgb.map(|p| load_stack(&p)).transpose()?;
            let f = foreground.map(|p| load_mask(&p, depth.dims())).transpose()?;
            let mut cloud = backproject(&depth, rgb.as_ref(), f.as_ref())?;
            if normals {
                let o = match orient {
                    OrientArg::LayerParity => Orientation::LayerParity,
                    OrientArg::CameraOnly => Orientation::CameraOnly,
                };
                cloud = estimate_normals(&cloud, knn, depth.camera(), o)?;
            }
            save_cloud(&cloud, &output)?;
        }
        Command::Filter {
            input,
            output,
            knn,
            threshold,
        } => {
            let cloud = ColoredPointCloud::load_ply(&input).with_context(|| format!("reading {}", input.display()))?;
            let kept = filter_outliers(&cloud, knn, threshold)?;
            info!("removed {} of {} points", cloud.len() - kept.len(), cloud.len());
            save_cloud(&kept, &output)?;
        }
        Command::Eval(args) => eval(args)?,
        Command::Synth {
            scene,
            seed,
            output,
            view,
        } => {
            let camera = view.camera()?;
            let scene = build_scene(&scene, seed)?;
            write_scene(&scene, &output, &camera)?;
            info!("wrote scene {} to {}", scene.name, output.display());
        }
    }
    Ok(())
}

/// Normal map of the layer-1 points of `cloud`: each pixel takes the normal of
/// the nearest point projecting into it.
fn splat_normals(cloud: &ColoredPointCloud, camera: &Camera) -> Plane<[f32; 3]> {
    let (w, h) = (camera.width(), camera.height());
    let mut best = vec![f64::INFINITY; w * h];
    let mut out = Plane::filled(w, h, [0.0f32; 3]);
    let Some(normals) = &cloud.normals else {
        return out;
    };
    for ((p, n), &layer) in cloud.positions.iter().zip(normals).zip(&cloud.layers) {
        if layer != 1 {
            continue;
        }
        let Some((x, y)) = camera.pixel_of(*p) else {
            continue;
        };
        let i = y * w + x;
        let d = (p - camera.center()).norm();
        if d < best[i] {
            best[i] = d;
            let c = camera.to_camera_frame(*n);
            out.data_mut()[i] = [c.x as f32, c.y as f32, c.z as f32];
        }
    }
    out
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut report = serde_json::Map::new();
    if let (Some(pred), Some(gt_mesh)) = (&args.pred, &args.gt_mesh) {
        let mesh = load_mesh(gt_mesh).with_context(|| format!("loading mesh {}", gt_mesh.display()))?;
        let bvh = Bvh::build(&mesh)?;
        let (cloud, camera) = if pred.extension().is_some_and(|e| e == "peel") {
            let s = load_stack(pred)?;
            (backproject(&s, None, None)?, *s.camera())
        } else {
            let c = ColoredPointCloud::load_ply(pred).with_context(|| format!("reading {}", pred.display()))?;
            (c, args.view.camera()?)
        };
        ensure!(!cloud.is_empty(), "prediction {} has no points", pred.display());
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let samples = shapes::sample_surface(&mesh, args.samples, &mut rng);
        let points: Vec<Vec3> = cloud.positions.clone();
        let normal_l2 = if cloud.len() > args.knn {
            let with_normals = if cloud.normals.is_some() {
                cloud.clone()
            } else {
                estimate_normals(&cloud, args.knn, &camera, Orientation::LayerParity)?
            };
            let pred_map = splat_normals(&with_normals, &camera);
            Some(normal_reprojection(&pred_map, &render_normal_map(&mesh, &bvh, &camera))?)
        } else {
            None
        };
        let metrics = MetricReport {
            chamfer: chamfer_sum(&points, &samples)?,
            chamfer_mean: chamfer_mean(&points, &samples)?,
            p2s: p2s(&points, &mesh, &bvh)?,
            normal_l2,
            conventions: MetricConventions {
                chamfer_distance: "squared euclidean".into(),
                chamfer_reduction: "chamfer: sum over points in both directions; chamfer_mean: mean per direction, summed".into(),
                p2s: "mean euclidean distance from predicted points to the ground-truth surface".into(),
                normal_support: "union of pixels non-zero in either normal map".into(),
                surface_samples: args.samples,
                seed: args.seed,
            },
        };
        report.insert("metrics".into(), serde_json::to_value(metrics)?);
    }
    if let Some(prior) = &args.prior {
        let prior = load_stack(prior)?;
        let load_rd = |p: &Option<PathBuf>, c: Option<&PathBuf>| -> Result<ResidualStack> {
            let p = p.as_ref().expect("required by clap");
            let conflict = c.map(|c| PeelFile::load(c)).transpose()?;
            Ok(ResidualStack::from_files(PeelFile::load(p)?, conflict)?)
        };
        let pred_rd = load_rd(&args.pred_rd, None)?;
        let gt_rd = load_rd(&args.gt_rd, args.gt_conflict.as_ref())?;
        let pred_fused = load_stack(args.pred_fused.as_ref().expect("required by clap"))?;
        let gt_fused = load_stack(args.gt_fused.as_ref().expect("required by clap"))?;
        let f = load_mask(args.foreground.as_ref().expect("required by clap"), prior.dims())?;
        let weights = LossWeights::new(args.lambda_rd, args.lambda_rgb, args.lambda_sm)?;
        let losses = total_loss(
            &LossInputs {
                prior: &prior,
                pred_rd: &pred_rd,
                gt_rd: &gt_rd,
                pred_fused: &pred_fused,
                gt_fused: &gt_fused,
                foreground: &f,
            },
            &weights,
        )?;
        report.insert(
            "losses".into(),
            json!({
                "report": losses,
                "weights": weights,
                "conventions": {
                    "reduction": "mean over foreground pixels per layer, summed over layers",
                    "support": "foreground mask",
                    "residual": "conflict pixels excluded",
                    "rgb_layers": "2..L",
                    "gradient": "forward differences, zero on the last row and column",
                },
            }),
        );
    }
    ensure!(!report.is_empty(), "eval needs --pred/--gt-mesh and/or the loss inputs (--prior ...)");
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

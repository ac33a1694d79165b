//! Command-line surface. Every subcommand maps onto one library operation;
//! `run` chains them and writes the same files the individual subcommands
//! would.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baker::{uv_rasterize, BakeParams};
use crate::compose::{fuse, pullpush_png, FuseMode};
use crate::formats::{self, PartialSidecar};
use crate::metrics::{AngleUnit, Attribute, Joints, MetricsError, MetricsReport};
use crate::pipeline::{
    self, bake_one, build_prompts, check_resolution, ErrorKind, FillDomain, InpaintMode, PipelineConfig, PipelineError,
    SubjectAttributes, View, ViewInputs,
};

#[derive(Debug, Parser)]
#[command(name = "uvbake", version, about = "Bake front and back photographs into the UV texture of a posed mesh")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the front and back image-generation prompts for a subject.
    Prompt(PromptArgs),
    /// Bake one photograph into a partial texture (.ptx).
    Bake(BakeArgs),
    /// Fuse a front and a back partial texture into a fused texture (.ftx).
    Fuse(FuseArgs),
    /// Fill the empty texels of a fused texture.
    Inpaint(InpaintArgs),
    /// Compute MPAE, OCE, coverage and optional pose errors.
    Metrics(MetricsArgs),
    /// Run the whole pipeline from a JSON config.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long)]
    pub gender: String,
    /// Body shape, e.g. "slim".
    #[arg(long)]
    pub shape: String,
    #[arg(long)]
    pub age: String,
    /// Geographic area or ethnicity descriptor.
    #[arg(long)]
    pub area: String,
    #[arg(long)]
    pub profession: String,
    #[arg(long)]
    pub clothing: String,
    /// Print a JSON object with `front` and `back` keys instead of two lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Clone)]
pub struct BakeParamArgs {
    /// Minimum incidence cosine for a texel to be accepted.
    #[arg(long, default_value_t = BakeParams::default().tau)]
    pub tau: f64,
    /// Exponent p of the confidence weight cos^p.
    #[arg(long = "weight-exp", default_value_t = BakeParams::default().weight_exponent)]
    pub weight_exp: f64,
    /// Depth tolerance of the visibility test, scene units.
    #[arg(long = "depth-eps", default_value_t = BakeParams::default().depth_eps)]
    pub depth_eps: f64,
}

impl BakeParamArgs {
    fn params(&self) -> BakeParams {
        BakeParams { tau: self.tau, weight_exponent: self.weight_exp, depth_eps: self.depth_eps, use_mask: false }
    }
}

#[derive(Debug, Args)]
pub struct BakeArgs {
    /// OBJ mesh with UVs.
    #[arg(long)]
    pub mesh: PathBuf,
    /// Fit file holding the camera of this view.
    #[arg(long)]
    pub fit: PathBuf,
    /// Photograph (PNG, sRGB).
    #[arg(long)]
    pub image: PathBuf,
    /// Optional foreground mask; texels landing on alpha < 0.5 are rejected.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Which view this is; recorded in the sidecar and used in messages.
    #[arg(long, value_enum, default_value_t = View::Front)]
    pub view: View,
    /// Texture resolution (power of two, at most 4096).
    #[arg(long, default_value_t = pipeline::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    #[command(flatten)]
    pub params: BakeParamArgs,
    /// Output .ptx path; a .json sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write colour, weight, cos and valid PNGs into this directory.
    #[arg(long)]
    pub previews: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub front: PathBuf,
    #[arg(long)]
    pub back: PathBuf,
    #[arg(long, value_enum, default_value_t = FuseMode::Blend)]
    pub mode: FuseMode,
    /// Output .ftx path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the colour map as PNG.
    #[arg(long)]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InpaintKind {
    Pullpush,
    External,
    None,
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    /// Input .ftx path.
    #[arg(long, required_unless_present = "exchange")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InpaintKind::Pullpush)]
    pub inpaint: InpaintKind,
    /// External program and its leading arguments (repeat the flag per word);
    /// colour, mask and output paths are appended.
    #[arg(long = "command", allow_hyphen_values = true)]
    pub command: Vec<String>,
    #[arg(long, value_enum, default_value_t = FillDomain::Atlas)]
    pub fill: FillDomain,
    /// Output .ftx path.
    #[arg(long, required_unless_present = "exchange")]
    pub out: Option<PathBuf>,
    /// Also write the colour map as PNG.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Also write the provenance map as indexed PNG.
    #[arg(long)]
    pub provenance: Option<PathBuf>,
    /// Act as an external inpainter: pull-push fill COLOR where MASK is
    /// white and write OUT.
    #[arg(long, num_args = 3, value_names = ["COLOR", "MASK", "OUT"], conflicts_with_all = ["input", "out"])]
    pub exchange: Option<Vec<PathBuf>>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub front: PathBuf,
    #[arg(long)]
    pub back: PathBuf,
    /// Texel attribute compared by OCE.
    #[arg(long, value_enum, default_value_t = Attribute::Luma)]
    pub attribute: Attribute,
    /// JSON file with `pred` and `gt` joint arrays.
    #[arg(long)]
    pub joints: Option<PathBuf>,
    #[arg(long, default_value = "uvbake")]
    pub label: String,
    /// Report OCE as n/a instead of failing when the views do not overlap.
    #[arg(long)]
    pub allow_no_overlap: bool,
    /// Show angles in degrees in the text table (JSON stays in radians).
    #[arg(long)]
    pub degrees: bool,
    /// Write the report as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the text report here.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the texture resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long = "weight-exp")]
    pub weight_exp: Option<f64>,
    #[arg(long = "depth-eps")]
    pub depth_eps: Option<f64>,
    /// Override the inpainting mode (external needs it in the config).
    #[arg(long, value_enum)]
    pub inpaint: Option<InpaintKind>,
    /// Override the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Show angles in degrees in the printed table.
    #[arg(long)]
    pub degrees: bool,
}

fn usage(msg: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> PipelineError {
    PipelineError::validation("args", msg)
}

fn prompt(a: PromptArgs) -> Result<(), PipelineError> {
    let attrs = SubjectAttributes {
        gender: a.gender,
        body_shape: a.shape,
        age: a.age,
        area: a.area,
        profession: a.profession,
        clothing: a.clothing,
    };
    let (front, back) = build_prompts(&attrs).map_err(|e| PipelineError::validation("prompt", e))?;
    if a.json {
        println!("{}", serde_json::json!({ "front": front, "back": back }));
    } else {
        println!("front: {front}");
        println!("back: {back}");
    }
    Ok(())
}

fn bake(a: BakeArgs) -> Result<(), PipelineError> {
    check_resolution(a.resolution).map_err(usage)?;
    let params = a.params.params();
    params.validate().map_err(usage)?;
    let view = a.view;
    let mesh = pipeline::read_mesh(&a.mesh)?;
    let camera = pipeline::read_fit(&a.fit, view)?;
    let cfg = pipeline::ViewConfig { fit: a.fit.clone(), image: a.image.clone(), mask: a.mask.clone(), mesh: None };
    let (image, mask) = pipeline::load_view_images(&cfg, view)?;
    let coverage = uv_rasterize(&mesh, a.resolution).map_err(|e| PipelineError::runtime("uv_rasterize", e))?;
    let b = bake_one(&ViewInputs { view, mesh: &mesh, camera: &camera, image: &image, mask: mask.as_ref() }, &coverage, &params)?;
    let write = |e: formats::FormatError| PipelineError::runtime("write", e);
    formats::write_partial(&a.out, &b.texture).map_err(write)?;
    let side = PartialSidecar { view: view.to_string(), resolution: a.resolution, params: b.params, stats: b.stats };
    formats::write_json(formats::sidecar_path(&a.out), &side).map_err(write)?;
    if let Some(dir) = &a.previews {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::runtime("write", e))?;
        formats::save_partial_pngs(&b.texture, dir, &view.to_string()).map_err(write)?;
    }
    println!("{view}: {} valid / {} covered texels", b.stats.valid, b.texture.covered_count());
    Ok(())
}

fn read_ptx(stage: &str, p: &PathBuf) -> Result<crate::baker::PartialTexture, PipelineError> {
    formats::read_partial(p).map_err(|e| PipelineError::validation(stage, e))
}

fn fuse_cmd(a: FuseArgs) -> Result<(), PipelineError> {
    let front = read_ptx("fuse", &a.front)?;
    let back = read_ptx("fuse", &a.back)?;
    let fused = fuse(&front, &back, a.mode).map_err(|e| PipelineError::validation("fuse", e))?;
    formats::write_fused(&a.out, &fused).map_err(|e| PipelineError::runtime("write", e))?;
    if let Some(p) = &a.png {
        fused.save_png(p).map_err(|e| PipelineError::runtime("write", e))?;
    }
    Ok(())
}

fn inpaint_cmd(a: InpaintArgs) -> Result<(), PipelineError> {
    if let Some(paths) = &a.exchange {
        return pullpush_png(&paths[0], &paths[1], &paths[2]).map_err(|e| PipelineError::runtime("inpaint", e));
    }
    let (Some(input), Some(out)) = (&a.input, &a.out) else {
        return Err(usage("--input and --out are required"));
    };
    let mode = match a.inpaint {
        InpaintKind::Pullpush => InpaintMode::Pullpush,
        InpaintKind::None => InpaintMode::None,
        InpaintKind::External if a.command.is_empty() => return Err(usage("--inpaint external needs --command")),
        InpaintKind::External => InpaintMode::External { command: a.command.clone() },
    };
    let tex = formats::read_fused(input).map_err(|e| PipelineError::validation("inpaint", e))?;
    let filled = pipeline::inpaint(&tex, &mode, a.fill)?;
    let write = |e: Box<dyn std::error::Error + Send + Sync>| PipelineError::runtime("write", e);
    formats::write_fused(out, &filled).map_err(|e| write(e.into()))?;
    if let Some(p) = &a.png {
        filled.save_png(p).map_err(|e| write(e.into()))?;
    }
    if let Some(p) = &a.provenance {
        filled.save_provenance_png(p).map_err(|e| write(e.into()))?;
    }
    Ok(())
}

fn metrics_cmd(a: MetricsArgs) -> Result<(), PipelineError> {
    let front = read_ptx("metrics", &a.front)?;
    let back = read_ptx("metrics", &a.back)?;
    let joints: Option<Joints> = match &a.joints {
        Some(p) => Some(formats::read_json(p).map_err(|e| PipelineError::validation("metrics", e))?),
        None => None,
    };
    let mut report = MetricsReport::compute(&a.label, &front, &back, a.attribute, joints.as_ref())
        .map_err(|e| PipelineError::runtime("metrics", e))?;
    if report.oce.is_none() && !a.allow_no_overlap {
        return Err(PipelineError::runtime("metrics", MetricsError::NoOverlap));
    }
    if let Some(p) = &a.json {
        formats::write_json(p, &report).map_err(|e| PipelineError::runtime("write", e))?;
    }
    if let Some(p) = &a.text {
        std::fs::write(p, report.render_text()).map_err(|e| PipelineError::runtime("write", e))?;
    }
    if a.degrees {
        report.angle_unit = AngleUnit::Degrees;
    }
    print!("{}", report.render_text());
    Ok(())
}

fn run_cmd(a: RunArgs) -> Result<(), PipelineError> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(r) = a.resolution {
        cfg.resolution = r;
    }
    if let Some(t) = a.tau {
        cfg.bake.tau = t;
    }
    if let Some(p) = a.weight_exp {
        cfg.bake.weight_exponent = p;
    }
    if let Some(d) = a.depth_eps {
        cfg.bake.depth_eps = d;
    }
    match a.inpaint {
        Some(InpaintKind::Pullpush) => cfg.inpaint = InpaintMode::Pullpush,
        Some(InpaintKind::None) => cfg.inpaint = InpaintMode::None,
        Some(InpaintKind::External) if !matches!(cfg.inpaint, InpaintMode::External { .. }) => {
            return Err(usage("--inpaint external needs an external command in the config"));
        }
        _ => {}
    }
    if let Some(o) = a.out {
        cfg.output_dir = o;
    }
    let mut report = pipeline::run_pipeline(&cfg)?;
    if a.degrees {
        report.angle_unit = AngleUnit::Degrees;
    }
    print!("{}", report.render_text());
    println!("artifacts written to {}", cfg.output_dir.display());
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Prompt(a) => prompt(a),
        Command::Bake(a) => bake(a),
        Command::Fuse(a) => fuse_cmd(a),
        Command::Inpaint(a) => inpaint_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Run(a) => run_cmd(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 1 for usage or validation errors, 2 for runtime errors.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match crate::parallel::with_env_pool(|| execute(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind {
                ErrorKind::Validation => 1,
                ErrorKind::Runtime => 2,
            }
        }
    }
}

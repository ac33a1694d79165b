//! End-to-end orchestration: prompts, configuration, per-view baking,
//! fusion, inpainting, metrics and artifact persistence.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baker::{bake_view, uv_rasterize, BakeParams, BakeStats, PartialTexture, UvCoverageMap};
use crate::compose::{fuse, inpaint_external, inpaint_pullpush, FuseMode, FusedTexture};
use crate::formats::{self, PartialSidecar};
use crate::geometry::{Camera, Mesh};
use crate::imaging::{LinearImage, Mask};
use crate::metrics::{Attribute, Joints, MetricsReport};
use crate::obj::load_mesh;
use crate::visibility::rasterize_depth;

pub const MAX_RESOLUTION: usize = 4096;
pub const DEFAULT_RESOLUTION: usize = 1024;

/// Whether an error stems from bad input (exit 1) or from a failing stage
/// (exit 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: String,
    pub kind: ErrorKind,
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage={}: {}", self.stage, self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(self.source.as_ref())
    }
}

impl PipelineError {
    pub fn validation(stage: impl Into<String>, e: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        PipelineError { stage: stage.into(), kind: ErrorKind::Validation, source: e.into() }
    }

    pub fn runtime(stage: impl Into<String>, e: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        PipelineError { stage: stage.into(), kind: ErrorKind::Runtime, source: e.into() }
    }
}

#[derive(Debug)]
pub struct NotFound(pub PathBuf);

impl fmt::Display for NotFound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "file not found: {}", self.0.display())
    }
}

impl std::error::Error for NotFound {}

fn require(stage: &str, path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::validation(stage, NotFound(path.to_path_buf())))
    }
}

// ---------------------------------------------------------------- prompts

/// Subject description substituted into the prompt template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectAttributes {
    pub gender: String,
    pub body_shape: String,
    pub age: String,
    pub area: String,
    pub profession: String,
    pub clothing: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("attribute '{0}' must not be empty")]
pub struct EmptyAttribute(pub &'static str);

pub const FRONT_CLAUSE: &str = "front view, facing the camera";
pub const BACK_CLAUSE: &str = "back view, facing away from the camera";

impl SubjectAttributes {
    pub fn validate(&self) -> Result<(), EmptyAttribute> {
        for (name, value) in [
            ("gender", &self.gender),
            ("body_shape", &self.body_shape),
            ("age", &self.age),
            ("area", &self.area),
            ("profession", &self.profession),
            ("clothing", &self.clothing),
        ] {
            if value.trim().is_empty() {
                return Err(EmptyAttribute(name));
            }
        }
        Ok(())
    }
}

fn prompt_for(a: &SubjectAttributes, view: &str) -> String {
    format!(
        "A photo-realistic full-body photograph of a {age}, {shape} {gender} from {area}, \
         working as a {profession} and wearing {clothing}. {view}, standing upright with \
         arms slightly away from the body, the whole figure from head to feet in frame, \
         plain white background, soft even studio lighting.",
        age = a.age.trim(),
        shape = a.body_shape.trim(),
        gender = a.gender.trim(),
        area = a.area.trim(),
        profession = a.profession.trim(),
        clothing = a.clothing.trim(),
        view = capitalize(view),
    )
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Front and back generation prompts for one subject.
pub fn build_prompts(attrs: &SubjectAttributes) -> Result<(String, String), EmptyAttribute> {
    attrs.validate()?;
    Ok((prompt_for(attrs, FRONT_CLAUSE), prompt_for(attrs, BACK_CLAUSE)))
}

// ---------------------------------------------------------------- config

/// Camera estimate for one photograph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<String>,
    pub camera: Camera,
    /// Photograph the camera was fitted to. Informational; the config's
    /// `image` is what gets baked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewConfig {
    pub fit: PathBuf,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Per-view mesh; falls back to the shared mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InpaintMode {
    #[default]
    Pullpush,
    External { command: Vec<String> },
    None,
}

/// Texels eligible for inpainting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FillDomain {
    /// The atlas footprint only.
    #[default]
    Atlas,
    /// Every texel of the square.
    All,
}

impl FillDomain {
    pub fn mask(self, tex: &FusedTexture) -> Vec<bool> {
        match self {
            FillDomain::Atlas => tex.footprint.clone(),
            FillDomain::All => vec![true; tex.rgb.len()],
        }
    }
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

fn default_label() -> String {
    "uvbake".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mesh shared by both views.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    pub front: ViewConfig,
    pub back: ViewConfig,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub bake: BakeParams,
    #[serde(default)]
    pub fusion: FuseMode,
    #[serde(default)]
    pub inpaint: InpaintMode,
    #[serde(default)]
    pub fill: FillDomain,
    #[serde(default)]
    pub oce_attribute: Attribute,
    /// JSON file with `pred` and `gt` joint arrays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub debug_depth: bool,
}

pub fn check_resolution(res: usize) -> Result<(), String> {
    if res == 0 || !res.is_power_of_two() || res > MAX_RESOLUTION {
        return Err(format!("resolution must be a power of two in [1, {MAX_RESOLUTION}], got {res}"));
    }
    Ok(())
}

impl PipelineConfig {
    /// Reads a config; relative paths are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let mut cfg: PipelineConfig = formats::read_json(path).map_err(|e| PipelineError::validation("config", e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = &mut self.mesh {
            fix(m);
        }
        for v in [&mut self.front, &mut self.back] {
            fix(&mut v.fit);
            fix(&mut v.image);
            if let Some(m) = &mut v.mask {
                fix(m);
            }
            if let Some(m) = &mut v.mesh {
                fix(m);
            }
        }
        if let Some(j) = &mut self.joints {
            fix(j);
        }
        fix(&mut self.output_dir);
    }

    pub fn mesh_for(&self, view: View) -> Option<&Path> {
        self.view(view).mesh.as_deref().or(self.mesh.as_deref())
    }

    pub fn view(&self, view: View) -> &ViewConfig {
        match view {
            View::Front => &self.front,
            View::Back => &self.back,
        }
    }

    /// Checks parameters and that every referenced input exists. Missing
    /// files are attributed to the stage that would read them.
    pub fn validate(&self) -> Result<(), PipelineError> {
        check_resolution(self.resolution).map_err(|e| PipelineError::validation("config", e))?;
        self.bake.validate().map_err(|e| PipelineError::validation("config", e))?;
        if let InpaintMode::External { command } = &self.inpaint {
            if command.is_empty() {
                return Err(PipelineError::validation("config", "external inpaint command is empty"));
            }
        }
        for view in [View::Front, View::Back] {
            let v = self.view(view);
            let mesh = self
                .mesh_for(view)
                .ok_or_else(|| PipelineError::validation("config", format!("no mesh given for the {view} view")))?;
            require("load_mesh", mesh)?;
            require(&format!("load_fit({view})"), &v.fit)?;
            require(&format!("bake_view({view})"), &v.image)?;
            if let Some(m) = &v.mask {
                require(&format!("bake_view({view})"), m)?;
            }
        }
        if let Some(j) = &self.joints {
            require("metrics", j)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Front,
    Back,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Front => "front",
            View::Back => "back",
        })
    }
}

// ---------------------------------------------------------------- stages

pub fn read_fit(path: &Path, view: View) -> Result<Camera, PipelineError> {
    let stage = format!("load_fit({view})");
    let fit: FitFile = formats::read_json(path).map_err(|e| PipelineError::validation(&stage, e))?;
    if let Some(v) = fit.view.as_deref().filter(|v| *v != view.to_string()) {
        return Err(PipelineError::validation(&stage, format!("fit file is for the {v} view")));
    }
    fit.camera.validate().map_err(|e| PipelineError::validation(&stage, e))?;
    Ok(fit.camera)
}

pub fn read_mesh(path: &Path) -> Result<Mesh, PipelineError> {
    let mesh = load_mesh(path).map_err(|e| PipelineError::validation("load_mesh", e))?;
    for w in &mesh.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(mesh)
}

/// Inputs of one view, already loaded.
pub struct ViewInputs<'a> {
    pub view: View,
    pub mesh: &'a Mesh,
    pub camera: &'a Camera,
    pub image: &'a LinearImage,
    pub mask: Option<&'a Mask>,
}

pub struct ViewBake {
    pub texture: PartialTexture,
    pub stats: BakeStats,
    pub params: BakeParams,
    pub depth: crate::visibility::DepthBuffer,
}

/// Depth pass plus bake for one view. A supplied mask is always applied.
pub fn bake_one(inputs: &ViewInputs, coverage: &UvCoverageMap, params: &BakeParams) -> Result<ViewBake, PipelineError> {
    let view = inputs.view;
    let (w, h) = (inputs.image.width, inputs.image.height);
    let depth = rasterize_depth(inputs.mesh, inputs.camera, w, h)
        .map_err(|e| PipelineError::runtime(format!("rasterize_depth({view})"), e))?;
    if depth.stats.skipped_behind > 0 {
        log::warn!("{view}: {} faces behind the camera were skipped", depth.stats.skipped_behind);
    }
    let params = BakeParams { use_mask: params.use_mask || inputs.mask.is_some(), ..*params };
    let (texture, stats) = bake_view(inputs.mesh, inputs.camera, inputs.image, inputs.mask, coverage, &depth, &params)
        .map_err(|e| PipelineError::runtime(format!("bake_view({view})"), e))?;
    log::info!("{view}: {} valid texels of {} covered", stats.valid, texture.covered_count());
    Ok(ViewBake { texture, stats, params, depth })
}

pub fn load_view_images(v: &ViewConfig, view: View) -> Result<(LinearImage, Option<Mask>), PipelineError> {
    let stage = format!("bake_view({view})");
    let image = LinearImage::load(&v.image).map_err(|e| not_found_or(&stage, e))?;
    let mask = match &v.mask {
        Some(p) => Some(Mask::load(p).map_err(|e| not_found_or(&stage, e))?),
        None => None,
    };
    Ok((image, mask))
}

fn not_found_or(stage: &str, e: crate::imaging::ImageError) -> PipelineError {
    match e {
        crate::imaging::ImageError::NotFound { path } => PipelineError::validation(stage, NotFound(path.into())),
        e => PipelineError::validation(stage, e),
    }
}

/// Runs the configured inpainting over a fused texture.
pub fn inpaint(tex: &FusedTexture, mode: &InpaintMode, fill: FillDomain) -> Result<FusedTexture, PipelineError> {
    let domain = fill.mask(tex);
    let out = match mode {
        InpaintMode::Pullpush => inpaint_pullpush(tex, &domain),
        InpaintMode::External { command } => inpaint_external(tex, command, &domain),
        InpaintMode::None => Ok(tex.clone()),
    };
    out.map_err(|e| PipelineError::runtime("inpaint", e))
}

// ---------------------------------------------------------------- artifacts

/// Writes artifacts under a `.partial` suffix; [`Artifacts::commit`] renames
/// them once every stage has succeeded.
struct Artifacts {
    dir: PathBuf,
    pending: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::runtime("write", format!("{}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf(), pending: Vec::new() })
    }

    fn write<E>(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<(), E>) -> Result<(), PipelineError>
    where
        E: Into<Box<dyn std::error::Error + Send + Sync>>,
    {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!("{name}.partial"));
        f(&tmp).map_err(|e| PipelineError::runtime("write", e))?;
        self.pending.push(target);
        Ok(())
    }

    fn commit(self) -> Result<(), PipelineError> {
        for target in &self.pending {
            let mut tmp = target.clone().into_os_string();
            tmp.push(".partial");
            std::fs::rename(&tmp, target).map_err(|e| PipelineError::runtime("write", format!("{}: {e}", target.display())))?;
        }
        Ok(())
    }
}

/// File names written into the output directory.
pub mod names {
    pub const FRONT_PTX: &str = "front.ptx";
    pub const BACK_PTX: &str = "back.ptx";
    pub const FUSED_FTX: &str = "fused.ftx";
    pub const TEXTURE_FTX: &str = "texture.ftx";
    pub const TEXTURE_PNG: &str = "texture.png";
    pub const PROVENANCE_PNG: &str = "provenance.png";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TXT: &str = "report.txt";
}

fn sidecar(view: View, b: &ViewBake) -> PartialSidecar {
    PartialSidecar { view: view.to_string(), resolution: b.texture.resolution, params: b.params, stats: b.stats }
}

/// Executes the whole pipeline and returns the metrics report.
pub fn run_pipeline(config: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    config.validate()?;
    let front_mesh_path = config.mesh_for(View::Front).unwrap();
    let back_mesh_path = config.mesh_for(View::Back).unwrap();
    let front_mesh = read_mesh(front_mesh_path)?;
    let back_mesh = if back_mesh_path == front_mesh_path { None } else { Some(read_mesh(back_mesh_path)?) };
    let back_mesh_ref = back_mesh.as_ref().unwrap_or(&front_mesh);
    if !front_mesh.shares_atlas_with(back_mesh_ref) {
        return Err(PipelineError::validation("load_mesh", "front and back meshes do not share one UV atlas"));
    }
    let front_cam = read_fit(&config.front.fit, View::Front)?;
    let back_cam = read_fit(&config.back.fit, View::Back)?;
    let joints: Option<Joints> = match &config.joints {
        Some(p) => Some(formats::read_json(p).map_err(|e| PipelineError::validation("metrics", e))?),
        None => None,
    };

    let coverage = uv_rasterize(&front_mesh, config.resolution).map_err(|e| PipelineError::runtime("uv_rasterize", e))?;
    if coverage.degenerate_faces > 0 {
        log::warn!("{} faces have degenerate UV triangles", coverage.degenerate_faces);
    }

    let bake = |view: View, mesh: &Mesh, camera: &Camera| -> Result<ViewBake, PipelineError> {
        let (image, mask) = load_view_images(config.view(view), view)?;
        bake_one(&ViewInputs { view, mesh, camera, image: &image, mask: mask.as_ref() }, &coverage, &config.bake)
    };
    let (front, back) =
        rayon::join(|| bake(View::Front, &front_mesh, &front_cam), || bake(View::Back, back_mesh_ref, &back_cam));
    let (front, back) = (front?, back?);

    let mut out = Artifacts::new(&config.output_dir)?;
    if config.debug_depth {
        for (view, b) in [(View::Front, &front), (View::Back, &back)] {
            b.depth.write_debug(&config.output_dir, &format!("{view}")).map_err(|e| PipelineError::runtime("write", e))?;
        }
    }
    for (view, b, name) in [(View::Front, &front, names::FRONT_PTX), (View::Back, &back, names::BACK_PTX)] {
        out.write(name, |p| formats::write_partial(p, &b.texture))?;
        out.write(&name.replace(".ptx", ".json"), |p| formats::write_json(p, &sidecar(view, b)))?;
        formats::save_partial_pngs(&b.texture, &config.output_dir, &view.to_string())
            .map_err(|e| PipelineError::runtime("write", e))?;
    }

    let fused = fuse(&front.texture, &back.texture, config.fusion).map_err(|e| PipelineError::runtime("fuse", e))?;
    out.write(names::FUSED_FTX, |p| formats::write_fused(p, &fused))?;
    let texture = inpaint(&fused, &config.inpaint, config.fill)?;
    out.write(names::TEXTURE_FTX, |p| formats::write_fused(p, &texture))?;
    out.write(names::TEXTURE_PNG, |p| texture.save_png(p))?;
    out.write(names::PROVENANCE_PNG, |p| texture.save_provenance_png(p))?;

    let report = MetricsReport::compute(&config.label, &front.texture, &back.texture, config.oce_attribute, joints.as_ref())
        .map_err(|e| PipelineError::runtime("metrics", e))?;
    out.write(names::REPORT_JSON, |p| formats::write_json(p, &report))?;
    out.write(names::REPORT_TXT, |p| std::fs::write(p, report.render_text()))?;
    out.commit()?;
    Ok(report)
}

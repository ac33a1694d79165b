//! Dual-view texture baking onto the UV atlas of a posed mesh.
//!
//! A front and a back photograph are projected onto the mesh, each view's
//! visible texels are weighted by viewing incidence, the two partial
//! textures are fused and the remaining atlas holes are inpainted.

pub mod baker;
pub mod cli;
pub mod compose;
pub mod formats;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod obj;
pub mod parallel;
pub mod pipeline;
pub mod synth;
pub mod visibility;

pub use baker::{bake_view, uv_rasterize, BakeParams, BakeStats, PartialTexture, UvCoverageMap};
pub use compose::{fuse, inpaint_external, inpaint_pullpush, FuseMode, FusedTexture, Provenance};
pub use geometry::{Camera, Mesh, Projection};
pub use imaging::{LinearImage, Mask};
pub use metrics::{mpae, mpjpe, oce, pa_mpjpe, procrustes_align, MetricsReport};
pub use pipeline::{build_prompts, run_pipeline, PipelineConfig, SubjectAttributes};
pub use visibility::{is_visible, rasterize_depth, DepthBuffer};

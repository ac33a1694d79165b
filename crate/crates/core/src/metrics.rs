//! Self-consistency metrics of a bake (MPAE, OCE) and pose-alignment
//! metrics (MPJPE, PA-MPJPE).

use nalgebra::SVD;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baker::PartialTexture;
use crate::geometry::{Mat3, Vec3, UNIT_TOLERANCE};
use crate::imaging::linear_to_srgb;
use crate::parallel::pairwise_sum;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no valid projections")]
    NoValidProjections,
    #[error("no overlap")]
    NoOverlap,
    #[error("input vector is not unit length (norm {0})")]
    NonUnit(f64),
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(usize, usize),
    #[error("joint count mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no joints")]
    NoJoints,
    #[error("degenerate point set: {0}")]
    Degenerate(&'static str),
}

/// Angle between a unit normal and a unit direction, in [0, π].
pub fn projection_angle(normal: &Vec3, view: &Vec3) -> Result<f64, MetricsError> {
    for v in [normal, view] {
        let n = v.norm();
        if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(MetricsError::NonUnit(n));
        }
    }
    Ok(normal.dot(view).clamp(-1.0, 1.0).acos())
}

#[inline]
fn angle_of(cos: f64) -> f64 {
    cos.clamp(-1.0, 1.0).acos()
}

/// Mean projection angle over the valid texels of one view, in radians.
pub fn mpae(tex: &PartialTexture) -> Result<f64, MetricsError> {
    let angles: Vec<f64> = tex
        .valid
        .par_iter()
        .zip(&tex.cos_angle)
        .filter_map(|(&v, &c)| v.then(|| angle_of(c)))
        .collect();
    if angles.is_empty() {
        return Err(MetricsError::NoValidProjections);
    }
    Ok(pairwise_sum(&angles) / angles.len() as f64)
}

/// MPAE over the union of two views. A texel seen by both contributes the
/// mean of its two angles, so each texel of the union is counted once.
pub fn mpae_union(a: &PartialTexture, b: &PartialTexture) -> Result<f64, MetricsError> {
    if a.resolution != b.resolution {
        return Err(MetricsError::ResolutionMismatch(a.resolution, b.resolution));
    }
    let angles: Vec<f64> = (0..a.len())
        .into_par_iter()
        .filter_map(|i| match (a.valid[i], b.valid[i]) {
            (true, true) => Some(0.5 * (angle_of(a.cos_angle[i]) + angle_of(b.cos_angle[i]))),
            (true, false) => Some(angle_of(a.cos_angle[i])),
            (false, true) => Some(angle_of(b.cos_angle[i])),
            (false, false) => None,
        })
        .collect();
    if angles.is_empty() {
        return Err(MetricsError::NoValidProjections);
    }
    Ok(pairwise_sum(&angles) / angles.len() as f64)
}

/// Per-texel attribute compared by [`oce`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    /// Rec. 709 luma of the sRGB-encoded colour, scaled to [0, 255].
    #[default]
    Luma,
    /// A single sRGB-encoded channel scaled to [0, 255].
    Red,
    Green,
    Blue,
}

impl Attribute {
    #[inline]
    pub fn of(self, rgb: &[f64; 3]) -> f64 {
        let e = rgb.map(|c| linear_to_srgb(c) * 255.0);
        match self {
            Attribute::Luma => 0.2126 * e[0] + 0.7152 * e[1] + 0.0722 * e[2],
            Attribute::Red => e[0],
            Attribute::Green => e[1],
            Attribute::Blue => e[2],
        }
    }
}

/// Mean absolute attribute difference over texels valid in both views.
pub fn oce(a: &PartialTexture, b: &PartialTexture, attribute: Attribute) -> Result<f64, MetricsError> {
    if a.resolution != b.resolution {
        return Err(MetricsError::ResolutionMismatch(a.resolution, b.resolution));
    }
    let diffs: Vec<f64> = (0..a.len())
        .into_par_iter()
        .filter_map(|i| (a.valid[i] && b.valid[i]).then(|| (attribute.of(&a.rgb[i]) - attribute.of(&b.rgb[i])).abs()))
        .collect();
    if diffs.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    Ok(pairwise_sum(&diffs) / diffs.len() as f64)
}

fn check_pairs(pred: &[Vec3], gt: &[Vec3]) -> Result<(), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::NoJoints);
    }
    Ok(())
}

/// Mean per-joint Euclidean distance.
pub fn mpjpe(pred: &[Vec3], gt: &[Vec3]) -> Result<f64, MetricsError> {
    check_pairs(pred, gt)?;
    let d: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| (p - g).norm()).collect();
    Ok(pairwise_sum(&d) / d.len() as f64)
}

/// Similarity transform `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Similarity {
    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len() as f64
}

/// Rank check on a centred point set: the second singular value must be
/// non-negligible relative to the first.
fn is_degenerate(centred: &[Vec3]) -> bool {
    let cov = centred.iter().fold(Mat3::zeros(), |a, p| a + p * p.transpose());
    let sv = cov.singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    !(s[0] > 0.0) || s[1] <= 1e-12 * s[0]
}

/// Least-squares similarity alignment of `pred` onto `gt` (Umeyama).
pub fn procrustes_align(pred: &[Vec3], gt: &[Vec3]) -> Result<Similarity, MetricsError> {
    check_pairs(pred, gt)?;
    if pred.len() < 3 {
        return Err(MetricsError::Degenerate("need at least 3 points"));
    }
    let mu_p = centroid(pred);
    let mu_g = centroid(gt);
    let xp: Vec<Vec3> = pred.iter().map(|p| p - mu_p).collect();
    let xg: Vec<Vec3> = gt.iter().map(|g| g - mu_g).collect();
    if is_degenerate(&xp) {
        return Err(MetricsError::Degenerate("predicted points are collinear or coincident"));
    }
    if is_degenerate(&xg) {
        return Err(MetricsError::Degenerate("reference points are collinear or coincident"));
    }

    // cross-covariance sum_i g_i p_i^T
    let cov = xg.iter().zip(&xp).fold(Mat3::zeros(), |a, (g, p)| a + g * p.transpose());
    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or(MetricsError::Degenerate("svd failed"))?;
    let v_t = svd.v_t.ok_or(MetricsError::Degenerate("svd failed"))?;
    let d = svd.singular_values;
    let mut sign = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let k = (0..3).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        sign[(k, k)] = -1.0;
    }
    let rotation = u * sign * v_t;
    let var_p: f64 = xp.iter().map(|p| p.norm_squared()).sum();
    let trace: f64 = (0..3).map(|k| d[k] * sign[(k, k)]).sum();
    let scale = trace / var_p;
    let translation = mu_g - rotation * mu_p * scale;
    Ok(Similarity { scale, rotation, translation })
}

/// MPJPE after optimal similarity alignment of `pred` onto `gt`.
pub fn pa_mpjpe(pred: &[Vec3], gt: &[Vec3]) -> Result<f64, MetricsError> {
    let t = procrustes_align(pred, gt)?;
    let aligned: Vec<Vec3> = pred.iter().map(|p| t.apply(p)).collect();
    mpjpe(&aligned, gt)
}

/// Unit of reported angles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

/// Summary of a bake. Angles are stored in radians; `angle_unit` only
/// selects how the text table renders them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub resolution: usize,
    /// MPAE over the union of both views, radians.
    pub mpae: f64,
    pub mpae_front: Option<f64>,
    pub mpae_back: Option<f64>,
    /// `None` when the views do not overlap.
    pub oce: Option<f64>,
    pub oce_attribute: Attribute,
    pub coverage_front: f64,
    pub coverage_back: f64,
    pub coverage_overlap: f64,
    pub footprint_texels: usize,
    pub overlap_texels: usize,
    pub mpjpe: Option<f64>,
    pub pa_mpjpe: Option<f64>,
    #[serde(default)]
    pub angle_unit: AngleUnit,
}

/// Ground-truth and predicted joints for the pose metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joints {
    pub pred: Vec<[f64; 3]>,
    pub gt: Vec<[f64; 3]>,
}

impl MetricsReport {
    /// Computes the report for a front/back pair; coverages are fractions of
    /// the atlas footprint (union of both `covered` masks).
    pub fn compute(
        label: &str,
        front: &PartialTexture,
        back: &PartialTexture,
        attribute: Attribute,
        joints: Option<&Joints>,
    ) -> Result<Self, MetricsError> {
        if front.resolution != back.resolution {
            return Err(MetricsError::ResolutionMismatch(front.resolution, back.resolution));
        }
        let mpae = mpae_union(front, back)?;
        let footprint = front.covered.iter().zip(&back.covered).filter(|(&a, &b)| a || b).count();
        let overlap = front.valid.iter().zip(&back.valid).filter(|(&a, &b)| a && b).count();
        let frac = |n: usize| if footprint > 0 { n as f64 / footprint as f64 } else { 0.0 };
        let oce = match oce(front, back, attribute) {
            Ok(v) => Some(v),
            Err(MetricsError::NoOverlap) => None,
            Err(e) => return Err(e),
        };
        let (mpjpe, pa_mpjpe) = match joints {
            Some(j) => {
                let pred: Vec<Vec3> = j.pred.iter().map(|p| Vec3::from(*p)).collect();
                let gt: Vec<Vec3> = j.gt.iter().map(|p| Vec3::from(*p)).collect();
                (Some(self::mpjpe(&pred, &gt)?), Some(self::pa_mpjpe(&pred, &gt)?))
            }
            None => (None, None),
        };
        Ok(MetricsReport {
            label: label.to_string(),
            resolution: front.resolution,
            mpae,
            mpae_front: self::mpae(front).ok(),
            mpae_back: self::mpae(back).ok(),
            oce,
            oce_attribute: attribute,
            coverage_front: frac(front.valid_count()),
            coverage_back: frac(back.valid_count()),
            coverage_overlap: frac(overlap),
            footprint_texels: footprint,
            overlap_texels: overlap,
            mpjpe,
            pa_mpjpe,
            angle_unit: AngleUnit::Radians,
        })
    }

    /// Checks the report invariants.
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=std::f64::consts::PI).contains(&self.mpae) {
            return Err(format!("mpae {} outside [0, pi]", self.mpae));
        }
        if let Some(o) = self.oce {
            if !(o >= 0.0) {
                return Err(format!("oce {o} negative"));
            }
        }
        for c in [self.coverage_front, self.coverage_back, self.coverage_overlap] {
            if !(0.0..=1.0).contains(&c) {
                return Err(format!("coverage {c} outside [0, 1]"));
            }
        }
        if self.coverage_overlap > self.coverage_front.min(self.coverage_back) {
            return Err("overlap coverage exceeds a single view's coverage".into());
        }
        Ok(())
    }

    fn angle(&self, rad: f64) -> f64 {
        match self.angle_unit {
            AngleUnit::Radians => rad,
            AngleUnit::Degrees => rad.to_degrees(),
        }
    }

    /// Plain-text table with the MPAE and OCE columns.
    pub fn render_table(reports: &[MetricsReport]) -> String {
        let unit = match reports.first().map(|r| r.angle_unit).unwrap_or_default() {
            AngleUnit::Radians => "rad",
            AngleUnit::Degrees => "deg",
        };
        let mpae_h = format!("MPAE ({unit}) ↓");
        let oce_h = "OCE ↓".to_string();
        let rows: Vec<[String; 3]> = reports
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    format!("{:.4}", r.angle(r.mpae)),
                    r.oce.map(|o| format!("{o:.4}")).unwrap_or_else(|| "n/a".into()),
                ]
            })
            .collect();
        let w0 = rows.iter().map(|r| r[0].chars().count()).chain([5]).max().unwrap();
        let w1 = rows.iter().map(|r| r[1].len()).chain([mpae_h.chars().count()]).max().unwrap();
        let w2 = rows.iter().map(|r| r[2].len()).chain([oce_h.chars().count()]).max().unwrap();
        let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
        let lpad = |s: &str, w: usize| format!("{}{s}", " ".repeat(w.saturating_sub(s.chars().count())));
        let mut out = String::new();
        out.push_str(&format!("{}  {}  {}\n", pad("Model", w0), lpad(&mpae_h, w1), lpad(&oce_h, w2)));
        out.push_str(&format!("{}\n", "-".repeat(w0 + w1 + w2 + 4)));
        for r in &rows {
            out.push_str(&format!("{}  {}  {}\n", pad(&r[0], w0), lpad(&r[1], w1), lpad(&r[2], w2)));
        }
        out
    }

    /// The table plus coverage and pose lines.
    pub fn render_text(&self) -> String {
        let mut out = Self::render_table(std::slice::from_ref(self));
        out.push('\n');
        out.push_str(&format!(
            "coverage: front {:.4}  back {:.4}  overlap {:.4}  ({} footprint texels at {}x{})\n",
            self.coverage_front, self.coverage_back, self.coverage_overlap, self.footprint_texels, self.resolution, self.resolution
        ));
        let opt = |v: Option<f64>| v.map(|x| format!("{:.4}", self.angle(x))).unwrap_or_else(|| "n/a".into());
        out.push_str(&format!("mpae per view: front {}  back {}\n", opt(self.mpae_front), opt(self.mpae_back)));
        if let (Some(m), Some(p)) = (self.mpjpe, self.pa_mpjpe) {
            out.push_str(&format!("pose: MPJPE {m:.6}  PA-MPJPE {p:.6}\n"));
        }
        out
    }
}

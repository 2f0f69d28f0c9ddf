//! Scene documents: the JSON file format and its validated in-memory form.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3};
use ngc_core::edit::BlendSpec;
use ngc_core::geometry::{check_rotation, orthonormalize, CurveSpec, GeneralizedCylinder, KeyFrame, DEFAULT_CURVE_SEGMENTS};
use ngc_core::ingest::Normalization;
use ngc_core::model::Scene;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCENE_VERSION: u32 = 1;

/// Frames further than this from orthonormal are re-orthonormalized on load.
const FRAME_TOLERANCE: f64 = 1e-6;
/// Frames further than this are rejected.
const FRAME_REJECT: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
    pub shapes: Vec<ShapeEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeEntry {
    pub id: String,
    pub meshes: Vec<MeshEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshEntry {
    /// OBJ path, relative to the scene file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj: Option<String>,
    /// Map from OBJ coordinates into the scene frame; computed from the
    /// bounding box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationEntry>,
    pub gcs: Vec<GcEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationEntry {
    pub center: [f64; 3],
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcEntry {
    /// Bezier control points: 2, 3 or 3k+1 of them.
    pub control_points: Vec<[f64; 3]>,
    pub keyframes: Vec<KeyframeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    /// Polyline parameters when the curve is not arc-length parameterized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blend: Option<BlendEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeEntry {
    pub t: f64,
    pub ry: f64,
    pub rz: f64,
    /// Rotation matrix, row-major; columns are the tangent, y and z axes.
    pub frame: [f64; 9],
}

/// Feature blend recorded on a GC: its own latent mixed with `latent_b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendEntry {
    pub latent_b: usize,
    pub a_coef: f64,
    pub b_coef: f64,
}

/// Validated scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub shapes: Vec<ShapeDoc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeDoc {
    pub id: String,
    pub meshes: Vec<MeshDoc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshDoc {
    pub obj: Option<String>,
    pub normalization: Option<Normalization>,
    pub gcs: Vec<GcDoc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcDoc {
    pub gc: GeneralizedCylinder,
    pub latent: usize,
    pub blend: Option<BlendEntry>,
}

fn p3(a: &[f64; 3]) -> Point3<f64> {
    Point3::new(a[0], a[1], a[2])
}

fn keyframe_from(k: &KeyframeEntry, where_: &str) -> Result<KeyFrame, CliError> {
    let m = Matrix3::from_row_slice(&k.frame);
    let rot = match check_rotation(&m, FRAME_TOLERANCE) {
        Ok(()) => m,
        Err(_) if check_rotation(&m, FRAME_REJECT).is_ok() => {
            log::warn!("{where_}: frame at t={} is not orthonormal; re-orthonormalized", k.t);
            orthonormalize(&m)?.into_inner()
        }
        Err(e) => return Err(CliError::schema(format!("{where_}: {e}"))),
    };
    Ok(KeyFrame::new(k.t, k.ry, k.rz, rot)?)
}

fn gc_from(entry: &GcEntry, where_: &str) -> Result<GeneralizedCylinder, CliError> {
    let pts: Vec<Point3<f64>> = entry.control_points.iter().map(p3).collect();
    let spec = CurveSpec::from_control_points(&pts).map_err(|e| CliError::schema(format!("{where_}: {e}")))?;
    let kfs = entry.keyframes.iter().map(|k| keyframe_from(k, where_)).collect::<Result<Vec<_>, _>>()?;
    let mut curve = spec.discretize(entry.segments.unwrap_or(DEFAULT_CURVE_SEGMENTS))?;
    if let Some(params) = &entry.params {
        curve = curve.with_params(params.clone()).map_err(|e| CliError::schema(format!("{where_}: {e}")))?;
    }
    GeneralizedCylinder::from_parts(spec, curve, kfs).map_err(|e| CliError::schema(format!("{where_}: {e}")))
}

fn gc_to(doc: &GcDoc) -> GcEntry {
    let gc = &doc.gc;
    GcEntry {
        control_points: gc.spec().control_points().iter().map(|p| [p.x, p.y, p.z]).collect(),
        keyframes: gc
            .keyframes()
            .iter()
            .map(|k| {
                let m = k.rot.matrix();
                let mut frame = [0.0; 9];
                for r in 0..3 {
                    for c in 0..3 {
                        frame[3 * r + c] = m[(r, c)];
                    }
                }
                KeyframeEntry { t: k.t, ry: k.r_y, rz: k.r_z, frame }
            })
            .collect(),
        segments: Some(gc.curve().segment_count()),
        params: (!gc.is_arc_length_parameterized()).then(|| gc.curve().params().to_vec()),
        latent: Some(doc.latent),
        blend: doc.blend,
    }
}

impl Document {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let file: SceneFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::from_json(&text)
    }

    pub fn from_file(file: &SceneFile) -> Result<Self, CliError> {
        if file.version != SCENE_VERSION {
            return Err(CliError::schema(format!("unsupported scene version {}", file.version)));
        }
        if file.shapes.is_empty() {
            return Err(CliError::schema("scene has no shapes"));
        }
        let mut next_latent = 0;
        let mut shapes = Vec::with_capacity(file.shapes.len());
        for s in &file.shapes {
            if shapes.iter().any(|o: &ShapeDoc| o.id == s.id) {
                return Err(CliError::schema(format!("duplicate shape id {:?}", s.id)));
            }
            let mut meshes = Vec::new();
            for (mi, m) in s.meshes.iter().enumerate() {
                let normalization = m.normalization.map(|n| Normalization { center: p3(&n.center), scale: n.scale });
                if normalization.is_some_and(|n| !(n.scale > 0.0 && n.scale.is_finite())) {
                    return Err(CliError::schema(format!("shape {:?} mesh {mi}: normalization scale must be positive", s.id)));
                }
                let mut gcs = Vec::new();
                for (gi, g) in m.gcs.iter().enumerate() {
                    let where_ = format!("shape {:?} mesh {mi} gc {gi}", s.id);
                    let latent = g.latent.unwrap_or(next_latent);
                    next_latent = next_latent.max(latent + 1);
                    gcs.push(GcDoc { gc: gc_from(g, &where_)?, latent, blend: g.blend });
                }
                meshes.push(MeshDoc { obj: m.obj.clone(), normalization, gcs });
            }
            let doc = ShapeDoc { id: s.id.clone(), meshes };
            if doc.gc_count() == 0 {
                return Err(CliError::schema(format!("shape {:?} has no GCs", s.id)));
            }
            let blended = doc.gcs().filter(|g| g.blend.is_some());
            for g in blended {
                if doc.gcs().filter(|o| o.latent == g.latent).count() > 1 {
                    return Err(CliError::schema(format!("shape {:?}: a blended GC needs its own latent", s.id)));
                }
            }
            shapes.push(doc);
        }
        Ok(Self { shapes })
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            version: SCENE_VERSION,
            revision: None,
            shapes: self
                .shapes
                .iter()
                .map(|s| ShapeEntry {
                    id: s.id.clone(),
                    meshes: s
                        .meshes
                        .iter()
                        .map(|m| MeshEntry {
                            obj: m.obj.clone(),
                            normalization: m
                                .normalization
                                .map(|n| NormalizationEntry { center: [n.center.x, n.center.y, n.center.z], scale: n.scale }),
                            gcs: m.gcs.iter().map(gc_to).collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("plain data")
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path.display(), e))
    }

    /// Number of latent codes the scene refers to.
    pub fn latent_count(&self) -> usize {
        self.all_gcs().map(|g| g.latent.max(g.blend.map_or(0, |b| b.latent_b)) + 1).max().unwrap_or(0)
    }

    pub fn all_gcs(&self) -> impl Iterator<Item = &GcDoc> {
        self.shapes.iter().flat_map(|s| s.gcs())
    }

    pub fn gc_count(&self) -> usize {
        self.shapes.iter().map(ShapeDoc::gc_count).sum()
    }

    /// GC by global index (file order across all shapes and meshes).
    pub fn gc(&self, index: usize) -> Result<&GcDoc, CliError> {
        self.all_gcs().nth(index).ok_or_else(|| CliError::not_found(format!("no GC {index} ({} in scene)", self.gc_count())))
    }

    pub fn gc_mut(&mut self, index: usize) -> Result<&mut GcDoc, CliError> {
        let count = self.gc_count();
        self.shapes
            .iter_mut()
            .flat_map(|s| s.meshes.iter_mut().flat_map(|m| m.gcs.iter_mut()))
            .nth(index)
            .ok_or_else(|| CliError::not_found(format!("no GC {index} ({count} in scene)")))
    }

    /// Shape position and the global index of its first GC.
    pub fn shape_index(&self, id: Option<&str>) -> Result<(usize, usize), CliError> {
        let pos = match id {
            Some(id) => self.shapes.iter().position(|s| s.id == id).ok_or_else(|| CliError::not_found(format!("no shape {id:?}")))?,
            None if self.shapes.len() == 1 => 0,
            None => return Err(CliError::schema("scene has several shapes; pick one")),
        };
        Ok((pos, self.shapes[..pos].iter().map(ShapeDoc::gc_count).sum()))
    }
}

impl ShapeDoc {
    pub fn gcs(&self) -> impl Iterator<Item = &GcDoc> {
        self.meshes.iter().flat_map(|m| m.gcs.iter())
    }

    pub fn gc_count(&self) -> usize {
        self.meshes.iter().map(|m| m.gcs.len()).sum()
    }

    /// Core scene of this shape plus the blends keyed by latent.
    pub fn scene(&self) -> (Scene, HashMap<usize, BlendSpec>) {
        let gcs: Vec<&GcDoc> = self.gcs().collect();
        let scene = Scene {
            id: self.id.clone(),
            gcs: gcs.iter().map(|g| g.gc.clone()).collect(),
            latents: gcs.iter().map(|g| g.latent).collect(),
        };
        let blends = gcs
            .iter()
            .filter_map(|g| {
                g.blend.map(|b| {
                    let spec = BlendSpec { latent_a: g.latent, latent_b: b.latent_b, a_coef: b.a_coef, b_coef: b.b_coef, blend_radii: false };
                    (g.latent, spec)
                })
            })
            .collect();
        (scene, blends)
    }

    /// Replaces the cylinders, in [`ShapeDoc::gcs`] order.
    pub fn set_cylinders(&mut self, cylinders: Vec<GeneralizedCylinder>) {
        let mut it = cylinders.into_iter();
        for g in self.meshes.iter_mut().flat_map(|m| m.gcs.iter_mut()) {
            g.gc = it.next().expect("one cylinder per GC");
        }
    }
}

/// Resolves `path` against the directory of the scene file.
pub fn resolve(scene_path: Option<&Path>, path: &str) -> PathBuf {
    let p = Path::new(path);
    match scene_path.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use tests_support::BAR;

    #[test]
    fn round_trip() {
        let doc = Document::from_json(BAR).unwrap();
        assert_eq!(doc.gc_count(), 1);
        assert_eq!(doc.latent_count(), 1);
        let again = Document::from_json(&doc.to_json()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = Document::from_json("{\n  \"version\": 1,\n  \"shapes\": [,]\n}").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(e.line, Some(3));
        assert!(e.column.is_some());
    }

    #[test]
    fn schema_violations() {
        let bad_version = BAR.replacen("\"version\": 1", "\"version\": 7", 1);
        assert_eq!(Document::from_json(&bad_version).unwrap_err().exit_code(), 2);
        let unknown = BAR.replacen("\"version\": 1", "\"version\": 1, \"extra\": 0", 1);
        assert_eq!(Document::from_json(&unknown).unwrap_err().exit_code(), 2);
        let skewed = BAR.replacen("[1,0,0, 0,1,0, 0,0,1]", "[1,0.5,0, 0,1,0, 0,0,1]", 1);
        assert!(Document::from_json(&skewed).is_err());
        let radius = BAR.replacen("\"ry\": 0.2", "\"ry\": -0.2", 1);
        assert!(Document::from_json(&radius).is_err());
    }

    #[test]
    fn nearly_orthonormal_frames_are_repaired() {
        let noisy = BAR.replacen("[1,0,0, 0,1,0, 0,0,1]", "[1,0.00001,0, 0,1,0, 0,0,1]", 1);
        let doc = Document::from_json(&noisy).unwrap();
        let rot = doc.gc(0).unwrap().gc.keyframes()[0].rot;
        assert!(check_rotation(rot.matrix(), 1e-12).is_ok());
    }

    #[test]
    fn reparameterized_curves_persist() {
        let mut doc = Document::from_json(BAR).unwrap();
        let g = &doc.gc(0).unwrap().gc;
        let r = ngc_core::edit::reparameterize(g, &[(0.0, 0.0), (0.5, 0.3), (1.0, 1.0)]).unwrap();
        doc.gc_mut(0).unwrap().gc = r;
        let again = Document::from_json(&doc.to_json()).unwrap();
        assert_eq!(again, doc);
    }
}

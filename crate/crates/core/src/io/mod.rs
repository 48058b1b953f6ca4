//! File formats: PLY scenes, camera documents with their images, feature
//! tensors, contribution logs, representation sets and run manifests.

mod binary;
mod image;
mod ply;

pub use binary::{
    decode_feature_maps, decode_log, encode_feature_maps, encode_log, read_feature_maps, read_log, write_feature_maps,
    write_log, FEATURE_MAGIC, FORMAT_VERSION, LOG_MAGIC,
};
pub use image::{
    decode_pfm, decode_png, encode_pfm, encode_png, read_color_png, read_mask_png, read_pfm, read_png, write_pfm,
    write_png, PngDepth,
};
pub use ply::{encode_ply, parse_ply, read_ply, write_ply, PlyFormat};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::representations::PrimitiveRepresentation;
use crate::scene::{Camera, GaussianScene, View, ViewRole, ViewSet};

/// One record of a cameras document. Image paths are relative to the
/// document's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub role: ViewRole,
    pub color: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamerasDocument {
    pub cameras: Vec<CameraRecord>,
}

impl CameraRecord {
    pub fn camera(&self) -> Result<Camera> {
        let r = Matrix3::from_row_slice(&self.rotation);
        Camera::new(
            self.id.clone(),
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            r,
            Vector3::from(self.translation),
        )
    }

    pub fn from_camera(
        cam: &Camera,
        role: ViewRole,
        color: String,
        depth: Option<String>,
        mask: Option<String>,
    ) -> Self {
        let r = &cam.rotation;
        Self {
            id: cam.id.clone(),
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
            role,
            color,
            depth,
            mask,
        }
    }
}

pub fn read_cameras_document(path: &Path) -> Result<CamerasDocument> {
    let text = std::fs::read_to_string(path)?;
    let doc: CamerasDocument = serde_json::from_str(&text)?;
    let mut seen = BTreeSet::new();
    for (i, c) in doc.cameras.iter().enumerate() {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::parse("id", i as u64, format!("duplicate camera id `{}`", c.id)));
        }
    }
    Ok(doc)
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

/// Loads the view set described by a cameras document, reading color,
/// depth and mask images relative to the document.
pub fn load_views(cameras_path: &Path) -> Result<ViewSet> {
    let doc = read_cameras_document(cameras_path)?;
    let base = cameras_path.parent().unwrap_or(Path::new("."));
    let views = doc
        .cameras
        .iter()
        .map(|rec| {
            let camera = rec.camera()?;
            let gt_color = read_color_png(&resolve(base, &rec.color))?;
            let gt_depth = rec.depth.as_deref().map(|p| read_pfm(&resolve(base, p))).transpose()?;
            let mask = rec
                .mask
                .as_deref()
                .map(|p| read_mask_png(&resolve(base, p)))
                .transpose()?;
            Ok(View {
                camera,
                role: rec.role,
                gt_color,
                gt_depth,
                mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ViewSet::new(views)
}

/// Reads the scene and every view with its ground-truth images.
pub fn load_scene_bundle(scene_path: &Path, cameras_path: &Path) -> Result<(GaussianScene, ViewSet)> {
    Ok((read_ply(scene_path)?, load_views(cameras_path)?))
}

/// Writes `scene.ply`, `cameras.json` and the images of every view into
/// `dir` (color as 16-bit PNG, depth as PFM, masks as 8-bit PNG).
pub fn write_scene_bundle(dir: &Path, scene: &GaussianScene, views: &ViewSet) -> Result<()> {
    for sub in ["images", "depth", "masks"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    write_ply(&dir.join("scene.ply"), scene, PlyFormat::BinaryLittleEndian)?;
    let mut records = Vec::with_capacity(views.views.len());
    for v in &views.views {
        let id = &v.camera.id;
        let color = format!("images/{id}.png");
        write_png(&dir.join(&color), &v.gt_color, PngDepth::Sixteen)?;
        let depth = match &v.gt_depth {
            Some(d) => {
                let p = format!("depth/{id}.pfm");
                write_pfm(&dir.join(&p), d)?;
                Some(p)
            }
            None => None,
        };
        let mask = match &v.mask {
            Some(m) => {
                let p = format!("masks/{id}.png");
                write_png(&dir.join(&p), m, PngDepth::Eight)?;
                Some(p)
            }
            None => None,
        };
        records.push(CameraRecord::from_camera(&v.camera, v.role, color, depth, mask));
    }
    let doc = CamerasDocument { cameras: records };
    std::fs::write(dir.join("cameras.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// Named per-primitive representations as persisted between stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSet {
    pub names: Vec<String>,
    pub representations: Vec<PrimitiveRepresentation>,
}

pub const REPRESENTATION_FORMAT: &str = "splatue-representations";

#[derive(Serialize, Deserialize)]
struct RepresentationDocument {
    format: String,
    version: u32,
    #[serde(flatten)]
    set: RepresentationSet,
}

impl RepresentationSet {
    pub fn new(names: Vec<String>, representations: Vec<PrimitiveRepresentation>) -> Result<Self> {
        if names.len() != representations.len() {
            return Err(Error::invalid("representation names and values differ in count"));
        }
        Ok(Self { names, representations })
    }

    /// Keeps the named entries, in the given order.
    pub fn select(&self, names: &[String]) -> Result<RepresentationSet> {
        let reps = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .map(|i| self.representations[i].clone())
                    .ok_or_else(|| Error::invalid(format!("representation `{n}` not in set {:?}", self.names)))
            })
            .collect::<Result<_>>()?;
        RepresentationSet::new(names.to_vec(), reps)
    }
}

pub fn write_representation_set(path: &Path, set: &RepresentationSet) -> Result<()> {
    let doc = RepresentationDocument {
        format: REPRESENTATION_FORMAT.into(),
        version: FORMAT_VERSION,
        set: set.clone(),
    };
    std::fs::write(path, serde_json::to_string(&doc)?)?;
    Ok(())
}

pub fn read_representation_set(path: &Path) -> Result<RepresentationSet> {
    let doc: RepresentationDocument = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if doc.format != REPRESENTATION_FORMAT || doc.version != FORMAT_VERSION {
        return Err(Error::parse(
            "format",
            0,
            format!("unsupported document {} v{}", doc.format, doc.version),
        ));
    }
    RepresentationSet::new(doc.set.names, doc.set.representations)
}

/// SHA-256 of a file, or of a directory's sorted `(relative path, digest)`
/// listing.
pub fn content_hash(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for e in entries {
            if e.file_name().is_some_and(|n| n == MANIFEST_NAME) {
                continue;
            }
            h.update(e.file_name().unwrap_or_default().as_encoded_bytes());
            h.update([0]);
            h.update(content_hash(&e)?.as_bytes());
        }
    } else {
        h.update(std::fs::read(path)?);
    }
    Ok(hex::encode(h.finalize()))
}

pub const MANIFEST_NAME: &str = "run-manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Provenance of one command run. No timestamps, so identical runs give
/// identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub config_hash: String,
}

impl RunManifest {
    /// `config` holds the effective flags; the hash covers the command,
    /// the flags and every input's content hash.
    pub fn new(command: &str, config: serde_json::Value, inputs: &[(&str, &Path)]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|(role, p)| {
                Ok(InputRecord {
                    role: role.to_string(),
                    path: p.display().to_string(),
                    sha256: content_hash(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let canon = serde_json::json!({
            "command": command,
            "config": config,
            "inputs": inputs.iter().map(|i| (&i.role, &i.sha256)).collect::<Vec<_>>(),
        });
        let config_hash = hex::encode(Sha256::digest(serde_json::to_vec(&canon)?));
        Ok(Self {
            tool: "splatue".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            inputs,
            outputs: Vec::new(),
            config_hash,
        })
    }

    /// Writes the manifest beside `output`: inside it for a directory,
    /// otherwise as `<output>.manifest.json`.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let path = if output.is_dir() {
            output.join(MANIFEST_NAME)
        } else {
            let mut s = output.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        };
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

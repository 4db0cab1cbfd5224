//! On-disk dataset layout.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/scene_0000/gt.json          ground-truth people
//! <dir>/scene_0000/joints.pwt       14-channel joint scores
//! <dir>/scene_0000/neighbors.pwt    364-channel neighbor offsets
//! <dir>/scene_0000/parts.pwt        7-channel part scores
//! <dir>/scene_0000/part_mask.pwt    composite part labels, one channel
//! <dir>/scene_0000/boxes.json       detection boxes
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use pweaver_core::pipeline::SynthItem;
use pweaver_core::synth::SceneRecord;
use pweaver_core::tensor::{read_tensor_file, write_tensor_file};
use pweaver_core::{DetectionBox, LabelMap, Scene, ScoreMapSet, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT: &str = "pweaver-dataset/1";
pub const SCENE_FILES: [&str; 6] = [
    "gt.json",
    "joints.pwt",
    "neighbors.pwt",
    "parts.pwt",
    "part_mask.pwt",
    "boxes.json",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub synth: SynthConfig,
    pub scenes: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxesFile {
    pub boxes: Vec<DetectionBox>,
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("malformed {}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::internal(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::input(format!("cannot create {}: {e}", path.display())))
}

fn tensor_in(path: &Path) -> Result<pweaver_core::Tensor3, Failure> {
    read_tensor_file(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn tensor_out(path: &Path, t: &pweaver_core::Tensor3) -> Result<(), Failure> {
    write_tensor_file(t, path).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<(), Failure> {
    tensor_out(path, &labels.to_tensor())
}

pub fn read_labels(path: &Path) -> Result<LabelMap, Failure> {
    LabelMap::from_tensor(&tensor_in(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// A dataset directory opened through its manifest.
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self, Failure> {
        let manifest: Manifest = parse_json(&root.join(MANIFEST))?;
        if manifest.format != FORMAT {
            return Err(Failure::input(format!(
                "{}: unsupported dataset format {:?}",
                root.display(),
                manifest.format
            )));
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.scenes.len()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.manifest.scenes[index].id
    }

    fn dir(&self, index: usize) -> PathBuf {
        self.root.join(self.id(index))
    }

    pub fn scene(&self, index: usize) -> Result<Scene, Failure> {
        let path = self.dir(index).join("gt.json");
        let rec: SceneRecord = parse_json(&path)?;
        Scene::from_json(&rec).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }

    pub fn maps(&self, index: usize) -> Result<ScoreMapSet, Failure> {
        let dir = self.dir(index);
        let joints = tensor_in(&dir.join("joints.pwt"))?;
        let neighbors = tensor_in(&dir.join("neighbors.pwt"))?;
        let parts = tensor_in(&dir.join("parts.pwt"))?;
        ScoreMapSet::new(joints, neighbors, parts).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))
    }

    pub fn boxes(&self, index: usize) -> Result<Vec<DetectionBox>, Failure> {
        let file: BoxesFile = parse_json(&self.dir(index).join("boxes.json"))?;
        Ok(file.boxes)
    }
}

/// Writes one generated scene and returns its manifest entry.
pub fn write_scene(root: &Path, index: usize, item: &SynthItem) -> Result<ManifestEntry, Failure> {
    let id = scene_id(index);
    let dir = root.join(&id);
    create_dir(&dir)?;
    write_json(&dir.join("gt.json"), &item.scene.to_json())?;
    tensor_out(&dir.join("joints.pwt"), &item.maps.joints)?;
    tensor_out(&dir.join("neighbors.pwt"), &item.maps.neighbors)?;
    tensor_out(&dir.join("parts.pwt"), &item.maps.parts)?;
    write_labels(&dir.join("part_mask.pwt"), &item.scene.composite().labels)?;
    write_json(
        &dir.join("boxes.json"),
        &BoxesFile {
            boxes: item.boxes.clone(),
        },
    )?;
    Ok(ManifestEntry {
        id,
        files: SCENE_FILES.iter().map(|f| f.to_string()).collect(),
    })
}

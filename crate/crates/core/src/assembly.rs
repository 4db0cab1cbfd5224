//! From solver output to scene-level results: pose extraction and selection,
//! pose NMS, pose feature maps, and pose-guided part refinement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::body::{JointType, Part, NUM_JOINTS, NUM_PARTS, SKELETON_EDGES};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Point, Rect, Similarity};
use crate::inference::{AssemblyProblem, Labeling, PROB_EPS};
use crate::pairwise::JointPartAssociation;
use crate::proposals::{DetectionBox, ZoomedRegion};
use crate::tensor::{argmax_channel, LabelMap, Tensor3};

/// Probability substituted for a joint the pose does not contain.
pub const MISSING_JOINT_SCORE: f64 = 0.2;
pub const JOINT_RADIUS: f64 = 3.0;
pub const STICK_HALF_WIDTH: f64 = 3.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseConfiguration {
    /// Scene coordinates.
    pub joints: [Option<Point>; NUM_JOINTS],
    pub score: f64,
    pub source_box: usize,
}

impl PoseConfiguration {
    pub fn joint(&self, j: JointType) -> Option<Point> {
        self.joints[j.index()]
    }

    pub fn present(&self) -> impl Iterator<Item = Point> + '_ {
        self.joints.iter().flatten().copied()
    }

    pub fn centroid(&self) -> Option<Point> {
        let (mut sum, mut n) = (Point::new(0.0, 0.0), 0usize);
        for p in self.present() {
            sum = sum + p;
            n += 1;
        }
        (n > 0).then(|| sum.scale(1.0 / n as f64))
    }

    pub fn mapped(&self, f: impl Fn(Point) -> Point) -> Self {
        PoseConfiguration {
            joints: self.joints.map(|p| p.map(&f)),
            ..self.clone()
        }
    }
}

/// Pose score from per-joint probabilities; `None` marks a missing joint,
/// which counts as probability `missing`.
pub fn pose_score(probs: &[Option<f64>; NUM_JOINTS], missing: f64) -> f64 {
    probs
        .iter()
        .map(|p| match p {
            Some(p) => p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln(),
            None => missing.ln(),
        })
        .sum()
}

/// One pose per person in the labeling, in scene coordinates.
pub fn extract_poses(
    l: &Labeling,
    problem: &AssemblyProblem,
    to_scene: &Similarity,
    source_box: usize,
    missing: f64,
) -> Vec<PoseConfiguration> {
    l.clusters()
        .into_iter()
        .map(|members| {
            let mut joints = [None; NUM_JOINTS];
            let mut probs = [None; NUM_JOINTS];
            for i in members {
                let node = &problem.nodes[i];
                let t = node.joint_type.index();
                joints[t] = Some(to_scene.apply(node.location));
                probs[t] = Some(node.score);
            }
            PoseConfiguration {
                joints,
                score: pose_score(&probs, missing),
                source_box,
            }
        })
        .collect()
}

/// The pose whose joint centroid is nearest the box center; higher score wins ties.
pub fn select_per_box(poses: &[PoseConfiguration], det: &DetectionBox) -> Option<PoseConfiguration> {
    let center = det.rect.center();
    let mut best: Option<(f64, &PoseConfiguration)> = None;
    for pose in poses {
        let Some(c) = pose.centroid() else { continue };
        let d = c.dist(center);
        let better = match best {
            None => true,
            Some((bd, bp)) => d < bd - 1e-9 || ((d - bd).abs() <= 1e-9 && pose.score > bp.score),
        };
        if better {
            best = Some((d, pose));
        }
    }
    best.map(|(_, p)| p.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseBoxes {
    pub head: Option<Rect>,
    pub upper: Option<Rect>,
    pub lower: Option<Rect>,
    pub whole: Option<Rect>,
}

const UPPER_BODY: [JointType; 7] = [
    JointType::Neck,
    JointType::LShoulder,
    JointType::RShoulder,
    JointType::LElbow,
    JointType::RElbow,
    JointType::LWrist,
    JointType::RWrist,
];
const LOWER_BODY: [JointType; 6] = [
    JointType::LWaist,
    JointType::RWaist,
    JointType::LKnee,
    JointType::RKnee,
    JointType::LAnkle,
    JointType::RAnkle,
];

pub fn derive_boxes(joints: &[Option<Point>; NUM_JOINTS]) -> PoseBoxes {
    let group = |types: &[JointType]| Rect::bounding(types.iter().filter_map(|t| joints[t.index()]));
    let head = match (joints[JointType::Forehead.index()], joints[JointType::Neck.index()]) {
        (Some(f), Some(n)) => {
            let s = f.dist(n) / 2.0;
            Rect::bounding([f, n]).map(|r| r.expand(s, s))
        }
        _ => None,
    };
    PoseBoxes {
        head,
        upper: group(&UPPER_BODY),
        lower: group(&LOWER_BODY),
        whole: Rect::bounding(joints.iter().flatten().copied()),
    }
}

pub fn derive_pose_boxes(pose: &PoseConfiguration) -> PoseBoxes {
    derive_boxes(&pose.joints)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseNmsConfig {
    pub head: f64,
    pub upper: f64,
    pub lower: f64,
    pub whole: f64,
}

impl Default for PoseNmsConfig {
    fn default() -> Self {
        PoseNmsConfig {
            head: 0.65,
            upper: 0.5,
            lower: 0.5,
            whole: 0.4,
        }
    }
}

fn overlap_exceeds(a: Option<Rect>, b: Option<Rect>, threshold: f64) -> bool {
    matches!((a, b), (Some(a), Some(b)) if a.iou(&b) > threshold)
}

pub fn suppresses(a: &PoseBoxes, b: &PoseBoxes, cfg: &PoseNmsConfig) -> bool {
    overlap_exceeds(a.head, b.head, cfg.head)
        || overlap_exceeds(a.upper, b.upper, cfg.upper)
        || overlap_exceeds(a.lower, b.lower, cfg.lower)
        || overlap_exceeds(a.whole, b.whole, cfg.whole)
}

/// Greedy suppression in descending score order (input order breaks ties).
pub fn pose_nms(poses: &[PoseConfiguration], cfg: &PoseNmsConfig) -> Vec<PoseConfiguration> {
    let mut order: Vec<usize> = (0..poses.len()).collect();
    order.sort_by(|&a, &b| poses[b].score.total_cmp(&poses[a].score).then(a.cmp(&b)));
    let mut kept: Vec<(PoseBoxes, &PoseConfiguration)> = Vec::new();
    for i in order {
        let boxes = derive_pose_boxes(&poses[i]);
        if kept.iter().all(|(k, _)| !suppresses(k, &boxes, cfg)) {
            kept.push((boxes, &poses[i]));
        }
    }
    kept.into_iter().map(|(_, p)| p.clone()).collect()
}

/// Calls `f(row, col)` for every pixel within `radius` of the segment `a`-`b`.
fn for_pixels_near(h: usize, w: usize, a: Point, b: Point, radius: f64, mut f: impl FnMut(usize, usize)) {
    let x0 = (a.x.min(b.x) - radius).floor().max(0.0);
    let y0 = (a.y.min(b.y) - radius).floor().max(0.0);
    let x1 = (a.x.max(b.x) + radius).ceil().min(w as f64 - 1.0);
    let y1 = (a.y.max(b.y) + radius).ceil().min(h as f64 - 1.0);
    if x1 < x0 || y1 < y0 {
        return;
    }
    for r in y0 as usize..=y1 as usize {
        for c in x0 as usize..=x1 as usize {
            if point_segment_distance(Point::new(c as f64, r as f64), a, b) <= radius {
                f(r, c);
            }
        }
    }
}

/// Two-channel map: joint discs (channel 0) and skeleton sticks (channel 1).
/// Pose coordinates are pixel coordinates of the output grid.
pub fn rasterize_pose_features(poses: &[PoseConfiguration], height: usize, width: usize) -> Tensor3 {
    let mut t = Tensor3::zeros(height, width, 2);
    for pose in poses {
        for p in pose.present() {
            for_pixels_near(height, width, p, p, JOINT_RADIUS, |r, c| t.set(r, c, 0, 1.0));
        }
        for &(a, b) in &SKELETON_EDGES {
            if let (Some(pa), Some(pb)) = (pose.joint(a), pose.joint(b)) {
                for_pixels_near(height, width, pa, pb, STICK_HALF_WIDTH, |r, c| t.set(r, c, 1, 1.0));
            }
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineWeights {
    pub stick: f64,
    pub joint: f64,
}

impl Default for RefineWeights {
    fn default() -> Self {
        RefineWeights { stick: 0.5, joint: 0.5 }
    }
}

/// Part scores plus per-part pose priors. Sticks support the part of their
/// edge; joint discs support every part the joint is associated with.
/// `pose_feats` gates where priors can apply; background is never changed.
pub fn refine_part_scores(
    parts: &Tensor3,
    pose_feats: &Tensor3,
    poses: &[PoseConfiguration],
    assoc: &JointPartAssociation,
    weights: &RefineWeights,
) -> Result<Tensor3> {
    let (h, w) = (parts.height(), parts.width());
    if parts.channels() != NUM_PARTS
        || pose_feats.channels() != 2
        || pose_feats.height() != h
        || pose_feats.width() != w
    {
        return Err(Error::argument("part scores and pose features must share a grid"));
    }
    let mut stick = vec![0u8; h * w];
    let mut disc = vec![0u8; h * w];
    for pose in poses {
        for jt in JointType::ALL {
            let Some(p) = pose.joint(jt) else { continue };
            let mut bits = 0u8;
            for part in assoc.joints[jt.index()].iter().flatten() {
                bits |= 1 << part.label();
            }
            for_pixels_near(h, w, p, p, JOINT_RADIUS, |r, c| disc[r * w + c] |= bits);
        }
        for (e, &(a, b)) in SKELETON_EDGES.iter().enumerate() {
            if let (Some(pa), Some(pb)) = (pose.joint(a), pose.joint(b)) {
                let bit = 1u8 << assoc.edges[e].label();
                for_pixels_near(h, w, pa, pb, STICK_HALF_WIDTH, |r, c| stick[r * w + c] |= bit);
            }
        }
    }
    let mut out = parts.clone();
    for r in 0..h {
        for c in 0..w {
            let on_disc = pose_feats.get(r, c, 0) > 0.0;
            let on_stick = pose_feats.get(r, c, 1) > 0.0;
            if !on_disc && !on_stick {
                continue;
            }
            let px = out.pixel_mut(r, c);
            for part in Part::ALL.iter().skip(1) {
                let bit = 1u8 << part.label();
                let mut add = 0.0;
                if on_stick && stick[r * w + c] & bit != 0 {
                    add += weights.stick;
                }
                if on_disc && disc[r * w + c] & bit != 0 {
                    add += weights.joint;
                }
                px[part.label() as usize] += add as f32;
            }
        }
    }
    Ok(out)
}

/// Refined part labels; see [`refine_part_scores`].
pub fn refine_parts(
    parts: &Tensor3,
    pose_feats: &Tensor3,
    poses: &[PoseConfiguration],
    assoc: &JointPartAssociation,
    weights: &RefineWeights,
) -> Result<LabelMap> {
    Ok(argmax_channel(&refine_part_scores(
        parts, pose_feats, poses, assoc, weights,
    )?))
}

/// Part scores on a region grid together with its placement in the scene.
#[derive(Debug, Clone)]
pub struct RegionPartScores {
    pub to_scene: Similarity,
    pub scene_rect: Rect,
    pub scores: Tensor3,
}

impl RegionPartScores {
    pub fn new(region: &ZoomedRegion<'_>, scores: Tensor3) -> Self {
        RegionPartScores {
            to_scene: region.to_scene,
            scene_rect: region.scene_rect,
            scores,
        }
    }
}

/// Averages region part scores over the scene pixels each region covers;
/// uncovered pixels keep `scene_parts`.
pub fn merge_part_score_maps(scene_parts: &Tensor3, regions: &[RegionPartScores]) -> Result<Tensor3> {
    let (h, w, ch) = (scene_parts.height(), scene_parts.width(), scene_parts.channels());
    let mut sum = vec![0.0f64; h * w * ch];
    let mut count = vec![0u32; h * w];
    let mut buf = vec![0.0f32; ch];
    for reg in regions {
        if reg.scores.channels() != ch {
            return Err(Error::argument("region and scene part maps differ in channel count"));
        }
        let r = reg.scene_rect;
        let x0 = r.x.ceil().max(0.0) as usize;
        let y0 = r.y.ceil().max(0.0) as usize;
        let x1 = (r.x1() + 1e-9).floor().min(w as f64 - 1.0);
        let y1 = (r.y1() + 1e-9).floor().min(h as f64 - 1.0);
        if x1 < x0 as f64 || y1 < y0 as f64 {
            continue;
        }
        for row in y0..=y1 as usize {
            for col in x0..=x1 as usize {
                let q = reg.to_scene.invert(Point::new(col as f64, row as f64));
                reg.scores.sample_into(q.x, q.y, &mut buf);
                let base = (row * w + col) * ch;
                for (s, v) in sum[base..base + ch].iter_mut().zip(&buf) {
                    *s += *v as f64;
                }
                count[row * w + col] += 1;
            }
        }
    }
    let mut out = scene_parts.clone();
    for (i, &n) in count.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let (row, col) = (i / w, i % w);
        for (k, v) in out.pixel_mut(row, col).iter_mut().enumerate() {
            *v = (sum[i * ch + k] / n as f64) as f32;
        }
    }
    Ok(out)
}

pub fn merge_part_scores(scene_parts: &Tensor3, regions: &[RegionPartScores]) -> Result<LabelMap> {
    Ok(argmax_channel(&merge_part_score_maps(scene_parts, regions)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PoseRecord {
    joints: BTreeMap<String, Option<[f64; 2]>>,
    score: f64,
    #[serde(rename = "box")]
    source_box: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PoseFile {
    poses: Vec<PoseRecord>,
}

pub fn poses_to_json(poses: &[PoseConfiguration]) -> Result<String> {
    let file = PoseFile {
        poses: poses
            .iter()
            .map(|p| PoseRecord {
                joints: JointType::ALL
                    .iter()
                    .map(|j| (j.name().to_string(), p.joint(*j).map(|q| [q.x, q.y])))
                    .collect(),
                score: p.score,
                source_box: p.source_box,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn poses_from_json(text: &str) -> Result<Vec<PoseConfiguration>> {
    let file: PoseFile = serde_json::from_str(text)?;
    file.poses
        .into_iter()
        .map(|rec| {
            let mut joints = [None; NUM_JOINTS];
            for (name, loc) in rec.joints {
                let jt = JointType::from_name(&name)
                    .ok_or_else(|| Error::format("poses", format!("unknown joint {name:?}")))?;
                if let Some([x, y]) = loc {
                    if !x.is_finite() || !y.is_finite() {
                        return Err(Error::format("poses", "non-finite joint coordinate"));
                    }
                    joints[jt.index()] = Some(Point::new(x, y));
                }
            }
            if !rec.score.is_finite() {
                return Err(Error::format("poses", "non-finite score"));
            }
            Ok(PoseConfiguration {
                joints,
                score: rec.score,
                source_box: rec.source_box,
            })
        })
        .collect()
}

const PART_COLORS: [[u8; 3]; NUM_PARTS] = [
    [0, 0, 0],
    [220, 60, 60],
    [60, 160, 60],
    [60, 90, 220],
    [230, 200, 40],
    [180, 60, 200],
    [40, 200, 200],
];

/// Binary PPM of the part labels with skeletons drawn in white.
pub fn render_overlay(labels: &LabelMap, poses: &[PoseConfiguration]) -> Vec<u8> {
    let (h, w) = (labels.height, labels.width);
    let mut rgb: Vec<[u8; 3]> = labels
        .labels
        .iter()
        .map(|&l| PART_COLORS[(l as usize).min(NUM_PARTS - 1)])
        .collect();
    for pose in poses {
        for &(a, b) in &SKELETON_EDGES {
            if let (Some(pa), Some(pb)) = (pose.joint(a), pose.joint(b)) {
                for_pixels_near(h, w, pa, pb, 0.5, |r, c| rgb[r * w + c] = [255, 255, 255]);
            }
        }
        for p in pose.present() {
            for_pixels_near(h, w, p, p, 1.5, |r, c| rgb[r * w + c] = [255, 128, 0]);
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(rgb.iter().flatten());
    out
}

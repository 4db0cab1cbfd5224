//! Detection-box filtering, auto-zoom into a canonical-size region, and joint
//! candidate generation by non-maximum suppression on the joint score map.

use serde::{Deserialize, Serialize};

use crate::body::{JointType, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect, Similarity};
use crate::tensor::{crop_resize, neighbor_channel, ScoreMapSet, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub rect: Rect,
    pub score: f64,
}

impl DetectionBox {
    pub fn new(rect: Rect, score: f64) -> Self {
        DetectionBox { rect, score }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxFilterConfig {
    pub score_threshold: f64,
    pub iou_threshold: f64,
}

impl Default for BoxFilterConfig {
    fn default() -> Self {
        BoxFilterConfig {
            score_threshold: 0.6,
            iou_threshold: 0.6,
        }
    }
}

/// Drops low-scoring boxes, then greedy NMS by descending score.
pub fn filter_boxes(boxes: &[DetectionBox], cfg: &BoxFilterConfig) -> Vec<DetectionBox> {
    let mut order: Vec<usize> = (0..boxes.len())
        .filter(|&i| boxes[i].score >= cfg.score_threshold)
        .collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b)));
    let mut kept: Vec<DetectionBox> = Vec::new();
    for i in order {
        let cand = boxes[i];
        if kept.iter().all(|k| k.rect.iou(&cand.rect) <= cfg.iou_threshold) {
            kept.push(cand);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZoomConfig {
    /// Total padding as a fraction of box size, split evenly between sides.
    pub pad: f64,
    pub target_height: f64,
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for ZoomConfig {
    fn default() -> Self {
        ZoomConfig {
            pad: 0.2,
            target_height: 256.0,
            min_scale: 0.4,
            max_scale: 4.0,
        }
    }
}

impl ZoomConfig {
    /// Region pixels per scene pixel for a box of the given height.
    pub fn scale_for(&self, box_height: f64) -> f64 {
        (self.target_height / (box_height * (1.0 + self.pad))).clamp(self.min_scale, self.max_scale)
    }
}

/// A detection box resampled to canonical resolution.
///
/// Joint and part scores are resampled eagerly. Neighbor offsets are sampled
/// from the scene map on demand (see [`ZoomedRegion::neighbor_offset`]) and
/// rescaled into region pixels.
#[derive(Debug, Clone)]
pub struct ZoomedRegion<'a> {
    pub source_box: DetectionBox,
    /// Region pixels per scene pixel.
    pub scale: f64,
    pub joints: Tensor3,
    pub parts: Tensor3,
    scene_neighbors: &'a Tensor3,
    pub to_scene: Similarity,
    /// Scene-coordinate rectangle covered by the region grid.
    pub scene_rect: Rect,
}

impl<'a> ZoomedRegion<'a> {
    /// The whole scene at its own resolution.
    pub fn whole_scene(maps: &'a ScoreMapSet) -> Self {
        let extent = maps.joints.extent();
        ZoomedRegion {
            source_box: DetectionBox::new(extent, 1.0),
            scale: 1.0,
            joints: maps.joints.clone(),
            parts: maps.parts.clone(),
            scene_neighbors: &maps.neighbors,
            to_scene: Similarity::IDENTITY,
            scene_rect: extent,
        }
    }

    pub fn height(&self) -> usize {
        self.joints.height()
    }

    pub fn width(&self) -> usize {
        self.joints.width()
    }

    pub fn in_bounds(&self, p: Point) -> bool {
        self.joints.in_bounds(p.x, p.y)
    }

    /// Predicted displacement (region pixels) from a `from` joint at `at` to its `to` neighbor.
    pub fn neighbor_offset(&self, at: Point, from: JointType, to: JointType) -> Point {
        let s = self.to_scene.apply(at);
        let n = self.scene_neighbors;
        let dx = n.sample(s.x, s.y, neighbor_channel(from, to, 0));
        let dy = n.sample(s.x, s.y, neighbor_channel(from, to, 1));
        Point::new(dx * self.scale, dy * self.scale)
    }

    /// Dense neighbor map on the region grid, resampled like the other maps.
    pub fn materialize_neighbors(&self) -> Result<Tensor3> {
        let mut t = crop_resize(self.scene_neighbors, self.scene_rect, self.height(), self.width())?;
        let s = self.scale as f32;
        t.data_mut().iter_mut().for_each(|v| *v *= s);
        Ok(t)
    }
}

/// Pads the box, picks a uniform scale bringing it to the target height, and
/// resamples the score maps of the (scene-clamped) padded box.
pub fn auto_zoom<'a>(det: &DetectionBox, maps: &'a ScoreMapSet, cfg: &ZoomConfig) -> Result<ZoomedRegion<'a>> {
    let r = det.rect;
    if !r.is_finite() || r.w <= 0.0 || r.h <= 0.0 {
        return Err(Error::argument(format!("degenerate detection box {r:?}")));
    }
    let padded = r.expand(r.w * cfg.pad / 2.0, r.h * cfg.pad / 2.0);
    let scale = cfg.scale_for(r.h);
    let clip = padded
        .intersect(&maps.joints.extent())
        .ok_or_else(|| Error::argument(format!("detection box {r:?} lies outside the scene")))?;
    let out_h = (clip.h * scale).floor() as usize + 1;
    let out_w = (clip.w * scale).floor() as usize + 1;
    let sampled = Rect::new(clip.x, clip.y, (out_w - 1) as f64 / scale, (out_h - 1) as f64 / scale);
    Ok(ZoomedRegion {
        source_box: *det,
        scale,
        joints: crop_resize(&maps.joints, sampled, out_h, out_w)?,
        parts: crop_resize(&maps.parts, sampled, out_h, out_w)?,
        scene_neighbors: &maps.neighbors,
        to_scene: Similarity {
            origin: Point::new(clip.x, clip.y),
            step: 1.0 / scale,
        },
        scene_rect: sampled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointProposal {
    /// Region pixels, refined to subpixel precision.
    pub location: Point,
    pub joint_type: JointType,
    /// Joint score at the peak pixel.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalConfig {
    pub score_threshold: f64,
    pub min_distance: f64,
    pub max_per_type: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            score_threshold: 0.2,
            min_distance: 16.0,
            max_per_type: 6,
        }
    }
}

/// Local maxima of one channel: strictly above every 8-neighbor, or equal to
/// a neighbor that comes later in `(row, col)` order.
fn local_maxima(t: &Tensor3, ch: usize, threshold: f64) -> Vec<(usize, usize, f32)> {
    let (h, w) = (t.height(), t.width());
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = t.get(r, c, ch);
            if (v as f64) < threshold {
                continue;
            }
            let mut is_max = true;
            'scan: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    let u = t.get(rr as usize, cc as usize, ch);
                    if u > v || (u == v && (rr, cc) < (r as i64, c as i64)) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                out.push((r, c, v));
            }
        }
    }
    out
}

/// Vertex offset of the parabola through three samples, in `[-0.5, 0.5]`.
/// Uses log scores when all are positive, which is exact for Gaussian peaks.
fn peak_offset(l: f64, c: f64, r: f64) -> f64 {
    const TINY: f64 = 1e-6;
    let (l, c, r) = if l > TINY && c > TINY && r > TINY {
        (l.ln(), c.ln(), r.ln())
    } else {
        (l, c, r)
    };
    let denom = l - 2.0 * c + r;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
}

fn refine(t: &Tensor3, ch: usize, r: usize, c: usize) -> Point {
    let v = t.get(r, c, ch) as f64;
    let mut x = c as f64;
    let mut y = r as f64;
    if c > 0 && c + 1 < t.width() {
        x += peak_offset(t.get(r, c - 1, ch) as f64, v, t.get(r, c + 1, ch) as f64);
    }
    if r > 0 && r + 1 < t.height() {
        y += peak_offset(t.get(r - 1, c, ch) as f64, v, t.get(r + 1, c, ch) as f64);
    }
    Point::new(x, y)
}

/// Up to `max_per_type` well-separated peaks per joint type.
pub fn propose_joints(region: &ZoomedRegion<'_>, cfg: &ProposalConfig) -> Vec<JointProposal> {
    propose_from_map(&region.joints, cfg)
}

pub fn propose_from_map(joints: &Tensor3, cfg: &ProposalConfig) -> Vec<JointProposal> {
    let mut out = Vec::new();
    for jt in JointType::ALL.iter().take(NUM_JOINTS) {
        let ch = jt.index();
        let mut peaks = local_maxima(joints, ch, cfg.score_threshold);
        peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        let mut kept: Vec<JointProposal> = Vec::new();
        for (r, c, v) in peaks {
            if kept.len() == cfg.max_per_type {
                break;
            }
            let loc = refine(joints, ch, r, c);
            if kept.iter().all(|k| k.location.dist(loc) > cfg.min_distance) {
                kept.push(JointProposal {
                    location: loc,
                    joint_type: *jt,
                    score: v as f64,
                });
            }
        }
        out.extend(kept);
    }
    out
}

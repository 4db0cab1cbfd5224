//! Synthetic multi-person scenes and the score maps a pose/part network would
//! produce for them.
//!
//! People are articulated stick figures drawn from a [`SkeletonModel`]; their
//! part masks are oriented rectangles (limbs), a quadrilateral (torso), and a
//! disc (head). [`render_score_maps`] corrupts the ground truth into joint,
//! neighbor-offset, and part score maps according to a [`NoiseSpec`].
//!
//! The neighbor map at a pixel carries the inter-joint offsets of the person
//! whose skeleton passes nearest to that pixel. Real networks are unobservable
//! in this respect; the nearest-person rule is an assumption.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::body::{JointType, Part, NUM_EDGES, NUM_JOINTS, NUM_PARTS, SKELETON_EDGES};
use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, point_segment_distance, OrientedRect, Point, Rect};
use crate::tensor::{neighbor_channel, LabelMap, ScoreMapSet, Tensor3, NEIGHBOR_CHANNELS};

/// Limb mask width as a fraction of limb length.
pub const LIMB_WIDTH_RATIO: f64 = 0.35;
/// Head disc radius as a fraction of the forehead–neck distance.
pub const HEAD_RADIUS_RATIO: f64 = 0.6;
const PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonModel {
    pub edges: Vec<(JointType, JointType)>,
    /// Pixels at unit person scale, indexed like `edges`.
    pub limb_length_mean: Vec<f64>,
    pub limb_length_sd: Vec<f64>,
    /// Absolute direction range (radians, image y down) from the joint nearer
    /// the neck to the farther one.
    pub joint_angle_ranges: Vec<(f64, f64)>,
    /// Per-person uniform scale multiplier range.
    pub scale_range: (f64, f64),
}

impl Default for SkeletonModel {
    fn default() -> Self {
        const D: f64 = FRAC_PI_2;
        let means = [
            24.0, 18.0, 18.0, 26.0, 26.0, 24.0, 24.0, 50.0, 50.0, 36.0, 36.0, 34.0, 34.0,
        ];
        SkeletonModel {
            edges: SKELETON_EDGES.to_vec(),
            limb_length_mean: means.to_vec(),
            limb_length_sd: means.iter().map(|m| m * 0.06).collect(),
            joint_angle_ranges: vec![
                (-D - 0.25, -D + 0.25),
                (-0.2, 0.2),
                (PI - 0.2, PI + 0.2),
                (D - 0.7, D + 0.2),
                (D - 0.2, D + 0.7),
                (D - 0.9, D + 0.4),
                (D - 0.4, D + 0.9),
                (D - 0.28, D - 0.12),
                (D + 0.12, D + 0.28),
                (D - 0.35, D + 0.15),
                (D - 0.15, D + 0.35),
                (D - 0.25, D + 0.25),
                (D - 0.25, D + 0.25),
            ],
            scale_range: (0.28, 0.45),
        }
    }
}

impl SkeletonModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.edges.len();
        if n != NUM_EDGES
            || self.limb_length_mean.len() != n
            || self.limb_length_sd.len() != n
            || self.joint_angle_ranges.len() != n
        {
            return Err(Error::argument(
                "skeleton model needs 13 edges with per-edge parameters",
            ));
        }
        if self.limb_length_mean.iter().any(|&m| m.is_nan() || m <= 0.0)
            || self.limb_length_sd.iter().any(|&s| s.is_nan() || s < 0.0)
        {
            return Err(Error::argument("limb lengths must be positive"));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::argument("scale range must be positive and ordered"));
        }
        if self.kinematic_order().len() != NUM_EDGES {
            return Err(Error::argument("skeleton edges must form a tree over all 14 joints"));
        }
        Ok(())
    }

    /// Edges as `(from, to, edge index)` in breadth-first order from the neck.
    fn kinematic_order(&self) -> Vec<(JointType, JointType, usize)> {
        let mut seen = [false; NUM_JOINTS];
        let mut order = Vec::with_capacity(NUM_EDGES);
        let mut queue = VecDeque::from([JointType::Neck]);
        seen[JointType::Neck.index()] = true;
        while let Some(j) = queue.pop_front() {
            for (e, &(a, b)) in self.edges.iter().enumerate() {
                let other = if a == j {
                    b
                } else if b == j {
                    a
                } else {
                    continue;
                };
                if !seen[other.index()] {
                    seen[other.index()] = true;
                    order.push((j, other, e));
                    queue.push_back(other);
                }
            }
        }
        if seen.iter().all(|&s| s) {
            order
        } else {
            Vec::new()
        }
    }
}

/// Canvas dimensions plus the minimum gap kept between people's extents
/// (negative values permit overlap).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub height: usize,
    pub width: usize,
    pub min_gap: f64,
}

impl Canvas {
    pub fn new(height: usize, width: usize) -> Self {
        Canvas {
            height,
            width,
            min_gap: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPerson {
    pub joints: [Point; NUM_JOINTS],
    pub visible: [bool; NUM_JOINTS],
    /// Full-canvas part labels of this person alone (no occlusion).
    pub part_mask: LabelMap,
    /// Tight box over the nonzero mask pixels, in pixel-center coordinates.
    pub bbox: Rect,
    pub depth_rank: usize,
}

impl GroundTruthPerson {
    pub fn joint(&self, j: JointType) -> Option<Point> {
        self.visible[j.index()].then(|| self.joints[j.index()])
    }

    /// Half the forehead–neck distance, when both are visible.
    pub fn reference_scale(&self) -> Option<f64> {
        let f = self.joint(JointType::Forehead)?;
        let n = self.joint(JointType::Neck)?;
        Some(f.dist(n) / 2.0)
    }

    /// Builds a person from joint locations, rendering its part mask.
    pub fn from_joints(joints: [Option<Point>; NUM_JOINTS], depth_rank: usize, height: usize, width: usize) -> Self {
        let visible = joints.map(|j| {
            j.is_some_and(|p| p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64)
        });
        let pts = joints.map(|j| j.unwrap_or_default());
        let mut mask = LabelMap::new(height, width);
        for shape in person_shapes(&pts, &joints.map(|j| j.is_some())) {
            shape.paint(&mut mask);
        }
        let bbox =
            mask_bbox(&mask).unwrap_or_else(|| Rect::bounding(joints.iter().flatten().copied()).unwrap_or_default());
        GroundTruthPerson {
            joints: pts,
            visible,
            part_mask: mask,
            bbox,
            depth_rank,
        }
    }
}

fn mask_bbox(mask: &LabelMap) -> Option<Rect> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for r in 0..mask.height {
        for c in 0..mask.width {
            if mask.get(r, c) != 0 {
                x0 = x0.min(c);
                y0 = y0.min(r);
                x1 = x1.max(c);
                y1 = y1.max(r);
            }
        }
    }
    (x0 != usize::MAX).then(|| Rect::from_corners(x0 as f64, y0 as f64, x1 as f64, y1 as f64))
}

enum Shape {
    Limb(OrientedRect, Part),
    Torso([Point; 4]),
    Head(Point, f64),
}

impl Shape {
    fn bounds(&self) -> Rect {
        match self {
            Shape::Limb(r, _) => r.bounds(),
            Shape::Torso(q) => Rect::bounding(q.iter().copied()).expect("four corners"),
            Shape::Head(c, r) => Rect::new(c.x - r, c.y - r, 2.0 * r, 2.0 * r),
        }
    }

    fn part(&self) -> Part {
        match self {
            Shape::Limb(_, p) => *p,
            Shape::Torso(_) => Part::Torso,
            Shape::Head(..) => Part::Head,
        }
    }

    fn contains(&self, p: Point) -> bool {
        match self {
            Shape::Limb(r, _) => r.contains(p),
            Shape::Torso(q) => point_in_polygon(p, q),
            Shape::Head(c, r) => p.dist(*c) <= *r,
        }
    }

    fn paint(&self, mask: &mut LabelMap) {
        let b = self.bounds();
        let r0 = b.y.floor().max(0.0) as usize;
        let c0 = b.x.floor().max(0.0) as usize;
        let r1 = (b.y1().ceil() as i64).min(mask.height as i64 - 1);
        let c1 = (b.x1().ceil() as i64).min(mask.width as i64 - 1);
        if r1 < 0 || c1 < 0 {
            return;
        }
        let label = self.part().label();
        for r in r0..=r1 as usize {
            for c in c0..=c1 as usize {
                if self.contains(Point::new(c as f64, r as f64)) {
                    mask.set(r, c, label);
                }
            }
        }
    }
}

/// Part shapes in painting order; later shapes overwrite earlier ones.
fn person_shapes(j: &[Point; NUM_JOINTS], present: &[bool; NUM_JOINTS]) -> Vec<Shape> {
    use JointType::*;
    let has = |t: JointType| present[t.index()];
    let p = |t: JointType| j[t.index()];
    let mut shapes = Vec::new();
    if has(LShoulder) && has(RShoulder) && has(RWaist) && has(LWaist) {
        shapes.push(Shape::Torso([p(LShoulder), p(RShoulder), p(RWaist), p(LWaist)]));
    }
    let limbs = [
        (LWaist, LKnee, Part::UpperLeg),
        (RWaist, RKnee, Part::UpperLeg),
        (LKnee, LAnkle, Part::LowerLeg),
        (RKnee, RAnkle, Part::LowerLeg),
        (LShoulder, LElbow, Part::UpperArm),
        (RShoulder, RElbow, Part::UpperArm),
        (LElbow, LWrist, Part::LowerArm),
        (RElbow, RWrist, Part::LowerArm),
    ];
    for (a, b, part) in limbs {
        if has(a) && has(b) {
            let width = LIMB_WIDTH_RATIO * p(a).dist(p(b));
            shapes.push(Shape::Limb(
                OrientedRect {
                    a: p(a),
                    b: p(b),
                    width,
                },
                part,
            ));
        }
    }
    if has(Forehead) && has(Neck) {
        let center = (p(Forehead) + p(Neck)).scale(0.5);
        shapes.push(Shape::Head(center, HEAD_RADIUS_RATIO * p(Forehead).dist(p(Neck))));
    }
    shapes
}

/// Limb segments labeled with their part, for mask checks.
pub fn limb_segments(joints: &[Point; NUM_JOINTS]) -> Vec<(Point, Point, f64, Part)> {
    person_shapes(joints, &[true; NUM_JOINTS])
        .into_iter()
        .filter_map(|s| match s {
            Shape::Limb(r, part) => Some((r.a, r.b, r.width, part)),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub people: Vec<GroundTruthPerson>,
    pub seed: u64,
}

/// Occlusion-resolved view of a scene: composite part labels and, per pixel,
/// the index of the visible person (or `None`).
#[derive(Debug, Clone)]
pub struct Composite {
    pub labels: LabelMap,
    pub owner: Vec<Option<usize>>,
}

impl Scene {
    /// Paints people in ascending depth rank; later people occlude earlier ones.
    pub fn composite(&self) -> Composite {
        let mut labels = LabelMap::new(self.height, self.width);
        let mut owner = vec![None; self.height * self.width];
        let mut order: Vec<usize> = (0..self.people.len()).collect();
        order.sort_by_key(|&i| (self.people[i].depth_rank, i));
        for i in order {
            for (k, &l) in self.people[i].part_mask.labels.iter().enumerate() {
                if l != 0 {
                    labels.labels[k] = l;
                    owner[k] = Some(i);
                }
            }
        }
        Composite { labels, owner }
    }

    pub fn to_json(&self) -> SceneRecord {
        SceneRecord {
            height: self.height,
            width: self.width,
            seed: self.seed,
            people: self
                .people
                .iter()
                .map(|p| PersonRecord {
                    joints: JointType::ALL
                        .iter()
                        .map(|&j| (j.name().to_string(), p.joint(j).map(|q| [q.x, q.y])))
                        .collect(),
                    depth: p.depth_rank,
                })
                .collect(),
        }
    }

    /// Rebuilds a scene (re-rendering masks) from its JSON record.
    pub fn from_json(rec: &SceneRecord) -> Result<Scene> {
        if rec.height == 0 || rec.width == 0 {
            return Err(Error::format("height", "scene dims must be positive"));
        }
        let mut people = Vec::with_capacity(rec.people.len());
        for p in &rec.people {
            let mut joints = [None; NUM_JOINTS];
            for (name, loc) in &p.joints {
                let j = JointType::from_name(name)
                    .ok_or_else(|| Error::format("joints", format!("unknown joint `{name}`")))?;
                joints[j.index()] = loc.map(|[x, y]| Point::new(x, y));
            }
            people.push(GroundTruthPerson::from_joints(joints, p.depth, rec.height, rec.width));
        }
        Ok(Scene {
            height: rec.height,
            width: rec.width,
            people,
            seed: rec.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub seed: u64,
    pub people: Vec<PersonRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub joints: BTreeMap<String, Option<[f64; 2]>>,
    pub depth: usize,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn sample_pose(
    model: &SkeletonModel,
    order: &[(JointType, JointType, usize)],
    rng: &mut ChaCha8Rng,
) -> [Point; NUM_JOINTS] {
    let scale = uniform(rng, model.scale_range);
    let mut joints = [Point::default(); NUM_JOINTS];
    for &(from, to, e) in order {
        let len = (model.limb_length_mean[e] + model.limb_length_sd[e] * rng.sample::<f64, _>(StandardNormal))
            .max(0.3 * model.limb_length_mean[e])
            * scale;
        let angle = uniform(rng, model.joint_angle_ranges[e]);
        joints[to.index()] = joints[from.index()] + Point::new(angle.cos(), angle.sin()).scale(len);
    }
    joints
}

/// Samples `n_people` non-colliding people on the canvas. Deterministic in `seed`.
pub fn sample_scene(model: &SkeletonModel, n_people: usize, canvas: Canvas, seed: u64) -> Result<Scene> {
    model.validate()?;
    if n_people == 0 {
        return Err(Error::argument("a scene needs at least one person"));
    }
    let (h, w) = (canvas.height, canvas.width);
    let order = model.kinematic_order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extents: Vec<Rect> = Vec::new();
    let mut people = Vec::new();
    for rank in 0..n_people {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let pose = sample_pose(model, &order, &mut rng);
            let ext = person_shapes(&pose, &[true; NUM_JOINTS])
                .iter()
                .map(Shape::bounds)
                .reduce(|a, b| {
                    Rect::bounding([
                        Point::new(a.x, a.y),
                        Point::new(a.x1(), a.y1()),
                        Point::new(b.x, b.y),
                        Point::new(b.x1(), b.y1()),
                    ])
                    .unwrap()
                })
                .expect("person has shapes");
            let free_x = (w as f64 - 2.0) - ext.w;
            let free_y = (h as f64 - 2.0) - ext.h;
            if free_x <= 2.0 || free_y <= 2.0 {
                continue;
            }
            let ox = (rng.random_range(1.0..1.0 + free_x) - ext.x).round();
            let oy = (rng.random_range(1.0..1.0 + free_y) - ext.y).round();
            let shift = Point::new(ox, oy);
            let moved = Rect::new(ext.x + ox, ext.y + oy, ext.w, ext.h);
            let g = canvas.min_gap / 2.0;
            let clash = extents.iter().any(|e| {
                e.expand(g, g)
                    .intersect(&moved.expand(g, g))
                    .is_some_and(|r| r.area() > 0.0)
            });
            if clash {
                continue;
            }
            let joints = pose.map(|p| {
                let q = p + shift;
                Point::new(q.x.round(), q.y.round())
            });
            placed = Some((joints, moved));
            break;
        }
        let (joints, ext) = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place person {} of {n_people} on a {h}x{w} canvas",
                rank + 1
            ))
        })?;
        extents.push(ext);
        people.push(GroundTruthPerson::from_joints(joints.map(Some), rank, h, w));
    }
    Ok(Scene {
        height: h,
        width: w,
        people,
        seed,
    })
}

/// Corruption applied when turning ground truth into score maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Blob width in pixels; zero renders a single-pixel spike.
    pub joint_blob_sigma: f64,
    pub joint_score_peak: f64,
    pub background_noise_sd: f64,
    pub offset_noise_sd: f64,
    pub part_flip_rate: f64,
    pub false_peak_rate: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::moderate()
    }
}

impl NoiseSpec {
    /// No corruption: clean blobs, exact offsets, one-hot-like part scores.
    pub fn clean() -> Self {
        NoiseSpec {
            joint_blob_sigma: 2.0,
            joint_score_peak: 0.9,
            background_noise_sd: 0.0,
            offset_noise_sd: 0.0,
            part_flip_rate: 0.0,
            false_peak_rate: 0.0,
        }
    }

    pub fn moderate() -> Self {
        NoiseSpec {
            joint_blob_sigma: 2.0,
            joint_score_peak: 0.85,
            background_noise_sd: 0.04,
            offset_noise_sd: 8.0,
            part_flip_rate: 0.15,
            false_peak_rate: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.joint_blob_sigma,
            self.joint_score_peak,
            self.background_noise_sd,
            self.offset_noise_sd,
            self.part_flip_rate,
            self.false_peak_rate,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::argument("noise parameters must be finite and nonnegative"));
        }
        if self.joint_score_peak > 1.0 || self.part_flip_rate > 1.0 {
            return Err(Error::argument("peak and flip rate must not exceed 1"));
        }
        Ok(())
    }
}

/// Part score of the true label on a clean pixel.
const PART_TRUE: f32 = 0.76;
const PART_OTHER: f32 = 0.04;
/// On a flipped pixel the wrong label leads but the true one stays runner-up.
const FLIP_WRONG: f32 = 0.5;
const FLIP_TRUE: f32 = 0.3;
const FALSE_PEAK_RANGE: (f64, f64) = (0.25, 0.55);

fn add_blob(t: &mut Tensor3, ch: usize, at: Point, peak: f64, sigma: f64) {
    let (h, w) = (t.height() as i64, t.width() as i64);
    if sigma <= 0.0 {
        let (c, r) = at.round();
        if c >= 0 && r >= 0 && c < w && r < h {
            let v = t.get(r as usize, c as usize, ch);
            t.set(r as usize, c as usize, ch, v + peak as f32);
        }
        return;
    }
    let reach = (4.0 * sigma).ceil() as i64;
    let (cx, cy) = at.round();
    let inv = 1.0 / (2.0 * sigma * sigma);
    for r in (cy - reach).max(0)..=(cy + reach).min(h - 1) {
        for c in (cx - reach).max(0)..=(cx + reach).min(w - 1) {
            let d2 = (c as f64 - at.x).powi(2) + (r as f64 - at.y).powi(2);
            let v = t.get(r as usize, c as usize, ch);
            t.set(r as usize, c as usize, ch, v + (peak * (-d2 * inv).exp()) as f32);
        }
    }
}

/// Renders joint, neighbor, and part score maps for `scene`. Deterministic in `seed`.
pub fn render_score_maps(scene: &Scene, noise: &NoiseSpec, seed: u64) -> Result<ScoreMapSet> {
    noise.validate()?;
    let (h, w) = (scene.height, scene.width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut joints = Tensor3::zeros(h, w, NUM_JOINTS);
    for person in &scene.people {
        for j in JointType::ALL {
            if let Some(p) = person.joint(j) {
                add_blob(
                    &mut joints,
                    j.index(),
                    p,
                    noise.joint_score_peak,
                    noise.joint_blob_sigma,
                );
            }
        }
    }
    if noise.false_peak_rate > 0.0 {
        let count = Poisson::new(noise.false_peak_rate).map_err(|e| Error::argument(e.to_string()))?;
        for j in 0..NUM_JOINTS {
            let n = count.sample(&mut rng) as usize;
            for _ in 0..n {
                let at = Point::new(rng.random_range(0..w) as f64, rng.random_range(0..h) as f64);
                let peak = noise.joint_score_peak * rng.random_range(FALSE_PEAK_RANGE.0..FALSE_PEAK_RANGE.1);
                add_blob(&mut joints, j, at, peak, noise.joint_blob_sigma);
            }
        }
    }
    if noise.background_noise_sd > 0.0 {
        let n = Normal::new(0.0, noise.background_noise_sd).expect("validated sd");
        for v in joints.data_mut() {
            *v += n.sample(&mut rng) as f32;
        }
    }
    joints.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));

    let neighbors = render_neighbors(scene, noise.offset_noise_sd, &mut rng);

    let composite = scene.composite();
    let mut parts = Tensor3::zeros(h, w, NUM_PARTS);
    let part_noise =
        (noise.background_noise_sd > 0.0).then(|| Normal::new(0.0, noise.background_noise_sd).expect("validated sd"));
    for (k, px) in parts.data_mut().chunks_exact_mut(NUM_PARTS).enumerate() {
        let truth = composite.labels.labels[k] as usize;
        if noise.part_flip_rate > 0.0 && rng.random::<f64>() < noise.part_flip_rate {
            let mut wrong = rng.random_range(0..NUM_PARTS - 1);
            if wrong >= truth {
                wrong += 1;
            }
            px.fill(PART_OTHER);
            px[wrong] = FLIP_WRONG;
            px[truth] = FLIP_TRUE;
        } else {
            px.fill(PART_OTHER);
            px[truth] = PART_TRUE;
        }
        if let Some(n) = &part_noise {
            for v in px.iter_mut() {
                *v = (*v + n.sample(&mut rng) as f32).clamp(0.0, 1.0);
            }
        }
    }
    ScoreMapSet::new(joints, neighbors, parts)
}

fn render_neighbors(scene: &Scene, offset_sd: f64, rng: &mut ChaCha8Rng) -> Tensor3 {
    let (h, w) = (scene.height, scene.width);
    // Per person, the 364 offsets it predicts.
    let tables: Vec<[f32; NEIGHBOR_CHANNELS]> = scene
        .people
        .iter()
        .map(|p| {
            let mut t = [0f32; NEIGHBOR_CHANNELS];
            for from in JointType::ALL {
                for to in JointType::ALL {
                    if from == to {
                        continue;
                    }
                    if let (Some(a), Some(b)) = (p.joint(from), p.joint(to)) {
                        t[neighbor_channel(from, to, 0)] = (b.x - a.x) as f32;
                        t[neighbor_channel(from, to, 1)] = (b.y - a.y) as f32;
                    }
                }
            }
            t
        })
        .collect();
    let segments: Vec<Vec<(Point, Point)>> = scene
        .people
        .iter()
        .map(|p| {
            SKELETON_EDGES
                .iter()
                .filter_map(|&(a, b)| Some((p.joint(a)?, p.joint(b)?)))
                .collect()
        })
        .collect();
    let mut out = Tensor3::zeros(h, w, NEIGHBOR_CHANNELS);
    if scene.people.is_empty() {
        return out;
    }
    for r in 0..h {
        for c in 0..w {
            let q = Point::new(c as f64, r as f64);
            let nearest = segments
                .iter()
                .enumerate()
                .map(|(i, segs)| {
                    let d = segs
                        .iter()
                        .map(|&(a, b)| point_segment_distance(q, a, b))
                        .fold(f64::INFINITY, f64::min);
                    (d, i)
                })
                .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
                .1;
            out.pixel_mut(r, c).copy_from_slice(&tables[nearest]);
        }
    }
    if offset_sd > 0.0 {
        let sd = offset_sd as f32;
        for v in out.data_mut() {
            *v += sd * rng.sample::<f32, _>(StandardNormal);
        }
    }
    out
}

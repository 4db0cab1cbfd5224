//! Pairwise features between joint proposals and the logistic model turning
//! them into same-person probabilities.
//!
//! A pair feature has 12 entries: four geometric terms comparing the
//! displacement between the two proposals with the offsets predicted by the
//! neighbor map, then eight segment-consistency terms read from the part
//! label map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::body::{edge_index, edge_part, JointType, Part, NUM_EDGES, NUM_JOINTS, SKELETON_EDGES};
use crate::error::{Error, Result};
use crate::geometry::{angle_between, bresenham, OrientedRect, Point};
use crate::proposals::{JointProposal, ZoomedRegion};
use crate::tensor::LabelMap;

pub const FEATURE_DIM: usize = 12;
/// Radius of the band around a region border that counts as "near the boundary".
pub const BOUNDARY_BAND: f64 = 3.0;
/// Length-to-width ratio of the oriented limb rectangle.
pub const RECT_ASPECT: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairFeature {
    pub fn_part: [f64; 4],
    pub fs_part: [f64; 8],
}

impl PairFeature {
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[..4].copy_from_slice(&self.fn_part);
        out[4..].copy_from_slice(&self.fs_part);
        out
    }

    /// Feature used between two proposals of the same joint type.
    pub fn same_type(distance: f64) -> Self {
        let mut f = PairFeature::default();
        f.fn_part[0] = distance;
        f
    }

    /// The same feature with the segment-consistency half zeroed.
    pub fn without_segment(mut self) -> Self {
        self.fs_part = [0.0; 8];
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPartAssociation {
    pub joints: [[Option<Part>; 2]; NUM_JOINTS],
    pub edges: [Part; NUM_EDGES],
}

impl Default for JointPartAssociation {
    fn default() -> Self {
        use Part::*;
        let two = |a, b| [Some(a), Some(b)];
        let one = |a| [Some(a), None];
        JointPartAssociation {
            joints: [
                one(Head),
                two(Head, Torso),
                two(Torso, UpperArm),
                two(Torso, UpperArm),
                two(UpperArm, LowerArm),
                two(UpperArm, LowerArm),
                one(LowerArm),
                one(LowerArm),
                two(Torso, UpperLeg),
                two(Torso, UpperLeg),
                two(UpperLeg, LowerLeg),
                two(UpperLeg, LowerLeg),
                one(LowerLeg),
                one(LowerLeg),
            ],
            edges: std::array::from_fn(edge_part),
        }
    }
}

impl JointPartAssociation {
    pub fn primary(&self, jt: JointType) -> Part {
        self.joints[jt.index()][0].expect("every joint has a primary part")
    }

    pub fn edge(&self, a: JointType, b: JointType) -> Option<Part> {
        edge_index(a, b).map(|e| self.edges[e])
    }

    pub fn validate(&self) -> Result<()> {
        for (j, assoc) in self.joints.iter().enumerate() {
            if assoc[0].is_none() {
                return Err(Error::argument(format!("joint {j} has no associated part")));
            }
        }
        Ok(())
    }
}

/// Geometric agreement between the proposal displacement and the neighbor-map
/// prediction, evaluated from both endpoints.
pub fn neighbor_features(region: &ZoomedRegion<'_>, ci: &JointProposal, cj: &JointProposal) -> Result<[f64; 4]> {
    for c in [ci, cj] {
        if !region.in_bounds(c.location) {
            return Err(Error::argument(format!(
                "proposal at {:?} outside the region",
                c.location
            )));
        }
    }
    if ci.joint_type == cj.joint_type {
        return Err(Error::argument("neighbor features need distinct joint types"));
    }
    let v_ij = cj.location - ci.location;
    let v_ji = ci.location - cj.location;
    let p_ij = region.neighbor_offset(ci.location, ci.joint_type, cj.joint_type);
    let p_ji = region.neighbor_offset(cj.location, cj.joint_type, ci.joint_type);
    Ok(neighbor_terms(v_ij, p_ij, v_ji, p_ji))
}

fn neighbor_terms(v_ij: Point, p_ij: Point, v_ji: Point, p_ji: Point) -> [f64; 4] {
    [
        v_ji.dist(p_ji),
        v_ij.dist(p_ij),
        angle_between(v_ji, p_ji),
        angle_between(v_ij, p_ij),
    ]
}

/// Returns (inside, near-boundary) indicators of `p` against the pixels labeled `part`.
fn region_indicators(labels: &LabelMap, p: Point, part: Part) -> [f64; 2] {
    let target = part.label();
    let (px, py) = p.round();
    let inside = labels.at(px, py) == Some(target);
    let reach = BOUNDARY_BAND.ceil() as i64;
    let (mut near_in, mut near_out) = (false, false);
    for row in py - reach..=py + reach {
        for col in px - reach..=px + reach {
            let Some(label) = labels.at(col, row) else { continue };
            if Point::new(col as f64, row as f64).dist(p) >= BOUNDARY_BAND {
                continue;
            }
            if label == target {
                near_in = true;
            } else {
                near_out = true;
            }
        }
    }
    [inside as u8 as f64, (near_in && near_out) as u8 as f64]
}

fn line_fraction(labels: &LabelMap, a: Point, b: Point, part: Part) -> f64 {
    let line = bresenham(a.round(), b.round());
    let hits = line
        .iter()
        .filter(|&&(x, y)| labels.at(x, y) == Some(part.label()))
        .count();
    hits as f64 / line.len() as f64
}

/// Pixel IOU between the limb rectangle and the part region near it.
pub fn rect_iou(labels: &LabelMap, a: Point, b: Point, part: Part) -> f64 {
    let width = a.dist(b) / RECT_ASPECT;
    let rect = OrientedRect { a, b, width };
    let window = rect.bounds().expand(width, width);
    let x0 = window.x.floor().max(0.0) as i64;
    let y0 = window.y.floor().max(0.0) as i64;
    let x1 = (window.x1().ceil() as i64).min(labels.width as i64 - 1);
    let y1 = (window.y1().ceil() as i64).min(labels.height as i64 - 1);
    let (mut inter, mut union) = (0usize, 0usize);
    for row in y0..=y1 {
        for col in x0..=x1 {
            let in_rect = rect.contains(Point::new(col as f64, row as f64));
            let in_part = labels.get(row as usize, col as usize) == part.label();
            inter += (in_rect && in_part) as usize;
            union += (in_rect || in_part) as usize;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Segment-consistency features. The limb terms are only filled for skeleton edges.
pub fn segment_features(
    labels: &LabelMap,
    assoc: &JointPartAssociation,
    ci: &JointProposal,
    cj: &JointProposal,
) -> [f64; 8] {
    let (ti, tj) = (ci.joint_type, cj.joint_type);
    let edge = assoc.edge(ti, tj);
    let r1 = edge.unwrap_or_else(|| assoc.primary(ti));
    let mut out = [0.0; 8];
    out[..2].copy_from_slice(&region_indicators(labels, ci.location, r1));
    for (slot, part) in assoc.joints[tj.index()].iter().enumerate() {
        if let Some(part) = part {
            out[2 + 2 * slot..4 + 2 * slot].copy_from_slice(&region_indicators(labels, cj.location, *part));
        }
    }
    if let Some(part) = edge {
        out[6] = line_fraction(labels, ci.location, cj.location, part);
        out[7] = rect_iou(labels, ci.location, cj.location, part);
    }
    out
}

/// Full feature for a proposal pair, ordered so the lower joint type comes first.
pub fn pair_feature(
    region: &ZoomedRegion<'_>,
    labels: &LabelMap,
    assoc: &JointPartAssociation,
    a: &JointProposal,
    b: &JointProposal,
    use_segment: bool,
) -> Result<PairFeature> {
    if a.joint_type == b.joint_type {
        return Ok(PairFeature::same_type(a.location.dist(b.location)));
    }
    let (ci, cj) = if a.joint_type < b.joint_type { (a, b) } else { (b, a) };
    let fn_part = neighbor_features(region, ci, cj)?;
    let fs_part = if use_segment {
        segment_features(labels, assoc, ci, cj)
    } else {
        [0.0; 8]
    };
    Ok(PairFeature { fn_part, fs_part })
}

/// Model key for an unordered joint-type pair, e.g. `"1-4"` or `"3-3"`.
pub fn pair_key(a: JointType, b: JointType) -> String {
    let (i, j) = if a <= b { (a, b) } else { (b, a) };
    format!("{}-{}", i.index(), j.index())
}

pub fn all_pair_keys() -> Vec<String> {
    let mut keys = Vec::with_capacity(NUM_JOINTS * (NUM_JOINTS + 1) / 2);
    for i in 0..NUM_JOINTS {
        for j in i..NUM_JOINTS {
            keys.push(pair_key(JointType::ALL[i], JointType::ALL[j]));
        }
    }
    keys
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticWeights {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LogisticWeights {
    pub fn zero() -> Self {
        LogisticWeights {
            w: vec![0.0; FEATURE_DIM],
            b: 0.0,
        }
    }

    pub fn logit(&self, x: &[f64; FEATURE_DIM]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    fn is_valid(&self) -> bool {
        self.w.len() == FEATURE_DIM && self.w.iter().all(|v| v.is_finite()) && self.b.is_finite()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub l2: f64,
    /// Fraction of the inverse smoothness constant used as the step size.
    pub step_fraction: f64,
    pub seed: u64,
    pub samples: usize,
    pub train_accuracy: f64,
    /// Pairs that copy the pooled weights for lack of two-class data.
    pub fallback_pairs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub pairs: BTreeMap<String, LogisticWeights>,
    pub pooled: LogisticWeights,
    pub same_type: LogisticWeights,
    pub meta: TrainingMeta,
}

impl LogisticModel {
    /// Every pair uses the same weights.
    pub fn uniform(weights: LogisticWeights) -> Self {
        LogisticModel {
            pairs: all_pair_keys().into_iter().map(|k| (k, weights.clone())).collect(),
            pooled: weights.clone(),
            same_type: weights,
            meta: TrainingMeta::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.pairs.values().chain([&self.pooled, &self.same_type]);
        for w in all {
            if !w.is_valid() {
                return Err(Error::Model(
                    "weights must be 12 finite values plus a finite bias".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: LogisticModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

pub fn pair_probability(model: &LogisticModel, f: &PairFeature, ti: JointType, tj: JointType) -> Result<f64> {
    let key = pair_key(ti, tj);
    let w = model
        .pairs
        .get(&key)
        .ok_or_else(|| Error::Model(format!("no weights for joint pair {key}")))?;
    Ok(sigmoid(w.logit(&f.to_array())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub feature: PairFeature,
    pub types: (JointType, JointType),
    pub same_person: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub l2: f64,
    pub step_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1500,
            l2: 1e-4,
            step_fraction: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0
            || self.l2.is_nan()
            || self.l2 < 0.0
            || !(self.step_fraction > 0.0 && self.step_fraction <= 1.0)
        {
            return Err(Error::argument(
                "train config needs iterations > 0, l2 >= 0 and step_fraction in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// Regularized cross-entropy fit on one group of samples by full-batch
/// gradient descent.
///
/// Descent runs on features rescaled by their root-mean-square so a single
/// step size suits every coordinate; the step is the inverse of an upper
/// bound on the smoothness constant, which makes the loss non-increasing.
/// Returned weights apply to raw features.
#[derive(Debug, Clone)]
pub struct GroupFit {
    pub weights: LogisticWeights,
    pub loss_history: Vec<f64>,
    pub accuracy: f64,
}

pub fn fit_group(xs: &[[f64; FEATURE_DIM]], ys: &[bool], cfg: &TrainConfig, record_loss: bool) -> GroupFit {
    const D: usize = FEATURE_DIM + 1;
    let n = xs.len() as f64;
    let mut scale = [1.0f64; FEATURE_DIM];
    for (d, s) in scale.iter_mut().enumerate() {
        let ms = xs.iter().map(|x| x[d] * x[d]).sum::<f64>() / n;
        if ms > 1e-24 {
            *s = ms.sqrt();
        }
    }
    let zs: Vec<[f64; D]> = xs
        .iter()
        .map(|x| {
            let mut z = [1.0; D];
            for d in 0..FEATURE_DIM {
                z[d] = x[d] / scale[d];
            }
            z
        })
        .collect();
    let targets: Vec<f64> = ys.iter().map(|&y| y as u8 as f64).collect();

    // Second-moment matrix of the scaled, bias-augmented features.
    let mut m = [[0.0f64; D]; D];
    for z in &zs {
        for a in 0..D {
            for b in 0..D {
                m[a][b] += z[a] * z[b];
            }
        }
    }
    m.iter_mut().flatten().for_each(|v| *v /= n);
    let gersh = m
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut v = [1.0f64; D];
    let mut lam = 0.0;
    for _ in 0..200 {
        let mut mv = [0.0; D];
        for a in 0..D {
            mv[a] = (0..D).map(|b| m[a][b] * v[b]).sum();
        }
        let norm = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lam = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = mv.map(|x| x / norm);
    }
    let lam_max = (lam * 1.05).min(gersh).max(1e-12);
    let reg: [f64; FEATURE_DIM] = scale.map(|s| cfg.l2 / (s * s));
    let smooth = 0.25 * lam_max + reg.iter().copied().fold(0.0, f64::max);
    let step = cfg.step_fraction / smooth;

    let loss = |u: &[f64; D]| {
        let ce: f64 = zs
            .iter()
            .zip(&targets)
            .map(|(z, &y)| {
                let s: f64 = z.iter().zip(u).map(|(a, b)| a * b).sum();
                // log(1 + e^s) - y s, computed stably.
                s.max(0.0) + (-s.abs()).exp().ln_1p() - y * s
            })
            .sum::<f64>()
            / n;
        ce + 0.5 * (0..FEATURE_DIM).map(|d| reg[d] * u[d] * u[d]).sum::<f64>()
    };

    let mut u = [0.0f64; D];
    let mut history = Vec::new();
    if record_loss {
        history.push(loss(&u));
    }
    for _ in 0..cfg.iterations {
        let mut g = [0.0f64; D];
        for (z, &y) in zs.iter().zip(&targets) {
            let s: f64 = z.iter().zip(&u).map(|(a, b)| a * b).sum();
            let r = sigmoid(s) - y;
            for d in 0..D {
                g[d] += r * z[d];
            }
        }
        for d in 0..D {
            g[d] /= n;
            if d < FEATURE_DIM {
                g[d] += reg[d] * u[d];
            }
            u[d] -= step * g[d];
        }
        if record_loss {
            history.push(loss(&u));
        }
    }

    let weights = LogisticWeights {
        w: (0..FEATURE_DIM).map(|d| u[d] / scale[d]).collect(),
        b: u[FEATURE_DIM],
    };
    let correct = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| (weights.logit(x) > 0.0) == y)
        .count();
    GroupFit {
        weights,
        loss_history: history,
        accuracy: correct as f64 / n,
    }
}

fn two_classes(ys: &[bool]) -> bool {
    ys.len() >= 2 && ys.iter().any(|&y| y) && ys.iter().any(|&y| !y)
}

/// Trains one model per joint-type pair, a pooled model over all distinct-type
/// samples, and a model for same-type pairs. Pairs without two-class data
/// fall back to the pooled weights.
pub fn train_logistic(samples: &[TrainingSample], cfg: &TrainConfig) -> Result<LogisticModel> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Training("no training samples".into()));
    }
    let mut groups: BTreeMap<String, (Vec<[f64; FEATURE_DIM]>, Vec<bool>)> = BTreeMap::new();
    let (mut pooled_x, mut pooled_y) = (Vec::new(), Vec::new());
    let (mut same_x, mut same_y) = (Vec::new(), Vec::new());
    for s in samples {
        let x = s.feature.to_array();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite feature value".into()));
        }
        let (a, b) = s.types;
        if a == b {
            same_x.push(x);
            same_y.push(s.same_person);
        } else {
            pooled_x.push(x);
            pooled_y.push(s.same_person);
            let g = groups.entry(pair_key(a, b)).or_default();
            g.0.push(x);
            g.1.push(s.same_person);
        }
    }

    let fallback_fit = |xs: &[[f64; FEATURE_DIM]], ys: &[bool]| {
        let pos = ys.iter().filter(|&&y| y).count() as f64;
        let neg = ys.len() as f64 - pos;
        LogisticWeights {
            w: vec![0.0; FEATURE_DIM],
            b: ((pos + 1.0) / (neg + 1.0)).ln(),
        }
        .clone_with_fit(xs, ys, cfg)
    };
    let pooled = fallback_fit(&pooled_x, &pooled_y);
    let same_type = fallback_fit(&same_x, &same_y);

    let mut pairs = BTreeMap::new();
    let mut fallback_pairs = Vec::new();
    let mut correct = 0.0;
    for key in all_pair_keys() {
        let (i, j) = parse_key(&key);
        if i == j {
            pairs.insert(key, same_type.clone());
            continue;
        }
        match groups.get(&key) {
            Some((xs, ys)) if two_classes(ys) => {
                let fit = fit_group(xs, ys, cfg, false);
                correct += fit.accuracy * xs.len() as f64;
                pairs.insert(key, fit.weights);
            }
            other => {
                if let Some((xs, ys)) = other {
                    correct += accuracy(&pooled, xs, ys) * xs.len() as f64;
                }
                log::debug!("pair {key} lacks two classes; using the pooled model");
                fallback_pairs.push(key.clone());
                pairs.insert(key, pooled.clone());
            }
        }
    }
    correct += accuracy(&same_type, &same_x, &same_y) * same_x.len() as f64;
    let model = LogisticModel {
        pairs,
        pooled,
        same_type,
        meta: TrainingMeta {
            iterations: cfg.iterations,
            l2: cfg.l2,
            step_fraction: cfg.step_fraction,
            seed: cfg.seed,
            samples: samples.len(),
            train_accuracy: correct / samples.len() as f64,
            fallback_pairs,
        },
    };
    model.validate()?;
    Ok(model)
}

impl LogisticWeights {
    /// Fits on two-class data, otherwise keeps `self` (a constant prior).
    fn clone_with_fit(self, xs: &[[f64; FEATURE_DIM]], ys: &[bool], cfg: &TrainConfig) -> LogisticWeights {
        if two_classes(ys) {
            fit_group(xs, ys, cfg, false).weights
        } else {
            self
        }
    }
}

fn accuracy(w: &LogisticWeights, xs: &[[f64; FEATURE_DIM]], ys: &[bool]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let ok = xs.iter().zip(ys).filter(|(x, &y)| (w.logit(x) > 0.0) == y).count();
    ok as f64 / xs.len() as f64
}

fn parse_key(key: &str) -> (usize, usize) {
    let (a, b) = key.split_once('-').expect("well-formed key");
    (a.parse().expect("index"), b.parse().expect("index"))
}

/// Pairs of joint types adjacent in the skeleton.
pub fn is_edge(a: JointType, b: JointType) -> bool {
    SKELETON_EDGES
        .iter()
        .any(|&(p, c)| (p, c) == (a, b) || (p, c) == (b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::NUM_PARTS;
    use crate::geometry::point_segment_distance;
    use crate::tensor::{neighbor_channel, ScoreMapSet, Tensor3, NEIGHBOR_CHANNELS};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn prop(x: f64, y: f64, jt: JointType) -> JointProposal {
        JointProposal {
            location: Point::new(x, y),
            joint_type: jt,
            score: 0.9,
        }
    }

    #[test]
    fn neighbor_terms_examples() {
        let v = Point::new(3.0, 4.0);
        let back = Point::new(-3.0, -4.0);
        assert_eq!(neighbor_terms(v, v, back, back), [0.0; 4]);
        let t = neighbor_terms(Point::new(1.0, 0.0), Point::new(0.0, 1.0), back, back);
        assert!((t[1] - 2f64.sqrt()).abs() < 1e-12);
        assert!((t[3] - PI / 2.0).abs() < 1e-12);
        let t = neighbor_terms(v, v.scale(-1.0), back, back);
        assert!((t[3] - PI).abs() < 1e-12);
        assert_eq!(t[1], 10.0);
    }

    fn maps_with_offsets() -> ScoreMapSet {
        let (h, w) = (40, 40);
        let mut n = Tensor3::zeros(h, w, NEIGHBOR_CHANNELS);
        for r in 0..h {
            for c in 0..w {
                n.set(r, c, neighbor_channel(JointType::Neck, JointType::LShoulder, 0), 3.0);
                n.set(r, c, neighbor_channel(JointType::Neck, JointType::LShoulder, 1), 4.0);
                n.set(r, c, neighbor_channel(JointType::LShoulder, JointType::Neck, 0), -3.0);
                n.set(
                    r,
                    c,
                    neighbor_channel(JointType::LShoulder, JointType::Neck, 1),
                    (r as f64 * 0.1 - 4.0) as f32,
                );
            }
        }
        ScoreMapSet::new(Tensor3::zeros(h, w, NUM_JOINTS), n, Tensor3::zeros(h, w, NUM_PARTS)).unwrap()
    }

    #[test]
    fn neighbor_features_read_the_map() {
        let maps = maps_with_offsets();
        let region = ZoomedRegion::whole_scene(&maps);
        let a = prop(10.0, 10.0, JointType::Neck);
        let b = prop(13.0, 14.0, JointType::LShoulder);
        let f = neighbor_features(&region, &a, &b).unwrap();
        assert!(f[1].abs() < 1e-9 && f[3].abs() < 1e-9);
        // Reverse prediction at row 14 is (-3, -2.6) against the true (-3, -4).
        assert!((f[0] - 1.4).abs() < 1e-5);
        let off = prop(50.0, 10.0, JointType::LShoulder);
        assert!(neighbor_features(&region, &a, &off).is_err());
        let g = neighbor_features(&region, &b, &a).unwrap();
        assert_eq!([g[1], g[0], g[3], g[2]], f);
    }

    #[test]
    fn boundary_indicators() {
        let mut lm = LabelMap::new(30, 30);
        for r in 5..25 {
            for c in 5..25 {
                lm.set(r, c, Part::Head.label());
            }
        }
        assert_eq!(region_indicators(&lm, Point::new(15.0, 15.0), Part::Head), [1.0, 0.0]);
        // Three pixels from the outside column 4 is just outside the band.
        assert_eq!(region_indicators(&lm, Point::new(7.0, 15.0), Part::Head), [1.0, 0.0]);
        assert_eq!(region_indicators(&lm, Point::new(6.0, 15.0), Part::Head), [1.0, 1.0]);
        assert_eq!(region_indicators(&lm, Point::new(3.0, 15.0), Part::Head), [0.0, 1.0]);
        assert_eq!(region_indicators(&lm, Point::new(1.0, 15.0), Part::Head), [0.0, 0.0]);
    }

    #[test]
    fn line_fraction_example() {
        let mut lm = LabelMap::new(10, 3);
        for r in 0..=4 {
            lm.set(r, 0, Part::UpperArm.label());
        }
        let f = line_fraction(&lm, Point::new(0.0, 0.0), Point::new(0.0, 8.0), Part::UpperArm);
        assert!((f - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn rect_iou_examples() {
        let mut lm = LabelMap::new(12, 14);
        for r in 3..=7 {
            for c in 0..=10 {
                lm.set(r, c, Part::LowerLeg.label());
            }
        }
        let (a, b) = (Point::new(0.0, 5.0), Point::new(10.0, 5.0));
        assert_eq!(rect_iou(&lm, a, b, Part::LowerLeg), 1.0);
        assert_eq!(rect_iou(&lm, a, b, Part::Head), 0.0);
    }

    #[test]
    fn rect_iou_matches_pixel_oracle() {
        let mut lm = LabelMap::new(40, 40);
        for r in 0..40 {
            for c in 0..40 {
                if (r * 7 + c * 3) % 5 < 2 {
                    lm.set(r, c, Part::Torso.label());
                }
            }
        }
        let (a, b) = (Point::new(8.3, 12.0), Point::new(25.0, 21.6));
        let width = a.dist(b) / 2.5;
        let (mut i, mut u) = (0, 0);
        // Oracle: distance-based membership over the same local window.
        for r in 0..40 {
            for c in 0..40 {
                let p = Point::new(c as f64, r as f64);
                let along = (p - a).dot(b - a) / a.dist(b);
                let inr = (-1e-9..=a.dist(b) + 1e-9).contains(&along)
                    && point_segment_distance(p, a, b) <= width / 2.0 + 1e-9;
                let inwin = (a.x.min(b.x) - 2.0 * width..=a.x.max(b.x) + 2.0 * width).contains(&p.x)
                    && (a.y.min(b.y) - 2.0 * width..=a.y.max(b.y) + 2.0 * width).contains(&p.y);
                let inp = lm.get(r, c) == Part::Torso.label();
                if inwin || inr {
                    i += (inr && inp) as usize;
                    u += (inr || inp) as usize;
                }
            }
        }
        let got = rect_iou(&lm, a, b, Part::Torso);
        assert!(got > 0.0);
        // The window cut may differ by a pixel column at its border.
        assert!(
            (got - i as f64 / u as f64).abs() < 0.03,
            "{got} vs {}",
            i as f64 / u as f64
        );
    }

    #[test]
    fn non_edges_have_no_limb_terms() {
        let lm = LabelMap::new(20, 20);
        let assoc = JointPartAssociation::default();
        let f = segment_features(
            &lm,
            &assoc,
            &prop(2.0, 2.0, JointType::Forehead),
            &prop(10.0, 10.0, JointType::LWrist),
        );
        assert_eq!(&f[6..], &[0.0, 0.0]);
    }

    #[test]
    fn association_table_shape() {
        let a = JointPartAssociation::default();
        a.validate().unwrap();
        assert_eq!(a.joints[JointType::Forehead.index()], [Some(Part::Head), None]);
        assert_eq!(a.edge(JointType::LKnee, JointType::LAnkle), Some(Part::LowerLeg));
        assert_eq!(a.edge(JointType::Neck, JointType::LWaist), Some(Part::Torso));
        assert_eq!(a.edge(JointType::Neck, JointType::LWrist), None);
    }

    #[test]
    fn probability_examples() {
        let mut m = LogisticModel::uniform(LogisticWeights::zero());
        let f = PairFeature::default();
        assert_eq!(
            pair_probability(&m, &f, JointType::Neck, JointType::LKnee).unwrap(),
            0.5
        );
        m.pairs.get_mut("1-10").unwrap().b = 9f64.ln();
        assert!((pair_probability(&m, &f, JointType::LKnee, JointType::Neck).unwrap() - 0.9).abs() < 1e-12);
        m.pairs.remove("0-1");
        assert!(matches!(
            pair_probability(&m, &f, JointType::Neck, JointType::Forehead),
            Err(Error::Model(_))
        ));
        assert_eq!(all_pair_keys().len(), 105);
    }

    #[test]
    fn sigmoid_is_monotone_towards_zero() {
        let mut prev = 1.0;
        for k in 0..60 {
            let p = sigmoid(-(k as f64) * 20.0);
            assert!(p <= prev && p >= 0.0);
            prev = p;
        }
        assert!(prev < 1e-300);
    }

    fn separable(n: usize) -> Vec<TrainingSample> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let pos = i % 2 == 0;
                let mut f = PairFeature::default();
                f.fn_part[0] = if pos { 2.0 + 3.0 * t } else { 12.0 + 20.0 * t };
                f.fn_part[2] = if pos { 0.2 * t } else { 0.5 + 2.0 * t };
                f.fs_part[0] = pos as u8 as f64;
                TrainingSample {
                    feature: f,
                    types: (JointType::Neck, JointType::LShoulder),
                    same_person: pos,
                }
            })
            .collect()
    }

    #[test]
    fn separable_set_is_learned() {
        let model = train_logistic(&separable(200), &TrainConfig::default()).unwrap();
        assert!(model.meta.train_accuracy >= 0.95);
        assert!(!model.meta.fallback_pairs.contains(&"1-2".to_string()));
        assert_eq!(model.pairs.len(), 105);
    }

    #[test]
    fn single_class_pair_falls_back() {
        let mut s = separable(100);
        s.extend((0..10).map(|_| TrainingSample {
            feature: PairFeature::default(),
            types: (JointType::LKnee, JointType::RAnkle),
            same_person: true,
        }));
        let m = train_logistic(&s, &TrainConfig::default()).unwrap();
        assert!(m.meta.fallback_pairs.contains(&"10-13".to_string()));
        assert_eq!(m.pairs["10-13"], m.pooled);
        assert!(train_logistic(&[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn duplicated_data_gives_same_weights() {
        let s = separable(60);
        let mut d = s.clone();
        d.extend(s.iter().copied());
        let cfg = TrainConfig {
            iterations: 300,
            ..Default::default()
        };
        let a = train_logistic(&s, &cfg).unwrap();
        let b = train_logistic(&d, &cfg).unwrap();
        for (wa, wb) in a.pairs["1-2"].w.iter().zip(&b.pairs["1-2"].w) {
            assert!((wa - wb).abs() < 1e-9 * (1.0 + wa.abs()));
        }
        assert_eq!(a, train_logistic(&s, &cfg).unwrap());
    }

    #[test]
    fn loss_never_increases() {
        let s = separable(80);
        let xs: Vec<_> = s.iter().map(|t| t.feature.to_array()).collect();
        let ys: Vec<_> = s.iter().map(|t| t.same_person).collect();
        let fit = fit_group(
            &xs,
            &ys,
            &TrainConfig {
                iterations: 400,
                ..Default::default()
            },
            true,
        );
        for w in fit.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let m = train_logistic(
            &separable(40),
            &TrainConfig {
                iterations: 50,
                ..Default::default()
            },
        )
        .unwrap();
        let back = LogisticModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(LogisticModel::from_json("{\"pairs\":{}}").is_err());
    }

    proptest! {
        #[test]
        fn probability_monotone_in_each_coordinate(
            w in proptest::collection::vec(-2.0f64..2.0, FEATURE_DIM),
            base in proptest::collection::vec(0.0f64..3.0, FEATURE_DIM),
            d in 0..FEATURE_DIM,
            delta in 0.01f64..1.0,
        ) {
            let m = LogisticModel::uniform(LogisticWeights { w: w.clone(), b: 0.1 });
            let mut x = [0.0; FEATURE_DIM];
            x.copy_from_slice(&base);
            let mk = |x: [f64; FEATURE_DIM]| {
                let mut f = PairFeature::default();
                f.fn_part.copy_from_slice(&x[..4]);
                f.fs_part.copy_from_slice(&x[4..]);
                f
            };
            let p0 = pair_probability(&m, &mk(x), JointType::Neck, JointType::RKnee).unwrap();
            x[d] += delta;
            let p1 = pair_probability(&m, &mk(x), JointType::Neck, JointType::RKnee).unwrap();
            if w[d] > 1e-3 { prop_assert!(p1 > p0); }
            if w[d] < -1e-3 { prop_assert!(p1 < p0); }
        }

        #[test]
        fn segment_feature_ranges(seed in any::<u64>(), ax in 0.0f64..29.0, ay in 0.0f64..29.0, bx in 0.0f64..29.0, by in 0.0f64..29.0, ti in 0usize..14, tj in 0usize..14) {
            prop_assume!(ti != tj);
            let mut lm = LabelMap::new(30, 30);
            let mut s = seed;
            for v in lm.labels.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                *v = ((s >> 33) % 7) as u16;
            }
            let (a, b) = (prop(ax, ay, JointType::ALL[ti]), prop(bx, by, JointType::ALL[tj]));
            let f = segment_features(&lm, &JointPartAssociation::default(), &a, &b);
            for v in &f[..6] { prop_assert!(*v == 0.0 || *v == 1.0); }
            prop_assert!((0.0..=1.0).contains(&f[6]) && (0.0..=1.0).contains(&f[7]));
            if !is_edge(a.joint_type, b.joint_type) { prop_assert_eq!(&f[6..], &[0.0, 0.0]); }
        }
    }
}

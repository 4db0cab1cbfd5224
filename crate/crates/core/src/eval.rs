//! Evaluation: keypoint mAP with pose-box matching, average distance of
//! keypoints (ADK), mean pixel IOU, and mIOU by person size.
//!
//! Protocol constants: a prediction matches a ground-truth person when their
//! whole-body boxes (over visible joints) reach IOU 0.5; a matched joint is
//! correct within half the reference scale; AP integrates the all-points
//! interpolated precision-recall curve.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assembly::{derive_boxes, PoseConfiguration};
use crate::body::{JointType, Part, NUM_JOINTS, NUM_PARTS};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::synth::{GroundTruthPerson, Scene};
use crate::tensor::LabelMap;

pub const MATCH_IOU: f64 = 0.5;
pub const JOINT_HIT_RATIO: f64 = 0.5;

pub fn gt_joints(person: &GroundTruthPerson) -> [Option<Point>; NUM_JOINTS] {
    std::array::from_fn(|j| person.visible[j].then_some(person.joints[j]))
}

fn whole_box(joints: &[Option<Point>; NUM_JOINTS]) -> Option<Rect> {
    derive_boxes(joints).whole
}

fn reference_scale(joints: &[Option<Point>; NUM_JOINTS]) -> Option<f64> {
    let f = joints[JointType::Forehead.index()]?;
    let n = joints[JointType::Neck.index()]?;
    let s = f.dist(n) / 2.0;
    (s > 0.0).then_some(s)
}

/// Indices of `preds` in descending score order, input order on ties.
fn score_order(preds: &[PoseConfiguration]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    order
}

/// Area under the all-points interpolated precision-recall curve.
/// `ranked` holds (score, hit) in descending score order. Equal scores form a
/// single operating point, so the result does not depend on tie order.
pub fn average_precision(ranked: &[(f64, bool)], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut prec = Vec::with_capacity(ranked.len());
    let mut rec = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (k, &(score, hit)) in ranked.iter().enumerate() {
        tp += hit as usize;
        if ranked.get(k + 1).is_some_and(|next| next.0 == score) {
            continue;
        }
        prec.push(tp as f64 / (k + 1) as f64);
        rec.push(tp as f64 / positives as f64);
    }
    for k in (0..prec.len().saturating_sub(1)).rev() {
        prec[k] = prec[k].max(prec[k + 1]);
    }
    let mut ap = 0.0;
    let mut last = 0.0;
    for k in 0..prec.len() {
        if rec[k] > last {
            ap += (rec[k] - last) * prec[k];
            last = rec[k];
        }
    }
    ap
}

#[derive(Debug, Clone, Default)]
pub struct MapAccumulator {
    /// Per joint type: (image, rank, score, hit) for every predicted joint.
    detections: Vec<Vec<(usize, usize, f64, bool)>>,
    positives: [usize; NUM_JOINTS],
    images: usize,
}

impl MapAccumulator {
    pub fn new() -> Self {
        MapAccumulator {
            detections: vec![Vec::new(); NUM_JOINTS],
            ..Default::default()
        }
    }

    pub fn add_image(&mut self, preds: &[PoseConfiguration], gt: &[GroundTruthPerson]) {
        let image = self.images;
        self.images += 1;
        let gts: Vec<_> = gt.iter().map(gt_joints).collect();
        let gt_boxes: Vec<_> = gts.iter().map(whole_box).collect();
        for g in &gts {
            for (j, p) in g.iter().enumerate() {
                self.positives[j] += p.is_some() as usize;
            }
        }
        let mut taken = vec![false; gts.len()];
        for (rank, &pi) in score_order(preds).iter().enumerate() {
            let pred = &preds[pi];
            let mut matched = None;
            if let Some(pb) = whole_box(&pred.joints) {
                let mut best = MATCH_IOU;
                for (gi, gb) in gt_boxes.iter().enumerate() {
                    let Some(gb) = gb else { continue };
                    let iou = pb.iou(gb);
                    if !taken[gi] && iou >= best && (matched.is_none() || iou > best) {
                        best = iou;
                        matched = Some(gi);
                    }
                }
            }
            if let Some(gi) = matched {
                taken[gi] = true;
            }
            for j in 0..NUM_JOINTS {
                let Some(p) = pred.joints[j] else { continue };
                let hit = matched.is_some_and(|gi| {
                    let g = &gts[gi];
                    match (g[j], reference_scale(g)) {
                        (Some(q), Some(s)) => p.dist(q) <= JOINT_HIT_RATIO * s,
                        _ => false,
                    }
                });
                self.detections[j].push((image, rank, pred.score, hit));
            }
        }
    }

    pub fn finish(&self) -> ApResult {
        let per_joint: Vec<Option<f64>> = (0..NUM_JOINTS)
            .map(|j| {
                if self.positives[j] == 0 {
                    return None;
                }
                let mut d = self.detections[j].clone();
                d.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
                let ranked: Vec<(f64, bool)> = d.iter().map(|x| (x.2, x.3)).collect();
                Some(average_precision(&ranked, self.positives[j]))
            })
            .collect();
        ApResult {
            map: mean(per_joint.iter().flatten().copied()),
            per_joint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    /// Indexed by joint type; `None` when no ground truth has that joint.
    pub per_joint: Vec<Option<f64>>,
    pub map: Option<f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn compute_map(preds: &[PoseConfiguration], gt: &[GroundTruthPerson]) -> ApResult {
    let mut acc = MapAccumulator::new();
    acc.add_image(preds, gt);
    acc.finish()
}

#[derive(Debug, Clone, Default)]
pub struct AdkAccumulator {
    sum: [f64; NUM_JOINTS],
    count: [usize; NUM_JOINTS],
    skipped: usize,
    unmatched: usize,
}

impl AdkAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_image(&mut self, preds: &[PoseConfiguration], gt: &[GroundTruthPerson]) {
        let boxes: Vec<_> = preds.iter().map(|p| whole_box(&p.joints)).collect();
        for person in gt {
            let g = gt_joints(person);
            let Some(scale) = reference_scale(&g) else {
                self.skipped += 1;
                continue;
            };
            let Some(gb) = whole_box(&g) else {
                self.skipped += 1;
                continue;
            };
            let mut best: Option<(f64, usize)> = None;
            for (pi, pb) in boxes.iter().enumerate() {
                let Some(pb) = pb else { continue };
                let iou = pb.iou(&gb);
                if iou > 0.0 && best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, pi));
                }
            }
            let Some((_, pi)) = best else {
                self.unmatched += 1;
                continue;
            };
            for (j, (p, q)) in preds[pi].joints.iter().zip(g).enumerate() {
                if let (Some(p), Some(q)) = (p, q) {
                    self.sum[j] += p.dist(q) / scale;
                    self.count[j] += 1;
                }
            }
        }
    }

    pub fn finish(&self) -> AdkResult {
        let per_joint: Vec<Option<f64>> = (0..NUM_JOINTS)
            .map(|j| (self.count[j] > 0).then(|| 100.0 * self.sum[j] / self.count[j] as f64))
            .collect();
        AdkResult {
            mean: mean(per_joint.iter().flatten().copied()),
            per_joint,
            skipped: self.skipped,
            unmatched: self.unmatched,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdkResult {
    /// Percent of the reference scale, per joint type.
    pub per_joint: Vec<Option<f64>>,
    pub mean: Option<f64>,
    /// Ground-truth people without forehead and neck.
    pub skipped: usize,
    /// Ground-truth people no prediction overlaps.
    pub unmatched: usize,
}

pub fn compute_adk(preds: &[PoseConfiguration], gt: &[GroundTruthPerson]) -> AdkResult {
    let mut acc = AdkAccumulator::new();
    acc.add_image(preds, gt);
    acc.finish()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MiouAccumulator {
    inter: [u64; NUM_PARTS],
    union: [u64; NUM_PARTS],
}

impl MiouAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        check_dims(pred, gt)?;
        for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
            self.add_pixel(p, g);
        }
        Ok(())
    }

    fn add_pixel(&mut self, p: u16, g: u16) {
        let (p, g) = (p as usize, g as usize);
        if p == g {
            if p < NUM_PARTS {
                self.inter[p] += 1;
                self.union[p] += 1;
            }
        } else {
            for c in [p, g] {
                if c < NUM_PARTS {
                    self.union[c] += 1;
                }
            }
        }
    }

    pub fn finish(&self) -> IouResult {
        let per_class: Vec<Option<f64>> = (0..NUM_PARTS)
            .map(|c| (self.union[c] > 0).then(|| self.inter[c] as f64 / self.union[c] as f64))
            .collect();
        IouResult {
            miou: mean(per_class.iter().flatten().copied()),
            per_class,
        }
    }
}

fn check_dims(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(Error::argument(format!(
            "label maps differ in size: {}x{} vs {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouResult {
    /// Indexed by part label; `None` when the class appears in neither map.
    pub per_class: Vec<Option<f64>>,
    pub miou: Option<f64>,
}

pub fn compute_miou(pred: &LabelMap, gt: &LabelMap) -> Result<IouResult> {
    let mut acc = MiouAccumulator::new();
    acc.add(pred, gt)?;
    Ok(acc.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeBin {
    XS,
    S,
    M,
    L,
}

impl SizeBin {
    pub const ALL: [SizeBin; 4] = [SizeBin::XS, SizeBin::S, SizeBin::M, SizeBin::L];

    pub fn for_area(area: usize) -> SizeBin {
        match area {
            a if a < 40 * 40 => SizeBin::XS,
            a if a < 80 * 80 => SizeBin::S,
            a if a < 160 * 160 => SizeBin::M,
            _ => SizeBin::L,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeBin::XS => "XS",
            SizeBin::S => "S",
            SizeBin::M => "M",
            SizeBin::L => "L",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SizeBinnedAccumulator {
    bins: [MiouAccumulator; 4],
}

impl SizeBinnedAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// `owner` gives the visible person at each pixel, as in a scene composite.
    pub fn add(
        &mut self,
        pred: &LabelMap,
        gt: &LabelMap,
        owner: &[Option<usize>],
        people: &[GroundTruthPerson],
    ) -> Result<()> {
        check_dims(pred, gt)?;
        if owner.len() != gt.labels.len() {
            return Err(Error::argument("owner map does not match the label map"));
        }
        let w = gt.width;
        let mut area = vec![0usize; people.len()];
        for o in owner.iter().flatten() {
            if *o < people.len() {
                area[*o] += 1;
            }
        }
        let bin_of: Vec<usize> = area.iter().map(|&a| SizeBin::for_area(a) as usize).collect();
        let mut member = vec![[false; 4]; gt.labels.len()];
        for (k, o) in owner.iter().enumerate() {
            if let Some(o) = o {
                if *o < people.len() {
                    member[k][bin_of[*o]] = true;
                }
            }
        }
        for (i, person) in people.iter().enumerate() {
            if area[i] == 0 {
                continue;
            }
            let b = person.bbox;
            let x0 = b.x.ceil().max(0.0) as usize;
            let y0 = b.y.ceil().max(0.0) as usize;
            let x1 = (b.x1().floor().max(-1.0) as i64).min(w as i64 - 1);
            let y1 = (b.y1().floor().max(-1.0) as i64).min(gt.height as i64 - 1);
            for r in y0 as i64..=y1 {
                for c in x0 as i64..=x1 {
                    let k = r as usize * w + c as usize;
                    if gt.labels[k] == Part::Background.label() {
                        member[k][bin_of[i]] = true;
                    }
                }
            }
        }
        for (k, m) in member.iter().enumerate() {
            for (bin, &on) in m.iter().enumerate() {
                if on {
                    self.bins[bin].add_pixel(pred.labels[k], gt.labels[k]);
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> BTreeMap<SizeBin, Option<f64>> {
        SizeBin::ALL
            .iter()
            .map(|&b| (b, self.bins[b as usize].finish().miou))
            .collect()
    }
}

pub fn compute_size_binned_miou(pred: &LabelMap, scene: &Scene) -> Result<BTreeMap<SizeBin, Option<f64>>> {
    let comp = scene.composite();
    let mut acc = SizeBinnedAccumulator::new();
    acc.add(pred, &comp.labels, &comp.owner, &scene.people)?;
    Ok(acc.finish())
}

/// One evaluated image.
pub struct ImageEval<'a> {
    pub poses: &'a [PoseConfiguration],
    pub scene: &'a Scene,
    pub parts: Option<&'a LabelMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub ap: ApResult,
    pub adk: AdkResult,
    pub iou: Option<IouResult>,
    pub size_bins: Option<BTreeMap<SizeBin, Option<f64>>>,
    pub protocol: String,
}

pub const PROTOCOL: &str =
    "match: whole-body box IOU >= 0.5 over visible joints; joint hit: distance <= 0.5 x reference scale; AP: all-points interpolation";

pub fn evaluate(images: &[ImageEval<'_>]) -> Result<EvalReport> {
    let mut ap = MapAccumulator::new();
    let mut adk = AdkAccumulator::new();
    let mut iou = MiouAccumulator::new();
    let mut bins = SizeBinnedAccumulator::new();
    let with_parts = images.iter().any(|im| im.parts.is_some());
    for im in images {
        ap.add_image(im.poses, &im.scene.people);
        adk.add_image(im.poses, &im.scene.people);
        if with_parts {
            let pred = im
                .parts
                .ok_or_else(|| Error::argument("part labels missing for some images"))?;
            let comp = im.scene.composite();
            iou.add(pred, &comp.labels)?;
            bins.add(pred, &comp.labels, &comp.owner, &im.scene.people)?;
        }
    }
    Ok(EvalReport {
        images: images.len(),
        ap: ap.finish(),
        adk: adk.finish(),
        iou: with_parts.then(|| iou.finish()),
        size_bins: with_parts.then(|| bins.finish()),
        protocol: PROTOCOL.to_string(),
    })
}

fn group_mean(values: &[Option<f64>], idx: &[usize]) -> Option<f64> {
    mean(idx.iter().filter_map(|&i| values[i]))
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

fn table(out: &mut String, title: &str, headers: &[&str], cells: &[Option<f64>]) {
    let _ = writeln!(out, "{title}");
    let row: Vec<String> = headers.iter().map(|h| format!("{h:>9}")).collect();
    let _ = writeln!(out, "{}", row.join(""));
    let row: Vec<String> = cells.iter().map(|&c| format!("{:>9}", fmt_cell(c))).collect();
    let _ = writeln!(out, "{}\n", row.join(""));
}

impl EvalReport {
    pub fn ap_groups(&self) -> Vec<(&'static str, Option<f64>)> {
        let a = &self.ap.per_joint;
        vec![
            ("Head", group_mean(a, &[0, 1])),
            ("Shoulder", group_mean(a, &[2, 3])),
            ("Elbow", group_mean(a, &[4, 5])),
            ("Wrist", group_mean(a, &[6, 7])),
            ("Hip", group_mean(a, &[8, 9])),
            ("Knee", group_mean(a, &[10, 11])),
            ("Ankle", group_mean(a, &[12, 13])),
            ("U-Body", group_mean(a, &[0, 1, 2, 3, 4, 5, 6, 7])),
            ("Total", self.ap.map),
        ]
    }

    pub fn adk_groups(&self) -> Vec<(&'static str, Option<f64>)> {
        let a = &self.adk.per_joint;
        vec![
            ("Forehead", a[0]),
            ("Neck", a[1]),
            ("Shoulder", group_mean(a, &[2, 3])),
            ("Elbow", group_mean(a, &[4, 5])),
            ("Wrist", group_mean(a, &[6, 7])),
            ("Hip", group_mean(a, &[8, 9])),
            ("Knee", group_mean(a, &[10, 11])),
            ("Ankle", group_mean(a, &[12, 13])),
            ("Ave", self.adk.mean),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "images: {}\nprotocol: {}\n", self.images, self.protocol);
        let pct = |v: Option<f64>| v.map(|v| 100.0 * v);
        let g = self.ap_groups();
        let names: Vec<_> = g.iter().map(|x| x.0).collect();
        let cells: Vec<_> = g.iter().map(|x| pct(x.1)).collect();
        table(&mut out, "Keypoint AP (%)", &names, &cells);
        let g = self.adk_groups();
        let names: Vec<_> = g.iter().map(|x| x.0).collect();
        let cells: Vec<_> = g.iter().map(|x| x.1).collect();
        table(&mut out, "ADK (% of reference scale, lower is better)", &names, &cells);
        let _ = writeln!(
            out,
            "ADK skipped: {}, unmatched: {}\n",
            self.adk.skipped, self.adk.unmatched
        );
        if let Some(iou) = &self.iou {
            let c = &iou.per_class;
            let cells = [c[1], c[2], c[3], c[4], c[5], c[6], c[0], iou.miou].map(pct);
            let names = ["Head", "Torso", "U-arms", "L-arms", "U-legs", "L-legs", "Bkg", "Ave"];
            table(&mut out, "Part IOU (%)", &names, &cells);
        }
        if let Some(bins) = &self.size_bins {
            let names: Vec<_> = SizeBin::ALL.iter().map(|b| b.name()).collect();
            let cells: Vec<_> = SizeBin::ALL.iter().map(|b| pct(bins[b])).collect();
            table(&mut out, "mIOU by instance size (%)", &names, &cells);
        }
        out
    }
}

//! Run configuration: every tunable of the pipeline with its default, loaded
//! from JSON with unknown keys rejected.

use serde::{Deserialize, Serialize};

use crate::assembly::{PoseNmsConfig, RefineWeights, MISSING_JOINT_SCORE};
use crate::error::{Error, Result};
use crate::inference::SolverConfig;
use crate::pairwise::TrainConfig;
use crate::proposals::{BoxFilterConfig, ProposalConfig, ZoomConfig};
use crate::synth::NoiseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub min_people: usize,
    pub max_people: usize,
    pub min_gap: f64,
    /// Detection box jitter as a fraction of box size.
    pub box_jitter: f64,
    pub noise: NoiseSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 160,
            width: 224,
            min_people: 1,
            max_people: 4,
            min_gap: 6.0,
            box_jitter: 0.03,
            noise: NoiseSpec::moderate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub boxes: BoxFilterConfig,
    pub zoom: ZoomConfig,
    pub proposals: ProposalConfig,
    pub missing_joint_score: f64,
    pub pose_nms: PoseNmsConfig,
    pub refine: RefineWeights,
    pub solver: SolverConfig,
    pub train: TrainConfig,
    pub segment_features: bool,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            boxes: BoxFilterConfig::default(),
            zoom: ZoomConfig::default(),
            proposals: ProposalConfig::default(),
            missing_joint_score: MISSING_JOINT_SCORE,
            pose_nms: PoseNmsConfig::default(),
            refine: RefineWeights::default(),
            solver: SolverConfig::default(),
            train: TrainConfig::default(),
            segment_features: true,
            synth: SynthConfig::default(),
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::argument(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        unit("boxes.score_threshold", self.boxes.score_threshold)?;
        unit("boxes.iou_threshold", self.boxes.iou_threshold)?;
        unit("proposals.score_threshold", self.proposals.score_threshold)?;
        for (name, v) in [
            ("pose_nms.head", self.pose_nms.head),
            ("pose_nms.upper", self.pose_nms.upper),
            ("pose_nms.lower", self.pose_nms.lower),
            ("pose_nms.whole", self.pose_nms.whole),
        ] {
            unit(name, v)?;
        }
        if !(self.missing_joint_score > 0.0 && self.missing_joint_score < 1.0) {
            return Err(Error::argument("missing_joint_score must lie in (0, 1)"));
        }
        let p = &self.proposals;
        if p.min_distance.is_nan() || p.min_distance < 0.0 || p.max_per_type == 0 || p.max_per_type > 32 {
            return Err(Error::argument(
                "proposals need min_distance >= 0 and max_per_type in 1..=32",
            ));
        }
        let z = &self.zoom;
        if !(z.pad >= 0.0
            && z.target_height > 0.0
            && z.min_scale > 0.0
            && z.min_scale <= z.max_scale
            && z.max_scale.is_finite())
        {
            return Err(Error::argument(
                "zoom needs pad >= 0, target_height > 0 and 0 < min_scale <= max_scale",
            ));
        }
        let r = &self.refine;
        if !(r.stick >= 0.0 && r.joint >= 0.0 && r.stick.is_finite() && r.joint.is_finite()) {
            return Err(Error::argument("refine weights must be finite and non-negative"));
        }
        self.solver.validate()?;
        self.train.validate()?;
        let s = &self.synth;
        if s.height < 16 || s.width < 16 || s.min_people == 0 || s.min_people > s.max_people {
            return Err(Error::argument(
                "synth needs a canvas of at least 16x16 and 1 <= min_people <= max_people",
            ));
        }
        if !(s.min_gap >= 0.0 && s.box_jitter >= 0.0 && s.box_jitter < 0.5) {
            return Err(Error::argument("synth needs min_gap >= 0 and box_jitter in [0, 0.5)"));
        }
        s.noise.validate()
    }
}

/// Deterministic child seed for a named stage and item index.
pub fn derive_seed(root: u64, stage: &str, index: u64) -> u64 {
    // FNV-1a over the stage name, then SplitMix64 finalization.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = root ^ h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
        assert_eq!(cfg.proposals.max_per_type, 6);
        assert_eq!(cfg.pose_nms.head, 0.65);
        assert_eq!(cfg.zoom.target_height, 256.0);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 9, "proposals": {"max_per_type": 4}}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.proposals.max_per_type, 4);
        assert_eq!(cfg.proposals.min_distance, 16.0);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(RunConfig::from_json(r#"{"sede": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"proposals": {"radius": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"boxes": {"score_threshold": 1.5}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"zoom": {"min_scale": 5.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"missing_joint_score": 0}"#).is_err());
    }

    #[test]
    fn seeds_split_by_stage_and_index() {
        let a = derive_seed(1, "synth", 0);
        assert_eq!(a, derive_seed(1, "synth", 0));
        assert_ne!(a, derive_seed(1, "synth", 1));
        assert_ne!(a, derive_seed(1, "train", 0));
        assert_ne!(a, derive_seed(2, "synth", 0));
    }
}

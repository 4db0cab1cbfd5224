//! Joint and part vocabulary shared by every stage.
//!
//! Joint types use a fixed canonical order (indices 0–13); part labels use
//! 0 for background followed by the six body parts.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const NUM_JOINTS: usize = 14;
pub const NUM_PARTS: usize = 7;
pub const NUM_EDGES: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum JointType {
    Forehead = 0,
    Neck,
    LShoulder,
    RShoulder,
    LElbow,
    RElbow,
    LWrist,
    RWrist,
    LWaist,
    RWaist,
    LKnee,
    RKnee,
    LAnkle,
    RAnkle,
}

impl JointType {
    pub const ALL: [JointType; NUM_JOINTS] = [
        JointType::Forehead,
        JointType::Neck,
        JointType::LShoulder,
        JointType::RShoulder,
        JointType::LElbow,
        JointType::RElbow,
        JointType::LWrist,
        JointType::RWrist,
        JointType::LWaist,
        JointType::RWaist,
        JointType::LKnee,
        JointType::RKnee,
        JointType::LAnkle,
        JointType::RAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointType> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointType::Forehead => "forehead",
            JointType::Neck => "neck",
            JointType::LShoulder => "l_shoulder",
            JointType::RShoulder => "r_shoulder",
            JointType::LElbow => "l_elbow",
            JointType::RElbow => "r_elbow",
            JointType::LWrist => "l_wrist",
            JointType::RWrist => "r_wrist",
            JointType::LWaist => "l_waist",
            JointType::RWaist => "r_waist",
            JointType::LKnee => "l_knee",
            JointType::RKnee => "r_knee",
            JointType::LAnkle => "l_ankle",
            JointType::RAnkle => "r_ankle",
        }
    }

    pub fn from_name(name: &str) -> Option<JointType> {
        Self::ALL.iter().copied().find(|j| j.name() == name)
    }
}

impl fmt::Display for JointType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Part {
    Background = 0,
    Head,
    Torso,
    UpperArm,
    LowerArm,
    UpperLeg,
    LowerLeg,
}

impl Part {
    pub const ALL: [Part; NUM_PARTS] = [
        Part::Background,
        Part::Head,
        Part::Torso,
        Part::UpperArm,
        Part::LowerArm,
        Part::UpperLeg,
        Part::LowerLeg,
    ];

    pub fn label(self) -> u16 {
        self as u16
    }

    pub fn from_label(label: u16) -> Option<Part> {
        Self::ALL.get(label as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Part::Background => "background",
            Part::Head => "head",
            Part::Torso => "torso",
            Part::UpperArm => "upper_arm",
            Part::LowerArm => "lower_arm",
            Part::UpperLeg => "upper_leg",
            Part::LowerLeg => "lower_leg",
        }
    }
}

/// Skeleton tree as (parent, child) pairs; parent always has the lower index.
pub const SKELETON_EDGES: [(JointType, JointType); NUM_EDGES] = {
    use JointType::*;
    [
        (Forehead, Neck),
        (Neck, LShoulder),
        (Neck, RShoulder),
        (LShoulder, LElbow),
        (RShoulder, RElbow),
        (LElbow, LWrist),
        (RElbow, RWrist),
        (Neck, LWaist),
        (Neck, RWaist),
        (LWaist, LKnee),
        (RWaist, RKnee),
        (LKnee, LAnkle),
        (RKnee, RAnkle),
    ]
};

/// Index into [`SKELETON_EDGES`] for an unordered joint-type pair, if it is an edge.
pub fn edge_index(a: JointType, b: JointType) -> Option<usize> {
    SKELETON_EDGES
        .iter()
        .position(|&(p, c)| (p == a && c == b) || (p == b && c == a))
}

/// Part each skeleton edge belongs to.
pub fn edge_part(edge: usize) -> Part {
    use Part::*;
    const PARTS: [Part; NUM_EDGES] = [
        Head, Torso, Torso, UpperArm, UpperArm, LowerArm, LowerArm, Torso, Torso, UpperLeg, UpperLeg, LowerLeg,
        LowerLeg,
    ];
    PARTS[edge]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_form_a_spanning_tree() {
        // 13 edges over 14 nodes, connected => tree.
        let mut parent: Vec<usize> = (0..NUM_JOINTS).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &(a, b) in &SKELETON_EDGES {
            assert!(a.index() < b.index());
            let (ra, rb) = (find(&mut parent, a.index()), find(&mut parent, b.index()));
            assert_ne!(ra, rb, "cycle through {a}-{b}");
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        assert!((0..NUM_JOINTS).all(|j| find(&mut parent, j) == root));
    }

    #[test]
    fn names_round_trip() {
        for j in JointType::ALL {
            assert_eq!(JointType::from_name(j.name()), Some(j));
            assert_eq!(JointType::from_index(j.index()), Some(j));
        }
        assert_eq!(JointType::from_index(14), None);
    }

    #[test]
    fn edge_lookup_is_unordered() {
        use JointType::*;
        assert_eq!(edge_index(Neck, Forehead), Some(0));
        assert_eq!(edge_index(LKnee, LAnkle), Some(11));
        assert_eq!(edge_index(Forehead, LAnkle), None);
        assert_eq!(edge_part(0), Part::Head);
    }
}

//! Multi-person pose estimation and part segmentation from score maps.
//!
//! Joint proposals are extracted per detection box, linked by a pairwise
//! logistic model over geometric and segment-consistency features, and
//! assembled into people by solving a small labeling-and-clustering program.
//! The resulting poses then sharpen the part segmentation.
//!
//! Score maps come either from files or from the synthetic generator in
//! [`synth`], which renders ground-truth scenes into joint, offset and part
//! maps with controllable noise.

pub mod assembly;
pub mod body;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod inference;
pub mod pairwise;
pub mod pipeline;
pub mod proposals;
pub mod synth;
pub mod tensor;

pub use assembly::PoseConfiguration;
pub use body::{JointType, Part, NUM_JOINTS, NUM_PARTS};
pub use config::{RunConfig, SynthConfig};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use geometry::{Point, Rect};
pub use inference::{AssemblyProblem, Labeling, SolverConfig, SolverMode};
pub use pairwise::{LogisticModel, PairFeature};
pub use proposals::{DetectionBox, JointProposal, ZoomedRegion};
pub use synth::{GroundTruthPerson, NoiseSpec, Scene};
pub use tensor::{LabelMap, ScoreMapSet, Tensor3};

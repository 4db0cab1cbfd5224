//! Fixtures shared by the benchmarks.

use pweaver_core::pairwise::{LogisticWeights, FEATURE_DIM};
use pweaver_core::pipeline::{synth_item, SynthItem};
use pweaver_core::{LogisticModel, SynthConfig};

/// Pairwise model that links proposals whose displacement agrees with the
/// predicted offsets; good enough to exercise the full pipeline.
pub fn geometric_model() -> LogisticModel {
    let mut w = vec![0.0; FEATURE_DIM];
    w[0] = -0.4;
    w[1] = -0.4;
    let mut m = LogisticModel::uniform(LogisticWeights { w, b: 4.0 });
    m.same_type = LogisticWeights {
        w: vec![0.0; FEATURE_DIM],
        b: -5.0,
    };
    m
}

/// A moderate-noise scene with exactly `people` people.
pub fn scene(people: usize, seed: u64) -> SynthItem {
    let cfg = SynthConfig {
        width: 100 * people.max(2),
        min_people: people,
        max_people: people,
        ..SynthConfig::default()
    };
    synth_item(&cfg, seed, 0).expect("benchmark scene")
}

use std::path::{Path, PathBuf};

use pweaver_core::assembly::{poses_from_json, poses_to_json, render_overlay};
use pweaver_core::config::derive_seed;
use pweaver_core::eval::{evaluate, ImageEval};
use pweaver_core::pairwise::train_logistic;
use pweaver_core::pipeline::{bench_scene, collect_training_samples, infer_scene, synth_item, BenchRecord};
use pweaver_core::{LogisticModel, RunConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{
    create_dir, read_labels, read_text, write_bytes, write_json, write_labels, write_scene, Dataset, Manifest, FORMAT,
    MANIFEST,
};
use crate::failure::Failure;

/// Settings shared by every subcommand after flags are merged into the config.
pub struct Common {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub overlay: bool,
}

pub fn synth(c: &Common, count: usize) -> Result<(), Failure> {
    create_dir(&c.out_dir)?;
    let scenes = (0..count)
        .into_par_iter()
        .map(|i| {
            let item = synth_item(&c.cfg.synth, c.cfg.seed, i)?;
            write_scene(&c.out_dir, i, &item)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let manifest = Manifest {
        format: FORMAT.to_string(),
        seed: c.cfg.seed,
        synth: c.cfg.synth,
        scenes,
    };
    write_json(&c.out_dir.join(MANIFEST), &manifest)?;
    println!("wrote {count} scenes to {}", c.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainLog<'a> {
    scenes: usize,
    samples: usize,
    positives: usize,
    segment_features: bool,
    iterations: usize,
    l2: f64,
    train_accuracy: f64,
    fallback_pairs: &'a [String],
}

pub fn train(c: &Common, data: &Path) -> Result<(), Failure> {
    let ds = Dataset::open(data)?;
    if ds.len() == 0 {
        return Err(Failure::input(format!("{}: dataset has no scenes", data.display())));
    }
    let per_scene = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let samples = collect_training_samples(&ds.scene(i)?, &ds.maps(i)?, &ds.boxes(i)?, &c.cfg)?;
            log::debug!("{}: {} training pairs", ds.id(i), samples.len());
            Ok(samples)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let samples: Vec<_> = per_scene.into_iter().flatten().collect();
    let model = train_logistic(&samples, &c.cfg.train)?;
    create_dir(&c.out_dir)?;
    write_bytes(
        &c.out_dir.join("model.json"),
        format!("{}\n", model.to_json()?).as_bytes(),
    )?;
    let log = TrainLog {
        scenes: ds.len(),
        samples: samples.len(),
        positives: samples.iter().filter(|s| s.same_person).count(),
        segment_features: c.cfg.segment_features,
        iterations: model.meta.iterations,
        l2: model.meta.l2,
        train_accuracy: model.meta.train_accuracy,
        fallback_pairs: &model.meta.fallback_pairs,
    };
    write_json(&c.out_dir.join("train_log.json"), &log)?;
    println!(
        "trained on {} pairs from {} scenes, accuracy {:.4}",
        log.samples, log.scenes, log.train_accuracy
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<LogisticModel, Failure> {
    LogisticModel::from_json(&read_text(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct PredictionManifest {
    format: &'static str,
    scenes: Vec<String>,
}

pub fn infer(c: &Common, data: &Path, model: &Path) -> Result<(), Failure> {
    let ds = Dataset::open(data)?;
    let model = load_model(model)?;
    create_dir(&c.out_dir)?;
    let poses = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let out = infer_scene(
                &ds.maps(i)?,
                &ds.boxes(i)?,
                &model,
                &c.cfg,
                derive_seed(c.cfg.seed, "infer", i as u64),
            )?;
            let dir = c.out_dir.join(ds.id(i));
            create_dir(&dir)?;
            write_bytes(
                &dir.join("poses.json"),
                format!("{}\n", poses_to_json(&out.poses)?).as_bytes(),
            )?;
            write_labels(&dir.join("parts.pwt"), &out.parts)?;
            if c.overlay {
                write_bytes(&dir.join("overlay.ppm"), &render_overlay(&out.parts, &out.poses))?;
            }
            Ok(out.poses.len())
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let manifest = PredictionManifest {
        format: "pweaver-predictions/1",
        scenes: (0..ds.len()).map(|i| ds.id(i).to_string()).collect(),
    };
    write_json(&c.out_dir.join(MANIFEST), &manifest)?;
    println!(
        "inferred {} poses over {} scenes into {}",
        poses.iter().sum::<usize>(),
        ds.len(),
        c.out_dir.display()
    );
    Ok(())
}

pub fn eval(c: &Common, data: &Path, pred: &Path) -> Result<(), Failure> {
    let ds = Dataset::open(data)?;
    let mut scenes = Vec::with_capacity(ds.len());
    let mut poses = Vec::with_capacity(ds.len());
    let mut parts = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let dir = pred.join(ds.id(i));
        let pose_file = dir.join("poses.json");
        let p = poses_from_json(&read_text(&pose_file)?)
            .map_err(|e| Failure::input(format!("{}: {e}", pose_file.display())))?;
        let labels = dir.join("parts.pwt");
        parts.push(if labels.exists() {
            Some(read_labels(&labels)?)
        } else {
            None
        });
        poses.push(p);
        scenes.push(ds.scene(i)?);
    }
    let images: Vec<ImageEval> = (0..ds.len())
        .map(|i| ImageEval {
            poses: &poses[i],
            scene: &scenes[i],
            parts: parts[i].as_ref(),
        })
        .collect();
    let report = evaluate(&images)?;
    create_dir(&c.out_dir)?;
    write_json(&c.out_dir.join("report.json"), &report)?;
    let text = report.to_text();
    write_bytes(&c.out_dir.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct BenchScene {
    id: String,
    people: usize,
    full_nodes: usize,
    box_nodes: Vec<usize>,
    full_objective: f64,
    box_objective: f64,
    objective_gap: f64,
}

#[derive(Serialize)]
struct BenchSummary {
    scenes: Vec<BenchScene>,
    full_objective: f64,
    box_objective: f64,
    /// Relative gap between the summed objectives over all scenes.
    objective_gap: f64,
}

#[derive(Serialize)]
struct TimingScene {
    id: String,
    full_seconds: f64,
    box_seconds: f64,
    speedup: f64,
}

#[derive(Serialize)]
struct Timings {
    scenes: Vec<TimingScene>,
    full_seconds: f64,
    box_seconds: f64,
    speedup: f64,
}

/// Scenes run one after another so solve timings do not compete for cores.
/// Objectives and node counts go to `bench.json`; wall times go to the
/// separate `timings.json`.
pub fn bench(c: &Common, data: &Path, model: &Path) -> Result<(), Failure> {
    let ds = Dataset::open(data)?;
    let model = load_model(model)?;
    let mut records: Vec<(String, BenchRecord)> = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let seed = derive_seed(c.cfg.seed, "bench", i as u64);
        let r = bench_scene(&ds.scene(i)?, &ds.maps(i)?, &ds.boxes(i)?, &model, &c.cfg, seed)?;
        records.push((ds.id(i).to_string(), r));
    }
    let full: f64 = records.iter().map(|(_, r)| r.full_objective).sum();
    let boxed: f64 = records.iter().map(|(_, r)| r.box_objective).sum();
    let summary = BenchSummary {
        scenes: records
            .iter()
            .map(|(id, r)| BenchScene {
                id: id.clone(),
                people: r.people,
                full_nodes: r.full_nodes,
                box_nodes: r.box_nodes.clone(),
                full_objective: r.full_objective,
                box_objective: r.box_objective,
                objective_gap: r.objective_gap(),
            })
            .collect(),
        full_objective: full,
        box_objective: boxed,
        objective_gap: (boxed - full).abs() / full.abs().max(1e-12),
    };
    let full_s: f64 = records.iter().map(|(_, r)| r.full_seconds).sum();
    let box_s: f64 = records.iter().map(|(_, r)| r.box_seconds).sum();
    let timings = Timings {
        scenes: records
            .iter()
            .map(|(id, r)| TimingScene {
                id: id.clone(),
                full_seconds: r.full_seconds,
                box_seconds: r.box_seconds,
                speedup: r.speedup(),
            })
            .collect(),
        full_seconds: full_s,
        box_seconds: box_s,
        speedup: full_s / box_s.max(1e-12),
    };
    create_dir(&c.out_dir)?;
    write_json(&c.out_dir.join("bench.json"), &summary)?;
    write_json(&c.out_dir.join("timings.json"), &timings)?;
    println!(
        "{} scenes: full graph {:.4}s, per box {:.4}s, speedup {:.1}x, objective gap {:.2}%",
        ds.len(),
        full_s,
        box_s,
        timings.speedup,
        100.0 * summary.objective_gap
    );
    Ok(())
}

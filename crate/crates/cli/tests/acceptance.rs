//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Runs without the libtest harness so criteria execute one at a time and
//! wall-clock measurements are not skewed by concurrent tests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pweaver_core::assembly::rasterize_pose_features;
use pweaver_core::config::derive_seed;
use pweaver_core::eval::{average_precision, compute_adk, compute_map, compute_miou, evaluate, gt_joints, ImageEval};
use pweaver_core::eval::{AdkAccumulator, MapAccumulator, MiouAccumulator};
use pweaver_core::inference::{objective, random_problem, solve_exact, solve_heuristic, solve_oracle, SolverConfig};
use pweaver_core::pairwise::train_logistic;
use pweaver_core::pipeline::{bench_scene, collect_training_samples, infer_scene, synth_item, SynthItem};
use pweaver_core::{JointType, LabelMap, LogisticModel, NoiseSpec, Point, PoseConfiguration, RunConfig, SynthConfig};

const TRAIN_SEED: u64 = 101;
const TRAIN_SCENES: usize = 60;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn items(cfg: SynthConfig, seed: u64, n: usize) -> impl Iterator<Item = SynthItem> {
    (0..n).map(move |i| synth_item(&cfg, seed, i).expect("synthetic scene"))
}

fn train(cfg: &RunConfig) -> LogisticModel {
    let mut samples = Vec::new();
    for it in items(SynthConfig::default(), TRAIN_SEED, TRAIN_SCENES) {
        samples.extend(collect_training_samples(&it.scene, &it.maps, &it.boxes, cfg).expect("samples"));
    }
    train_logistic(&samples, &cfg.train).expect("training")
}

fn problems() -> impl Iterator<Item = pweaver_core::AssemblyProblem> {
    (0..200u64).map(|s| random_problem(1 + (s as usize % 8), 7_000 + s))
}

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for p in problems() {
        let exact = objective(&p, &solve_exact(&p, 12).expect("exact")).unwrap();
        let oracle = objective(&p, &solve_oracle(&p).expect("oracle")).unwrap();
        worst = worst.max((exact - oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 10.0,
        format!("max |exact - oracle| = {worst:.1e} (tol 1e-9), {secs:.2}s (limit 10s)"),
    )
}

fn c2_heuristic_quality() -> Outcome {
    let cfg = SolverConfig::default();
    let mut good = 0;
    for p in problems() {
        let oracle = objective(&p, &solve_oracle(&p).unwrap()).unwrap();
        let heur = objective(&p, &solve_heuristic(&p, &cfg)).unwrap();
        if heur <= oracle + 0.05 * oracle.abs() + 1e-12 {
            good += 1;
        }
    }
    outcome(good >= 190, format!("{good}/200 within 5% of the oracle (need >= 190)"))
}

fn c3_zero_noise(model: &LogisticModel, cfg: &RunConfig) -> Outcome {
    let synth = SynthConfig {
        noise: NoiseSpec::clean(),
        ..SynthConfig::default()
    };
    let (mut ap, mut adk) = (MapAccumulator::new(), AdkAccumulator::new());
    let mut slowest = 0.0f64;
    for (i, it) in items(synth, 303, 50).enumerate() {
        let start = Instant::now();
        let out = infer_scene(&it.maps, &it.boxes, model, cfg, i as u64).expect("inference");
        slowest = slowest.max(start.elapsed().as_secs_f64());
        ap.add_image(&out.poses, &it.scene.people);
        adk.add_image(&out.poses, &it.scene.people);
    }
    let map = ap.finish().map.unwrap_or(0.0);
    let mean_adk = adk.finish().mean.unwrap_or(f64::INFINITY);
    outcome(
        map == 1.0 && mean_adk < 2.0 && slowest < 2.0,
        format!("mAP {map:.4} (need 1.0), mean ADK {mean_adk:.3}% (need < 2%), slowest scene {slowest:.3}s (limit 2s)"),
    )
}

struct NoisyRun {
    map: f64,
    adk: f64,
    miou_refined: f64,
    miou_unrefined: f64,
}

fn noisy_run(model: &LogisticModel, cfg: &RunConfig) -> NoisyRun {
    let (mut ap, mut adk) = (MapAccumulator::new(), AdkAccumulator::new());
    let (mut refined, mut plain) = (MiouAccumulator::new(), MiouAccumulator::new());
    for (i, it) in items(SynthConfig::default(), 404, 100).enumerate() {
        let out = infer_scene(&it.maps, &it.boxes, model, cfg, i as u64).expect("inference");
        ap.add_image(&out.poses, &it.scene.people);
        adk.add_image(&out.poses, &it.scene.people);
        let gt = it.scene.composite().labels;
        refined.add(&out.parts, &gt).unwrap();
        plain.add(&out.parts_unrefined, &gt).unwrap();
    }
    NoisyRun {
        map: ap.finish().map.unwrap_or(0.0),
        adk: adk.finish().mean.unwrap_or(f64::INFINITY),
        miou_refined: refined.finish().miou.unwrap_or(0.0),
        miou_unrefined: plain.finish().miou.unwrap_or(0.0),
    }
}

fn c4_segment_ablation(with: &NoisyRun, without: &NoisyRun) -> Outcome {
    outcome(
        with.adk <= without.adk && with.map >= without.map,
        format!(
            "ADK {:.3}% with vs {:.3}% without (need <=), mAP {:.4} with vs {:.4} without (need >=)",
            with.adk, without.adk, with.map, without.map
        ),
    )
}

fn c5_decomposition(model: &LogisticModel, cfg: &RunConfig) -> Outcome {
    let synth = SynthConfig {
        height: 160,
        width: 400,
        min_people: 4,
        max_people: 4,
        min_gap: 20.0,
        noise: NoiseSpec::clean(),
        ..SynthConfig::default()
    };
    let (mut full_s, mut box_s, mut full_obj, mut box_obj) = (0.0, 0.0, 0.0, 0.0);
    let mut over = 0;
    for (i, it) in items(synth, 505, 50).enumerate() {
        let r = bench_scene(
            &it.scene,
            &it.maps,
            &it.boxes,
            model,
            cfg,
            derive_seed(505, "bench", i as u64),
        )
        .expect("bench");
        full_s += r.full_seconds;
        box_s += r.box_seconds;
        full_obj += r.full_objective;
        box_obj += r.box_objective;
        over += (r.objective_gap() > 0.05) as usize;
    }
    let speedup = full_s / box_s;
    let gap = (box_obj - full_obj).abs() / full_obj.abs();
    outcome(
        speedup >= 10.0 && gap <= 0.05,
        format!(
            "speedup {speedup:.1}x (need >= 10), summed objective gap {:.2}% (need <= 5%; {over}/50 scenes individually above 5%)",
            100.0 * gap
        ),
    )
}

fn as_prediction(joints: [Option<Point>; 14], score: f64) -> PoseConfiguration {
    PoseConfiguration {
        joints,
        score,
        source_box: 0,
    }
}

/// Per-class IOU from explicit pixel sets, averaged over classes present in either map.
fn miou_oracle(pred: &[u16; 9], gt: &[u16; 9]) -> f64 {
    let classes: BTreeSet<u16> = pred.iter().chain(gt).copied().collect();
    let ious: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let p: BTreeSet<usize> = (0..9).filter(|&k| pred[k] == c).collect();
            let g: BTreeSet<usize> = (0..9).filter(|&k| gt[k] == c).collect();
            p.intersection(&g).count() as f64 / p.union(&g).count() as f64
        })
        .collect();
    ious.iter().sum::<f64>() / ious.len() as f64
}

fn c6_metrics() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let it = synth_item(
        &SynthConfig {
            min_people: 3,
            max_people: 3,
            ..SynthConfig::default()
        },
        606,
        0,
    )
    .unwrap();
    let preds: Vec<_> = it
        .scene
        .people
        .iter()
        .enumerate()
        .map(|(k, p)| as_prediction(gt_joints(p), -(k as f64)))
        .collect();
    let gt_labels = it.scene.composite().labels;
    let report = evaluate(&[ImageEval {
        poses: &preds,
        scene: &it.scene,
        parts: Some(&gt_labels),
    }])
    .unwrap();
    let (map, adk, miou) = (
        report.ap.map.unwrap_or(0.0),
        report.adk.mean.unwrap_or(f64::NAN),
        report.iou.as_ref().and_then(|r| r.miou).unwrap_or(0.0),
    );
    pass &= map == 1.0 && adk == 0.0 && miou == 1.0;
    notes.push(format!("pred=GT: mAP {map} ADK {adk} mIOU {miou}"));

    let mut dup = preds.clone();
    dup.push(preds[0].clone());
    let dup_map = compute_map(&dup, &it.scene.people).map.unwrap_or(1.0);
    pass &= dup_map < 1.0 && compute_adk(&dup, &it.scene.people).mean == Some(0.0);
    notes.push(format!("duplicate: mAP {dup_map:.4}"));
    pass &= (average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12;

    let cases: [([u16; 9], [u16; 9]); 4] = [
        ([0, 0, 0, 1, 1, 1, 2, 2, 2], [0, 0, 0, 1, 1, 1, 2, 2, 2]),
        ([0, 0, 1, 0, 1, 1, 0, 0, 0], [0, 1, 1, 0, 1, 1, 0, 0, 0]),
        ([3, 3, 3, 3, 3, 3, 3, 3, 3], [0, 1, 2, 3, 4, 5, 6, 0, 1]),
        ([1, 2, 1, 2, 1, 2, 1, 2, 1], [2, 1, 2, 1, 2, 1, 2, 1, 0]),
    ];
    let mut worst = 0.0f64;
    for (p, g) in &cases {
        let to_map = |v: &[u16; 9]| LabelMap {
            height: 3,
            width: 3,
            labels: v.to_vec(),
        };
        let got = compute_miou(&to_map(p), &to_map(g)).unwrap().miou.unwrap();
        worst = worst.max((got - miou_oracle(p, g)).abs());
    }
    pass &= worst < 1e-12;
    notes.push(format!("3x3 cases max deviation {worst:.1e}"));
    outcome(pass, notes.join(", "))
}

fn segment_distance(px: f64, py: f64, (ax, ay): (f64, f64), (bx, by): (f64, f64)) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    ((px - ax - t * dx).powi(2) + (py - ay - t * dy).powi(2)).sqrt()
}

fn c7_rasterization() -> Outcome {
    let mut joints = [None; 14];
    joints[JointType::Neck.index()] = Some(Point::new(20.0, 20.0));
    let t = rasterize_pose_features(&[as_prediction(joints, 0.0)], 40, 40);
    let disc = t.data().chunks(2).filter(|px| px[0] == 1.0).count();

    let mut mismatched = 0;
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state = derive_seed(state, "segment", 0);
        2.0 + 36.0 * (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..20 {
        let (a, b) = ((next(), next()), (next(), next()));
        let mut joints = [None; 14];
        joints[JointType::LKnee.index()] = Some(Point::new(a.0, a.1));
        joints[JointType::LAnkle.index()] = Some(Point::new(b.0, b.1));
        let t = rasterize_pose_features(&[as_prediction(joints, 0.0)], 40, 40);
        for r in 0..40 {
            for c in 0..40 {
                let want = segment_distance(c as f64, r as f64, a, b) <= 3.5;
                mismatched += ((t.get(r, c, 1) == 1.0) != want) as usize;
            }
        }
    }
    outcome(
        disc == 29 && mismatched == 0,
        format!("disc pixels {disc} (need 29), stick mismatches {mismatched} over 20 random segments (need 0)"),
    )
}

fn digest_tree(root: &Path, skip: &[&str]) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !skip.iter().any(|s| path.ends_with(s)) {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn pipeline_run(dir: &Path, jobs: usize) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{"synth": {"height": 112, "width": 144, "max_people": 3}, "train": {"iterations": 300}}"#,
    )
    .unwrap();
    let d = |s: &str| dir.join(s).display().to_string();
    let jobs = jobs.to_string();
    let steps: [Vec<String>; 5] = [
        vec![
            "synth".into(),
            "--count".into(),
            "4".into(),
            "--out-dir".into(),
            d("data"),
        ],
        vec![
            "train".into(),
            "--data".into(),
            d("data"),
            "--out-dir".into(),
            d("model"),
        ],
        vec![
            "infer".into(),
            "--data".into(),
            d("data"),
            "--model".into(),
            d("model/model.json"),
            "--overlay".into(),
            "--out-dir".into(),
            d("pred"),
        ],
        vec![
            "eval".into(),
            "--data".into(),
            d("data"),
            "--pred".into(),
            d("pred"),
            "--out-dir".into(),
            d("eval"),
        ],
        vec![
            "bench".into(),
            "--data".into(),
            d("data"),
            "--model".into(),
            d("model/model.json"),
            "--out-dir".into(),
            d("bench"),
        ],
    ];
    for args in &steps {
        let status = Command::new(env!("CARGO_BIN_EXE_pweaver"))
            .args(args)
            .args([
                "--seed",
                "17",
                "--jobs",
                &jobs,
                "--config",
                &config.display().to_string(),
            ])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!(
                "{} failed: {}",
                args[0],
                String::from_utf8_lossy(&status.stderr)
            ));
        }
    }
    Ok(digest_tree(dir, &["timings.json"]))
}

fn c8_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut reference: Option<BTreeMap<String, Vec<u8>>> = None;
    let mut differing = BTreeSet::new();
    let mut files = 0;
    for (k, jobs) in [1, 1, 4, 4].into_iter().enumerate() {
        let dir = tmp.path().join(format!("run{k}"));
        std::fs::create_dir_all(&dir).unwrap();
        let tree = match pipeline_run(&dir, jobs) {
            Ok(t) => t,
            Err(e) => return outcome(false, e),
        };
        std::fs::remove_dir_all(&dir).unwrap();
        match &reference {
            None => {
                files = tree.len();
                reference = Some(tree);
            }
            Some(r) => {
                let keys: BTreeSet<&String> = r.keys().chain(tree.keys()).collect();
                for key in keys {
                    if r.get(key) != tree.get(key) {
                        differing.insert(key.clone());
                    }
                }
            }
        }
    }
    outcome(
        differing.is_empty() && files > 0,
        format!(
            "{files} files compared across 2 runs x --jobs 1 and 4 (bench timings excluded); {} differ{}",
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(": {:?}", differing)
            }
        ),
    )
}

fn c9_refinement(run: &NoisyRun) -> Outcome {
    outcome(
        run.miou_refined >= run.miou_unrefined,
        format!(
            "refined mIOU {:.4} vs unrefined {:.4} (need >=)",
            run.miou_refined, run.miou_unrefined
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    report("C1 oracle equivalence", c1_oracle_equivalence());
    report("C2 heuristic quality", c2_heuristic_quality());

    let cfg = RunConfig::default();
    let model = train(&cfg);
    report("C3 zero-noise recovery", c3_zero_noise(&model, &cfg));

    let with = noisy_run(&model, &cfg);
    let plain_cfg = RunConfig {
        segment_features: false,
        ..RunConfig::default()
    };
    let plain_model = train(&plain_cfg);
    let without = noisy_run(&plain_model, &plain_cfg);
    drop(plain_model);
    report("C4 segment-consistency ablation", c4_segment_ablation(&with, &without));
    report("C5 decomposition speedup", c5_decomposition(&model, &cfg));
    report("C6 metric correctness", c6_metrics());
    report("C7 rasterization", c7_rasterization());
    report("C8 determinism", c8_determinism());
    report("C9 pose refinement effect", c9_refinement(&with));

    let failed: Vec<_> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

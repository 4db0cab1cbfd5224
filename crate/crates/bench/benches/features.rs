use criterion::{criterion_group, criterion_main, Criterion};
use pweaver_bench::{geometric_model, scene};
use pweaver_core::inference::build_problem;
use pweaver_core::pairwise::JointPartAssociation;
use pweaver_core::pipeline::infer_scene;
use pweaver_core::proposals::{auto_zoom, propose_joints};
use pweaver_core::tensor::argmax_channel;
use pweaver_core::RunConfig;

fn stages(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let model = geometric_model();
    let assoc = JointPartAssociation::default();
    let item = scene(2, 3);
    let det = item.boxes[0];

    c.bench_function("auto_zoom", |b| {
        b.iter(|| auto_zoom(&det, &item.maps, &cfg.zoom).unwrap())
    });

    let region = auto_zoom(&det, &item.maps, &cfg.zoom).unwrap();
    c.bench_function("propose_joints", |b| b.iter(|| propose_joints(&region, &cfg.proposals)));

    let proposals = propose_joints(&region, &cfg.proposals);
    let labels = argmax_channel(&region.parts);
    c.bench_function("build_problem", |b| {
        b.iter(|| build_problem(&region, &proposals, &model, &assoc, &labels, true).unwrap())
    });
    c.bench_function("build_problem_without_segments", |b| {
        b.iter(|| build_problem(&region, &proposals, &model, &assoc, &labels, false).unwrap())
    });
}

fn scenes(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let model = geometric_model();
    let item = scene(4, 5);
    let mut group = c.benchmark_group("scene");
    group.sample_size(10);
    group.bench_function("infer_4_people", |b| {
        b.iter(|| infer_scene(&item.maps, &item.boxes, &model, &cfg, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, stages, scenes);
criterion_main!(benches);

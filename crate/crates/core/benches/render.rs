use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use corgs::coreg::knn_match;
use corgs::raster::{render, render_backward, Upstream};
use corgs::scene::{generate_synthetic_scene, ImageBuffer, SynthOptions};
use corgs::Exec;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_render(c: &mut Criterion) {
    let ds = generate_synthetic_scene(&SynthOptions::new(1, 400, 3, 1, (96, 96))).unwrap();
    let field = ds.ground_truth.clone().unwrap();
    let cam = ds.train_cameras[0];
    let mut group = c.benchmark_group("render");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| render(&field, &cam, ds.background, exec).unwrap())
        });
    }
    let out = render(&field, &cam, ds.background, Exec::Parallel).unwrap();
    let grad = ImageBuffer::filled(96, 96, 3, 1e-4);
    let up = Upstream {
        color: &grad,
        depth: None,
    };
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::new("backward", name), |b| {
            b.iter(|| render_backward(&field, &cam, &out, &up, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_knn(c: &mut Criterion) {
    let a = generate_synthetic_scene(&SynthOptions::new(2, 20_000, 2, 0, (8, 8))).unwrap();
    let b = generate_synthetic_scene(&SynthOptions::new(3, 20_000, 2, 0, (8, 8))).unwrap();
    let (fa, fb) = (a.ground_truth.unwrap(), b.ground_truth.unwrap());
    let mut group = c.benchmark_group("knn");
    for (name, exec) in POLICIES {
        group.bench_function(name, |bch| bch.iter(|| knn_match(&fa, &fb, exec)));
    }
    group.finish();
}

criterion_group!(benches, bench_render, bench_knn);
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gdekit_bench::{bench_rays, bench_set};
use gdekit_core::gde::{brute_force_project, encode, encode_grad, project_max};

fn bench_encoding(c: &mut Criterion) {
    let set = bench_set(256);
    let rays = bench_rays(64);

    c.bench_function("project_max", |b| {
        let g = &set.gaussians[0];
        b.iter(|| {
            for ray in &rays {
                black_box(project_max(g, ray, 0.3).unwrap());
            }
        })
    });

    c.bench_function("encode_256", |b| {
        b.iter(|| {
            for ray in &rays {
                black_box(encode(&set, ray, 0.3));
            }
        })
    });

    c.bench_function("encode_grad_256", |b| {
        let upstream = vec![1.0; set.len()];
        b.iter(|| {
            for ray in &rays {
                black_box(encode_grad(&set, ray, 0.3, &upstream));
            }
        })
    });

    c.bench_function("brute_force_project_1e5", |b| {
        let g = &set.gaussians[0];
        b.iter(|| black_box(brute_force_project(g, &rays[0], 0.3, 20.0, 100_000)))
    });
}

criterion_group!(benches, bench_encoding);
criterion_main!(benches);

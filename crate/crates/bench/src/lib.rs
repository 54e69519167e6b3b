//! Shared fixtures for the criterion benches.

use gdekit_core::gde::{Bbox, GaussianSet};
use gdekit_core::geom::{Ray, Vec3};
use gdekit_core::rng;

pub fn bench_set(count: usize) -> GaussianSet {
    let bbox = Bbox::new(Vec3::splat(-2.0), Vec3::splat(2.0));
    GaussianSet::init_in_bbox(count, bbox, &mut rng::stream(7, "bench-set"))
}

pub fn bench_rays(count: usize) -> Vec<Ray> {
    (0..count)
        .map(|i| {
            let a = i as f64 * 0.618;
            Ray::new(
                Vec3::new(a.sin() * 0.5, a.cos() * 0.5, -1.5),
                Vec3::new(a.cos() * 0.2, a.sin() * 0.2, 1.0).normalized(),
                0.01,
            )
        })
        .collect()
}

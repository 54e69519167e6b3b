use std::time::Instant;
use gdekit_core::toy::{toy_light_layout, toy_env_radiance, preconvolve_oracle};
use gdekit_core::geom::Vec3;
use gdekit_core::rng;

fn main() {
    let mut r = rng::stream(1, "toy-layout");
    let lights = toy_light_layout(&mut r);
    let x = Vec3::new(0.2, 0.1, 0.0);
    let d = Vec3::new(0.05, 0.02, 1.0).normalized();
    let t0 = Instant::now();
    let mut acc = Vec3::ZERO;
    for i in 0..1_000_000 {
        let dir = Vec3::new(0.05 + (i as f64 * 1e-7), 0.02, 1.0).normalized();
        acc += toy_env_radiance(&lights, x, dir);
    }
    println!("1M env queries: {:.2?} (acc {acc:?})", t0.elapsed());
    let t0 = Instant::now();
    let v = preconvolve_oracle(&lights, x, d, 0.08, 1_000_000, 7).unwrap();
    println!("1M-sample preconvolve: {:.2?} ({v:?})", t0.elapsed());
}

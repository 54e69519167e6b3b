// Temporary tuning harness; removed before release.
use std::time::Instant;

use gdekit_core::field::{FieldConfig, FieldTrainer, SceneField, TrainConfig};
use gdekit_core::gde::GaussianSet;
use gdekit_core::geom::{metrics, ImageBuffer};
use gdekit_core::optim::{
    build_ray_dataset, fit_light_field, FitConfig, InitTrainer, SpecularDecoder,
};
use gdekit_core::rng;
use gdekit_core::toy::{
    build_room_dataset, fibonacci_hemisphere, fit_coefficients, fit_targets,
    gaussians_from_lights, probe_track, toy_light_layout, EncodingKind, RoomConfig,
    TOY_COEFF_COUNT,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(|s| s.as_str()).unwrap_or("all");

    if what == "toy" || what == "all" {
        toy_check();
    }
    if what == "gen" || what == "all" {
        gen_check();
    }
    if what == "fit" || what == "all" {
        fit_check();
    }
    if what == "train" || what == "all" {
        train_check();
    }
}

fn toy_check() {
    println!("== toy experiment (criterion 3 rehearsal) ==");
    let t0 = Instant::now();
    for seed in 0..5u64 {
        let mut layout_rng = rng::stream(seed, "toy-layout");
        let lights = toy_light_layout(&mut layout_rng);
        let track = probe_track(4);
        let dirs = fibonacci_hemisphere(512);
        let rho = 0.12;
        let targets = fit_targets(&lights, &track, &dirs, rho, 10_000, seed).unwrap();
        let sh = fit_coefficients(EncodingKind::Sh, None, &track, &dirs, &targets, rho, 1e-9)
            .unwrap();
        let set = gaussians_from_lights(&lights, TOY_COEFF_COUNT, rho);
        let gde =
            fit_coefficients(EncodingKind::Gde, Some(&set), &track, &dirs, &targets, rho, 1e-9)
                .unwrap();
        println!(
            "seed {seed}: mse sh {:.6} gde {:.6} ({}) | var sh {:.3} gde {:.3} ({})",
            sh.total_mse,
            gde.total_mse,
            if gde.total_mse < sh.total_mse { "OK" } else { "FAIL" },
            sh.variation_score,
            gde.variation_score,
            if gde.variation_score < sh.variation_score { "OK" } else { "FAIL" },
        );
    }
    println!("toy total: {:.1?}", t0.elapsed());
}

fn gen_check() {
    println!("== dataset generation timing ==");
    for n_mc in [1024usize] {
        let cfg = RoomConfig { seed: 1, n_mc, ..Default::default() };
        let t0 = Instant::now();
        let ds = build_room_dataset(&cfg).unwrap();
        println!(
            "gen {} views {}x{} n_mc {}: {:.1?}",
            ds.views.len(),
            cfg.image_width,
            cfg.image_height,
            n_mc,
            t0.elapsed()
        );
    }
}

fn fit_check() {
    println!("== light-field init (criterion 4 rehearsal) ==");
    let cfg = RoomConfig { seed: 1, n_mc: 1024, ..Default::default() };
    let t0 = Instant::now();
    let ds = build_room_dataset(&cfg).unwrap();
    println!("dataset: {:.1?}", t0.elapsed());

    let t0 = Instant::now();
    let train_images: Vec<ImageBuffer> = ds
        .train_ids
        .iter()
        .map(|&i| ds.views[i].image.clone())
        .collect();
    let train_cams: Vec<_> = ds.train_ids.iter().map(|&i| ds.views[i].camera.clone()).collect();
    let rays = build_ray_dataset(&train_images, &train_cams).unwrap();
    println!("ray dataset: {} records, {:.1?}", rays.len(), t0.elapsed());

    let mut r = rng::stream(1, "init-gaussians");
    let set = GaussianSet::init_in_bbox(256, ds.scene_bbox(), &mut r);
    let dec = SpecularDecoder::new(256, &mut r);
    let fit_cfg = FitConfig { iterations: 4000, batch_size: 2048, seed: 1, ..Default::default() };

    // Held-out ray dataset for checkpoint evaluations.
    let test_images: Vec<ImageBuffer> =
        ds.test_ids.iter().map(|&i| ds.views[i].image.clone()).collect();
    let test_cams: Vec<_> = ds.test_ids.iter().map(|&i| ds.views[i].camera.clone()).collect();
    let held = build_ray_dataset(&test_images, &test_cams).unwrap();

    let mut trainer = InitTrainer::new(set, dec, fit_cfg);
    let t0 = Instant::now();
    let mut losses = Vec::new();
    for stop in [500u64, 1000, 1500, 2000, 3000, 4000] {
        while trainer.iter < stop {
            losses.push(trainer.step(&rays).unwrap());
        }
        let mut se = 0.0;
        let mut per_rho: std::collections::BTreeMap<u64, (f64, usize)> = Default::default();
        for rec in &held.records {
            let pred = trainer.predict(&rec.ray, rec.roughness);
            let mut s = 0.0;
            for c in 0..3 {
                let d = pred[c] - rec.target[c];
                s += d * d;
            }
            se += s;
            let key = (rec.roughness * 1e6) as u64;
            let e = per_rho.entry(key).or_insert((0.0, 0));
            e.0 += s;
            e.1 += 1;
        }
        let mse = se / (held.len() * 3) as f64;
        print!("iter {stop}: psnr {:.2} dB [per-level:", 10.0 * (1.0 / mse).log10());
        for (k, (s, n)) in &per_rho {
            print!(" {:.4}:{:.1}", *k as f64 / 1e6, 10.0 * ((*n * 3) as f64 / s).log10());
        }
        println!("] ({:.0?})", t0.elapsed());
    }
}

fn train_check() {
    println!("== field training timing ==");
    let cfg = RoomConfig { seed: 1, n_mc: 1024, ..Default::default() };
    let ds = build_room_dataset(&cfg).unwrap();
    let data = ds.to_train_set(true);

    let bbox = ds.scene_bbox();
    let mut r = rng::stream(1, "train-rehearse");
    let field_cfg = FieldConfig {
        bbox_min: bbox.min.to_array(),
        bbox_max: bbox.max.to_array(),
        ..Default::default()
    };
    let field = SceneField::new(field_cfg, &mut r);
    let set = GaussianSet::init_in_bbox(256, bbox, &mut r);
    let dec = SpecularDecoder::new(256, &mut r);
    let tcfg = TrainConfig {
        iterations: 60,
        batch_size: 256,
        seed: 1,
        n_coarse: 20,
        n_importance: 12,
        validate_every: 0,
        ..Default::default()
    };
    let mut trainer = FieldTrainer::new(field, set, dec, tcfg);
    let t0 = Instant::now();
    for i in 0..60u64 {
        let rec = trainer.step(&data).unwrap();
        if i % 20 == 0 {
            println!(
                "iter {i}: total {:.4} color {:.4} dist {:.4} mono {:.4} norm {:.4} ({:.2?}/iter)",
                rec.total,
                rec.l_color,
                rec.l_dist,
                rec.l_mono,
                rec.l_norm,
                t0.elapsed() / (i as u32 + 1)
            );
        }
    }
    println!("60 iters: {:.1?}", t0.elapsed());
    let t0 = Instant::now();
    let psnr = trainer.validation_psnr(&data).unwrap();
    println!("val psnr after 60 iters: {psnr:.2} dB ({:.1?})", t0.elapsed());
}

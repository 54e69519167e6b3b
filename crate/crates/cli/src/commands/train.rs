//! train: joint optimization of the scene field, Gaussians and decoder.

use std::path::Path;

use gdekit_core::field::{FieldConfig, FieldTrainer, SceneField, TrainConfig, TrainMetrics};
use gdekit_core::gde::GaussianSet;
use gdekit_core::geom::metrics::mae_degrees;
use gdekit_core::geom::{ImageBuffer, Vec3};
use gdekit_core::optim::{InitTrainer, SpecularDecoder};
use gdekit_core::rng;
use gdekit_core::toy::{load_room_dataset, RoomDataset};

use crate::config::{Manifest, RunConfig};
use crate::model::ModelBundle;
use crate::CliError;

#[derive(Clone, Copy, Debug, Default)]
pub struct Ablations {
    pub no_init: bool,
    pub no_gauss_opt: bool,
    pub no_mono: bool,
    pub no_early_stop: bool,
    pub diffuse_only: bool,
}

pub fn run(
    cfg: &RunConfig,
    threads: usize,
    dataset_dir: &Path,
    init: Option<&Path>,
    out: &Path,
    ab: Ablations,
) -> Result<(), CliError> {
    let ds = load_room_dataset(dataset_dir)
        .map_err(|e| CliError::user(format!("dataset {}: {e}", dataset_dir.display())))?;
    let bbox = ds.scene_bbox();

    // Gaussians and decoder come from the initialization checkpoint unless
    // the ablation asks for a cold start.
    let (set, decoder) = if ab.no_init {
        let mut r = rng::stream(cfg.seed, "init-gaussians");
        (
            GaussianSet::init_in_bbox(cfg.gaussian_count, bbox, &mut r),
            SpecularDecoder::new(cfg.gaussian_count, &mut r),
        )
    } else {
        let path = init.ok_or_else(|| {
            CliError::user("--init checkpoint required (or pass --no-init)")
        })?;
        let t = InitTrainer::load(path)
            .map_err(|e| CliError::user(format!("init checkpoint {}: {e}", path.display())))?;
        (t.set, t.decoder)
    };

    let mut weights = cfg.loss_weights();
    if ab.no_mono {
        weights.lambda_mono = 0.0;
    }
    if ab.no_early_stop {
        weights.mono_stop_iter = u64::MAX;
    }
    let tcfg = TrainConfig {
        iterations: cfg.train.iterations,
        batch_size: cfg.train.batch_size,
        lr: cfg.train.lr,
        seed: cfg.seed,
        weights,
        optimize_gaussians: !ab.no_gauss_opt,
        diffuse_only: ab.diffuse_only,
        validate_every: cfg.train.validate_every,
        val_scale: cfg.train.val_scale,
        n_coarse: cfg.train.n_coarse,
        n_importance: cfg.train.n_importance,
        gate_eps: cfg.train.gate_eps,
        t_near: cfg.train.t_near,
        background: cfg.background,
    };

    let field_cfg = FieldConfig {
        bbox_min: bbox.min.to_array(),
        bbox_max: bbox.max.to_array(),
        ..Default::default()
    };
    let field = SceneField::new(field_cfg, &mut rng::stream(cfg.seed, "field-init"));
    let data = ds.to_train_set(weights.lambda_mono > 0.0);
    let mut trainer = FieldTrainer::new(field, set, decoder, tcfg);
    let mut metrics = TrainMetrics::default();
    trainer.run(&data, &mut metrics)?;

    let final_psnr = trainer.validation_psnr(&data)?;
    let floor_mae = floor_mae_degrees(&trainer, &ds, tcfg.val_scale)?;

    std::fs::create_dir_all(out)?;
    ModelBundle {
        field: trainer.field,
        set: trainer.set,
        decoder: trainer.decoder,
    }
    .save(out)?;
    let flags = serde_json::json!({
        "no_init": ab.no_init,
        "no_gauss_opt": ab.no_gauss_opt,
        "no_mono": ab.no_mono,
        "no_early_stop": ab.no_early_stop,
        "diffuse_only": ab.diffuse_only,
    });
    let report = serde_json::json!({
        "final_val_psnr": final_psnr,
        "floor_mae_deg": floor_mae,
        "val_psnr": metrics.val_psnr,
        "iters": metrics.iters,
        "flags": flags,
    });
    std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&report)?)
        .map_err(CliError::from)?;
    std::fs::write(
        out.join("train_config.json"),
        serde_json::to_string_pretty(&tcfg).map_err(gdekit_core::Error::from)?,
    )?;
    Manifest::new("train", cfg, threads, flags).write(out)?;
    println!(
        "train: {} iterations, validation PSNR {:.2} dB, floor MAE {:.2} deg",
        cfg.train.iterations, final_psnr, floor_mae
    );
    Ok(())
}

/// Mean angular error over floor pixels of the test views, comparing
/// rendered normals against the dataset's ground truth.
pub fn floor_mae_degrees(
    trainer: &FieldTrainer,
    ds: &RoomDataset,
    scale: usize,
) -> Result<f64, CliError> {
    let params = trainer.cfg.render_params();
    let mut total = 0.0;
    let mut count = 0usize;
    for &ti in &ds.test_ids {
        let view = &ds.views[ti];
        let cam = view.camera.scaled(1.0 / scale as f64);
        let bufs = gdekit_core::field::render_view_buffers(
            &trainer.field,
            &trainer.set,
            &trainer.decoder,
            &cam,
            0.0,
            &params,
        );
        // Ground-truth world normals at the downscaled grid.
        let mut pred = ImageBuffer::new(cam.width, cam.height, 3);
        let mut gt = ImageBuffer::new(cam.width, cam.height, 3);
        for y in 0..cam.height {
            for x in 0..cam.width {
                let gx = (x * scale).min(view.image.width - 1);
                let gy = (y * scale).min(view.image.height - 1);
                let n_world = view.camera.normal_to_world(view.normal_view.pixel_vec3(gx, gy));
                let floor = n_world.dot(Vec3::new(0.0, 0.0, 1.0)) > 0.99
                    && view.gt_tint.get(gx, gy, 0) > 0.0;
                let n_pred = bufs.normal.pixel_vec3(x, y);
                if !floor || n_pred == Vec3::ZERO {
                    pred.set_valid(x, y, false);
                    gt.set_valid(x, y, false);
                    continue;
                }
                pred.set_pixel_vec3(x, y, n_pred);
                gt.set_pixel_vec3(x, y, n_world);
            }
        }
        if pred.valid_count() == 0 {
            continue;
        }
        total += mae_degrees(&pred, &gt)?;
        count += 1;
    }
    if count == 0 {
        return Ok(180.0);
    }
    Ok(total / count as f64)
}

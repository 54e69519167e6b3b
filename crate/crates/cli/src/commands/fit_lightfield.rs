//! fit-lightfield: train the preconvolved incident light field.

use std::io::Write;
use std::path::Path;

use gdekit_core::gde::GaussianSet;
use gdekit_core::optim::{build_ray_dataset, FitConfig, InitTrainer, SpecularDecoder};
use gdekit_core::rng;
use gdekit_core::toy::load_room_dataset;
use gdekit_core::Error;

use crate::config::{Manifest, RunConfig};
use crate::CliError;

pub fn run(
    cfg: &RunConfig,
    threads: usize,
    dataset_dir: &Path,
    out: &Path,
    loss_csv: Option<&Path>,
    resume: Option<&Path>,
    paper_scale: bool,
) -> Result<(), CliError> {
    let ds = load_room_dataset(dataset_dir)
        .map_err(|e| CliError::user(format!("dataset {}: {e}", dataset_dir.display())))?;
    let train_images: Vec<_> =
        ds.train_ids.iter().map(|&i| ds.views[i].image.clone()).collect();
    let train_cams: Vec<_> =
        ds.train_ids.iter().map(|&i| ds.views[i].camera.clone()).collect();
    let rays = build_ray_dataset(&train_images, &train_cams)?;
    if rays.is_empty() {
        return Err(CliError::from(Error::EmptyDataset));
    }

    let mut fit_cfg = FitConfig {
        iterations: cfg.init.iterations,
        batch_size: cfg.init.batch_size,
        lr: cfg.init.lr,
        seed: cfg.seed,
        optimize_gaussians: true,
    };
    if paper_scale {
        fit_cfg = fit_cfg.paper_scale();
    }

    let mut trainer = match resume {
        Some(path) => {
            let t = InitTrainer::load(path)
                .map_err(|e| CliError::user(format!("resume {}: {e}", path.display())))?;
            println!("resumed at iteration {}", t.iter);
            t
        }
        None => {
            let mut r = rng::stream(cfg.seed, "init-gaussians");
            let set = GaussianSet::init_in_bbox(cfg.gaussian_count, ds.scene_bbox(), &mut r);
            let dec = SpecularDecoder::new(cfg.gaussian_count, &mut r);
            InitTrainer::new(set, dec, fit_cfg)
        }
    };

    let mut losses = Vec::new();
    trainer.run(&rays, &mut losses)?;

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    trainer.save(out)?;
    // Interop blob of the trained Gaussians next to the checkpoint.
    trainer.set.save(&out.with_extension("gde1"))?;

    if let Some(csv) = loss_csv {
        let mut w = std::io::BufWriter::new(std::fs::File::create(csv)?);
        writeln!(w, "iter,loss")?;
        let offset = trainer.iter as usize - losses.len();
        for (i, l) in losses.iter().enumerate() {
            writeln!(w, "{},{l:.10}", offset + i)?;
        }
    }
    if let Some(dir) = out.parent() {
        Manifest::new(
            "fit-lightfield",
            cfg,
            threads,
            serde_json::json!({ "paper_scale": paper_scale, "resumed": resume.is_some() }),
        )
        .write(if dir.as_os_str().is_empty() { Path::new(".") } else { dir })?;
    }
    let tail = losses.iter().rev().take(50.min(losses.len().max(1))).sum::<f64>()
        / 50.0f64.min(losses.len().max(1) as f64);
    println!(
        "fit-lightfield: {} iterations, {} rays/batch, final mean loss {:.5}",
        trainer.iter, trainer.cfg.batch_size, tail
    );
    Ok(())
}

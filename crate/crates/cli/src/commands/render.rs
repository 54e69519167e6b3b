//! render: emit per-buffer images from a trained model.

use std::path::Path;

use gdekit_core::field::{render_view_buffers, RenderParams};
use gdekit_core::geom::{pfm, png, Camera, Vec3};

use crate::config::{Manifest, RunConfig};
use crate::model::ModelBundle;
use crate::CliError;

#[derive(serde::Deserialize)]
struct CamerasJson {
    cameras: Vec<Camera>,
    #[serde(default)]
    train_ids: Vec<usize>,
    #[serde(default)]
    test_ids: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    cfg: &RunConfig,
    threads: usize,
    checkpoint: &Path,
    cameras: &Path,
    out: &Path,
    roughness_offset: f64,
    views: &str,
    scale: usize,
) -> Result<(), CliError> {
    let model = ModelBundle::load(checkpoint)?;
    let cam_path = if cameras.is_dir() { cameras.join("cameras.json") } else { cameras.to_path_buf() };
    let cams: CamerasJson = serde_json::from_str(
        &std::fs::read_to_string(&cam_path)
            .map_err(|e| CliError::user(format!("cameras {}: {e}", cam_path.display())))?,
    )
    .map_err(|e| CliError::user(format!("cameras {}: {e}", cam_path.display())))?;

    let ids: Vec<usize> = match views {
        "all" => (0..cams.cameras.len()).collect(),
        "train" => cams.train_ids.clone(),
        "test" => cams.test_ids.clone(),
        list => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::user(format!("bad view id {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    if ids.is_empty() {
        return Err(CliError::user("no views selected"));
    }
    for &i in &ids {
        if i >= cams.cameras.len() {
            return Err(CliError::user(format!("view {i} out of range")));
        }
    }

    // Train-time render parameters travel with the checkpoint when present.
    let params = match std::fs::read_to_string(checkpoint.join("train_config.json")) {
        Ok(text) => {
            let tc: gdekit_core::field::TrainConfig =
                serde_json::from_str(&text).map_err(gdekit_core::Error::from)?;
            tc.render_params()
        }
        Err(_) => RenderParams { background: Vec3::from_array(cfg.background), ..Default::default() },
    };

    std::fs::create_dir_all(out)?;
    for &i in &ids {
        let cam = if scale > 1 {
            cams.cameras[i].scaled(1.0 / scale as f64)
        } else {
            cams.cameras[i].clone()
        };
        let bufs =
            render_view_buffers(&model.field, &model.set, &model.decoder, &cam, roughness_offset, &params);
        pfm::write_pfm(&out.join(format!("final_{i:04}.pfm")), &bufs.final_color)?;
        pfm::write_pfm(&out.join(format!("diffuse_{i:04}.pfm")), &bufs.diffuse)?;
        pfm::write_pfm(&out.join(format!("specular_{i:04}.pfm")), &bufs.specular)?;
        pfm::write_pfm(&out.join(format!("tint_{i:04}.pfm")), &bufs.tint)?;
        pfm::write_pfm(&out.join(format!("roughness_{i:04}.pfm")), &bufs.roughness)?;
        pfm::write_pfm(
            &out.join(format!("normal_{i:04}.pfm")),
            &pfm::encode_normals(&bufs.normal),
        )?;
        pfm::write_pfm(&out.join(format!("depth_{i:04}.pfm")), &bufs.depth)?;
        png::write_png(&out.join(format!("final_{i:04}.png")), &bufs.final_color)?;
        png::write_png(&out.join(format!("specular_{i:04}.png")), &bufs.specular)?;
    }
    Manifest::new(
        "render",
        cfg,
        threads,
        serde_json::json!({
            "roughness_offset": roughness_offset,
            "views": ids,
            "scale": scale,
        }),
    )
    .write(out)?;
    println!("rendered {} views to {}", ids.len(), out.display());
    Ok(())
}

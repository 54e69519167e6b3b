//! eval: PSNR / SSIM / MAE between rendered views and ground truth.

use std::path::{Path, PathBuf};

use gdekit_core::geom::{mae_degrees, pfm, psnr, ssim, Camera, ImageBuffer, Vec3};

use crate::config::{Manifest, RunConfig};
use crate::CliError;

/// Finds view images in either a dataset directory (images/0000.pfm) or a
/// render directory (final_0000.pfm).
fn image_path(dir: &Path, idx: usize) -> Option<PathBuf> {
    let candidates = [
        dir.join(format!("images/{idx:04}.pfm")),
        dir.join(format!("final_{idx:04}.pfm")),
    ];
    candidates.into_iter().find(|p| p.exists())
}

fn normal_path(dir: &Path, idx: usize) -> Option<PathBuf> {
    let candidates = [
        dir.join(format!("normals/{idx:04}.pfm")),
        dir.join(format!("normal_{idx:04}.pfm")),
    ];
    candidates.into_iter().find(|p| p.exists())
}

fn collect_ids(dir: &Path) -> Vec<usize> {
    (0..10_000).filter(|&i| image_path(dir, i).is_some()).collect()
}

pub fn run(
    cfg: &RunConfig,
    threads: usize,
    render_dir: &Path,
    gt_dir: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let render_ids = collect_ids(render_dir);
    let gt_ids = collect_ids(gt_dir);
    if render_ids.is_empty() {
        return Err(CliError::user(format!("no images found in {}", render_dir.display())));
    }
    // Every rendered view needs its ground-truth counterpart.
    for i in &render_ids {
        if !gt_ids.contains(i) {
            return Err(CliError::user(format!("view {i} missing from {}", gt_dir.display())));
        }
    }

    // Optional camera poses let the normal MAE report a floor-plane figure.
    let cams: Option<Vec<Camera>> = std::fs::read_to_string(gt_dir.join("cameras.json"))
        .ok()
        .and_then(|text| {
            serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| serde_json::from_value(v["cameras"].clone()).ok())
        });

    let mut per_view = Vec::new();
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    let mut mae_sum = 0.0;
    let mut mae_count = 0usize;
    let mut floor_sum = 0.0;
    let mut floor_count = 0usize;
    for &i in &render_ids {
        let mut rendered = pfm::read_pfm(&image_path(render_dir, i).unwrap())?;
        let mut gt = pfm::read_pfm(&image_path(gt_dir, i).unwrap())?;
        if rendered.width != gt.width && gt.width % rendered.width == 0 {
            // Renders may be downscaled; bring ground truth to match.
            gt = gt.downscale(gt.width / rendered.width);
        }
        for img in [&mut rendered, &mut gt] {
            for v in img.data.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        let p = psnr(&rendered, &gt)?;
        let s = ssim(&rendered, &gt)?;
        psnr_sum += p;
        ssim_sum += s;
        let mut entry = serde_json::json!({ "view": i, "psnr": p, "ssim": s });

        if let (Some(rn), Some(gn)) = (normal_path(render_dir, i), normal_path(gt_dir, i)) {
            let mut pred = pfm::decode_normals(&pfm::read_pfm(&rn)?);
            let mut gtn = pfm::decode_normals(&pfm::read_pfm(&gn)?);
            if pred.width != gtn.width && gtn.width % pred.width == 0 {
                gtn = gtn.downscale(gtn.width / pred.width);
            }
            if pred.same_shape(&gtn) {
                mask_nonunit(&mut pred);
                mask_nonunit(&mut gtn);
                if pred.jointly_valid(&gtn).next().is_some() {
                    let mae = mae_degrees(&pred, &gtn)?;
                    mae_sum += mae;
                    mae_count += 1;
                    entry["mae_deg"] = serde_json::json!(mae);
                    if let Some(cams) = &cams {
                        if let Some(f) = floor_mae(&pred, &gtn, &cams[i])? {
                            floor_sum += f;
                            floor_count += 1;
                            entry["floor_mae_deg"] = serde_json::json!(f);
                        }
                    }
                }
            }
        }
        per_view.push(entry);
    }

    let n = render_ids.len() as f64;
    let mut summary = serde_json::json!({
        "views": render_ids,
        "psnr": psnr_sum / n,
        "ssim": ssim_sum / n,
        "per_view": per_view,
    });
    if mae_count > 0 {
        summary["mae_deg"] = serde_json::json!(mae_sum / mae_count as f64);
    }
    if floor_count > 0 {
        summary["floor_mae_deg"] = serde_json::json!(floor_sum / floor_count as f64);
    }
    let text = serde_json::to_string_pretty(&summary).expect("metrics serialize");
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, &text)?;
            if let Some(dir) = path.parent() {
                Manifest::new("eval", cfg, threads, serde_json::json!({})).write(if dir
                    .as_os_str()
                    .is_empty()
                {
                    Path::new(".")
                } else {
                    dir
                })?;
            }
        }
        None => println!("{text}"),
    }
    if out.is_some() {
        println!(
            "eval: psnr {:.2} dB, ssim {:.4}{}",
            psnr_sum / n,
            ssim_sum / n,
            if mae_count > 0 {
                format!(", mae {:.2} deg", mae_sum / mae_count as f64)
            } else {
                String::new()
            }
        );
    }
    Ok(())
}

/// Invalidates pixels whose stored normal is not close to unit length
/// (e.g. the zero normals of empty view rays).
fn mask_nonunit(img: &mut ImageBuffer) {
    for y in 0..img.height {
        for x in 0..img.width {
            let n = img.pixel_vec3(x, y).norm();
            if !(0.5..=1.5).contains(&n) {
                img.set_valid(x, y, false);
            }
        }
    }
}

/// MAE restricted to pixels whose ground-truth world normal points up.
fn floor_mae(pred: &ImageBuffer, gt: &ImageBuffer, cam: &Camera) -> Result<Option<f64>, CliError> {
    let mut p2 = pred.clone();
    let mut g2 = gt.clone();
    let up = Vec3::new(0.0, 0.0, 1.0);
    for y in 0..gt.height {
        for x in 0..gt.width {
            let keep = gt.is_valid(x, y)
                && cam.normal_to_world(gt.pixel_vec3(x, y).normalized()).dot(up) > 0.99;
            if !keep {
                p2.set_valid(x, y, false);
                g2.set_valid(x, y, false);
            }
        }
    }
    if p2.jointly_valid(&g2).next().is_none() {
        return Ok(None);
    }
    Ok(Some(mae_degrees(&p2, &g2)?))
}

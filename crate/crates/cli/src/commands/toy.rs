//! toy: probe-under-lights experiment comparing SH and GDE fits.

use std::io::Write;
use std::path::Path;

use gdekit_core::geom::png;
use gdekit_core::rng;
use gdekit_core::toy::{
    fibonacci_hemisphere, fit_coefficients, fit_targets, gaussians_from_lights, probe_track,
    render_stereographic, toy_light_layout, EncodingKind, FitReport, TOY_COEFF_COUNT,
};
use gdekit_core::Vec3;

use crate::config::{Manifest, RunConfig};
use crate::CliError;

pub fn run(
    cfg: &RunConfig,
    threads: usize,
    out: &Path,
    do_fit: bool,
    do_report: bool,
    do_render: bool,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let tcfg = &cfg.toy;
    let dirs = fibonacci_hemisphere(tcfg.n_dirs);
    let track = probe_track(tcfg.positions);

    let mut summaries = Vec::new();
    for layout_idx in 0..tcfg.layouts {
        let layout_seed = rng::derive_seed2(cfg.seed, "toy-layout-idx", layout_idx as u64, 0);
        let mut layout_rng = rng::stream(layout_seed, "toy-layout");
        let lights = toy_light_layout(&mut layout_rng);
        if !do_fit {
            continue;
        }
        let targets = fit_targets(&lights, &track, &dirs, tcfg.rho, tcfg.mc_samples, layout_seed)?;
        let sh = fit_coefficients(
            EncodingKind::Sh,
            None,
            &track,
            &dirs,
            &targets,
            tcfg.rho,
            tcfg.ridge,
        )?;
        let set = gaussians_from_lights(&lights, TOY_COEFF_COUNT, tcfg.rho);
        let gde = fit_coefficients(
            EncodingKind::Gde,
            Some(&set),
            &track,
            &dirs,
            &targets,
            tcfg.rho,
            tcfg.ridge,
        )?;

        if do_report {
            write_coeff_csv(&out.join(format!("coeffs_layout{layout_idx}.csv")), &[&sh, &gde])?;
        }
        if do_render {
            for (pi, pos) in track.iter().enumerate() {
                let img = render_stereographic(
                    EncodingKind::Sh,
                    None,
                    &sh.coeffs[pi],
                    *pos,
                    tcfg.rho,
                    tcfg.render_resolution,
                )?;
                png::write_png(
                    &out.join(format!("layout{layout_idx}_pos{pi}_sh.png")),
                    &img,
                )?;
                let img = render_stereographic(
                    EncodingKind::Gde,
                    Some(&set),
                    &gde.coeffs[pi],
                    *pos,
                    tcfg.rho,
                    tcfg.render_resolution,
                )?;
                png::write_png(
                    &out.join(format!("layout{layout_idx}_pos{pi}_gde.png")),
                    &img,
                )?;
                // Ground truth on the same grid for side-by-side viewing.
                let res = tcfg.render_resolution;
                let mut gt = gdekit_core::geom::ImageBuffer::new(res, res, 3);
                let half = res as f64 / 2.0;
                for y in 0..res {
                    for x in 0..res {
                        let s = (x as f64 + 0.5 - half) / half * 1.02;
                        let t = (y as f64 + 0.5 - half) / half * 1.02;
                        if s * s + t * t > 1.0 {
                            gt.set_valid(x, y, false);
                            continue;
                        }
                        let dir = gdekit_core::geom::stereographic_unproject(s, t);
                        let seed = rng::derive_seed2(
                            layout_seed,
                            "toy-gt-render",
                            pi as u64,
                            (y * res + x) as u64,
                        );
                        let v = gdekit_core::toy::preconvolve_oracle(
                            &lights, *pos, dir, tcfg.rho, 2_000, seed,
                        )?;
                        gt.set_pixel_vec3(x, y, Vec3::new(v.x, v.y, v.z));
                    }
                }
                png::write_png(&out.join(format!("layout{layout_idx}_pos{pi}_gt.png")), &gt)?;
            }
        }
        println!(
            "layout {layout_idx}: mse sh {:.6} gde {:.6} | variation sh {:.3} gde {:.3}",
            sh.total_mse, gde.total_mse, sh.variation_score, gde.variation_score
        );
        summaries.push(serde_json::json!({
            "layout": layout_idx,
            "layout_seed": layout_seed,
            "sh": { "mse": sh.total_mse, "variation": sh.variation_score,
                     "mse_per_position": sh.mse_per_position },
            "gde": { "mse": gde.total_mse, "variation": gde.variation_score,
                      "mse_per_position": gde.mse_per_position },
            "gde_wins_mse": gde.total_mse < sh.total_mse,
            "gde_wins_variation": gde.variation_score < sh.variation_score,
        }));
    }

    if do_report {
        std::fs::write(
            out.join("summary.json"),
            serde_json::to_string_pretty(&serde_json::json!({
                "rho": tcfg.rho,
                "n_dirs": tcfg.n_dirs,
                "coefficients": TOY_COEFF_COUNT,
                "layouts": summaries,
            }))
            .expect("summary serializes"),
        )?;
    }
    Manifest::new(
        "toy",
        cfg,
        threads,
        serde_json::json!({ "fit": do_fit, "report": do_report, "render": do_render }),
    )
    .write(out)?;
    Ok(())
}

/// CSV columns: encoding, layout position, channel, coefficient index,
/// value, and per-report MSE columns for both encodings.
fn write_coeff_csv(path: &Path, reports: &[&FitReport]) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "encoding,position,channel,coeff_index,value,position_mse")?;
    for report in reports {
        let name = match report.encoding {
            EncodingKind::Sh => "sh",
            EncodingKind::Gde => "gde",
        };
        for (pi, per_channel) in report.coeffs.iter().enumerate() {
            for (c, coeffs) in per_channel.iter().enumerate() {
                for (k, v) in coeffs.iter().enumerate() {
                    writeln!(
                        w,
                        "{name},{pi},{c},{k},{v:.10},{:.10}",
                        report.mse_per_position[pi]
                    )?;
                }
            }
        }
    }
    Ok(())
}

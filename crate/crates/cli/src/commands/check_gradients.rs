//! check-gradients: finite-difference verification report.

use std::path::Path;

use gdekit_core::field::tiny_gradient_check;
use gdekit_core::gde::finite_difference_report;

use crate::config::RunConfig;
use crate::CliError;

pub fn run(cfg: &RunConfig, _threads: usize, out: Option<&Path>) -> Result<(), CliError> {
    let encoding = finite_difference_report(500, cfg.seed, 1e-4);
    println!("encoding gradients over {} configurations:", encoding.configs);
    println!("  mu           max rel {:.3e}", encoding.max_rel_mu);
    println!("  log scale    max rel {:.3e}", encoding.max_rel_log_scale);
    println!("  quaternion   max rel {:.3e}", encoding.max_rel_rot);
    println!("  ray origin   max rel {:.3e}", encoding.max_rel_origin);
    println!("  ray direction max rel {:.3e}", encoding.max_rel_direction);
    println!("  roughness    max rel {:.3e}", encoding.max_rel_rho);
    println!(
        "  -> {} (tolerance {:.0e}, {} boundary configs excluded)",
        if encoding.passed { "PASS" } else { "FAIL" },
        encoding.tolerance,
        encoding.skipped_boundary
    );

    let e2e = tiny_gradient_check(cfg.seed, 20, 1e-3);
    println!(
        "end-to-end loss gradients: {} params, max rel {:.3e} -> {}",
        e2e.params_checked,
        e2e.max_rel,
        if e2e.passed { "PASS" } else { "FAIL" }
    );

    if let Some(path) = out {
        let report = serde_json::json!({ "encoding": encoding, "end_to_end": e2e });
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    if !(encoding.passed && e2e.passed) {
        return Err(CliError::user("gradient check failed"));
    }
    Ok(())
}

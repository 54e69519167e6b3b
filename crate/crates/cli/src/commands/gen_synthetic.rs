//! gen-synthetic: render the glossy-room dataset to disk.

use std::path::Path;

use gdekit_core::toy::{build_room_dataset, write_room_dataset};

use crate::config::{Manifest, RunConfig};
use crate::CliError;

pub fn run(cfg: &RunConfig, threads: usize, out: &Path) -> Result<(), CliError> {
    let mut room_cfg = cfg.room.clone();
    room_cfg.seed = cfg.seed;
    let ds = build_room_dataset(&room_cfg)?;
    std::fs::create_dir_all(out)?;
    write_room_dataset(out, &ds)?;
    Manifest::new("gen-synthetic", cfg, threads, serde_json::json!({})).write(out)?;
    println!(
        "wrote {} views ({} train / {} test) to {}",
        ds.views.len(),
        ds.train_ids.len(),
        ds.test_ids.len(),
        out.display()
    );
    Ok(())
}

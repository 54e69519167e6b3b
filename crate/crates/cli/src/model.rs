//! Trained-model bundle on disk: field checkpoint, Gaussian blob and
//! specular decoder in one directory.

use std::path::Path;

use gdekit_core::field::SceneField;
use gdekit_core::gde::GaussianSet;
use gdekit_core::optim::SpecularDecoder;

use crate::CliError;

pub struct ModelBundle {
    pub field: SceneField,
    pub set: GaussianSet,
    pub decoder: SpecularDecoder,
}

impl ModelBundle {
    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        self.field.save(&dir.join("field.fld1"))?;
        self.set.save(&dir.join("gaussians.gde1"))?;
        self.decoder.save(&dir.join("decoder.sdc1"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        if !dir.join("field.fld1").exists() {
            return Err(CliError::user(format!(
                "checkpoint {} not found (missing field.fld1)",
                dir.display()
            )));
        }
        Ok(Self {
            field: SceneField::load(&dir.join("field.fld1"))?,
            set: GaussianSet::load(&dir.join("gaussians.gde1"))?,
            decoder: SpecularDecoder::load(&dir.join("decoder.sdc1"))?,
        })
    }
}

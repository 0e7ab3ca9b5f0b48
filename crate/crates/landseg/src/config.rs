//! Optional `key = value` settings file.
//!
//! ```text
//! # model defaults
//! output_stride = 8
//! aspp_rates = 2,4,6
//! # mask colours
//! palette.water = 0 0 255
//! ```

use std::path::Path;

use landseg_core::{ClassPalette, LandCover, ModelConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub palette: ClassPalette,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut model = ModelConfig::default();
        let mut palette_lines = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |why: String| Error::Usage(format!("config line {}: {why}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("`{line}` is not `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(name) = key.strip_prefix("palette.") {
                let class: LandCover = name.parse().map_err(|e| at(format!("{e}")))?;
                palette_lines.push_str(&format!("{} {} {value}\n", class.index(), class.key()));
            } else if !model.set(key, value).map_err(|e| at(e.to_string()))? {
                return Err(at(format!("unknown key `{key}`")));
            }
        }
        model.validate().map_err(|e| Error::Usage(format!("config: {e}")))?;
        let palette = ClassPalette::parse(&palette_lines).map_err(|e| Error::Usage(format!("config: {e}")))?;
        Ok(FileConfig { model, palette })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }
}

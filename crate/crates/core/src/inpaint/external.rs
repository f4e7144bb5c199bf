//! Bridge to external inpainting tools. The tool is described by a shell
//! command template with `{image}`, `{mask}` and `{out}` placeholders; we
//! write the inputs as temporary PNG files, run the command and read the
//! result back. Only the output dimensions are validated, the pixel content
//! is entirely the tool's business.

use std::path::Path;
use std::process::Command;

use super::{effective_hole, InpaintBackend, InpaintRequest};
use crate::dataset::{load_image_rgb, save_image_png, save_mask_png};
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

const PLACEHOLDERS: [&str; 3] = ["{image}", "{mask}", "{out}"];

#[derive(Debug, Clone)]
pub struct ExternalInpainter {
    template: String,
}

impl ExternalInpainter {
    /// Validates that the command template mentions all three placeholders.
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        for placeholder in PLACEHOLDERS {
            if !template.contains(placeholder) {
                return Err(Error::MissingPlaceholder { placeholder });
            }
        }
        Ok(Self { template })
    }

    pub fn template(&self) -> &str {
        &self.template
    }
}

impl InpaintBackend for ExternalInpainter {
    fn name(&self) -> &'static str {
        "external"
    }

    fn inpaint(&self, request: &InpaintRequest) -> Result<ImageBuffer> {
        let image = &request.image;
        let hole = effective_hole(request);
        if hole.width() != image.width() || hole.height() != image.height() {
            return Err(Error::MaskImageMismatch {
                image_w: image.width(),
                image_h: image.height(),
                mask_w: hole.width(),
                mask_h: hole.height(),
            });
        }

        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let image_path = dir.path().join("image.png");
        let mask_path = dir.path().join("mask.png");
        let out_path = dir.path().join("out.png");
        save_image_png(image, &image_path)?;
        save_mask_png(&hole, &mask_path)?;

        let command = self
            .template
            .replace("{image}", &image_path.display().to_string())
            .replace("{mask}", &mask_path.display().to_string())
            .replace("{out}", &out_path.display().to_string());
        let output = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .output()
            .map_err(|e| Error::io(Path::new("sh"), e))?;
        if !output.status.success() {
            return Err(Error::ExternalCommand {
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
            });
        }

        let filled = load_image_rgb(&out_path)?;
        if filled.width() != image.width() || filled.height() != image.height() {
            return Err(Error::ExternalDimensionMismatch {
                want_w: image.width(),
                want_h: image.height(),
                got_w: filled.width(),
                got_h: filled.height(),
            });
        }
        Ok(filled)
    }
}

//! Flat `key = value` settings file. Every knob has a built-in default;
//! file values override defaults and command-line flags override both.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sodaug_core::matcher::{ScoreKind, SelectionCriterion};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub jobs: usize,
    pub k: Option<usize>,
    pub criterion: SelectionCriterion,
    pub score: ScoreKind,
    pub exclude_self: bool,
    pub inpaint_backend: String,
    pub inpaint_command: Option<String>,
    pub dilation_radius: u32,
    pub hflip_probability: f64,
    pub gridmask_period: (u32, u32),
    pub gridmask_keep_ratio: f64,
    pub gridmask_probability: f64,
    pub beta: f64,
    pub fixed_threshold: u8,
    pub grid_size: u32,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            k: None,
            criterion: SelectionCriterion::MuPlusSigma,
            score: ScoreKind::Distance,
            exclude_self: true,
            inpaint_backend: "diffusion".to_string(),
            inpaint_command: None,
            dilation_radius: 5,
            hflip_probability: 0.5,
            gridmask_period: (96, 224),
            gridmask_keep_ratio: 0.6,
            gridmask_probability: 0.7,
            beta: 0.3,
            fixed_threshold: 127,
            grid_size: 64,
            manifest: None,
            out: None,
        }
    }
}

/// Builds settings from defaults plus an optional file.
pub fn load_settings(path: Option<&Path>) -> Result<Settings, UsageError> {
    let mut settings = Settings::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        apply_file(&mut settings, &text, path)?;
    }
    Ok(settings)
}

fn apply_file(settings: &mut Settings, text: &str, path: &Path) -> Result<(), UsageError> {
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            UsageError(format!(
                "{}:{line_no}: expected `key = value`, got {line:?}",
                path.display()
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        apply_pair(settings, key, value)
            .map_err(|message| UsageError(format!("{}:{line_no}: {message}", path.display())))?;
    }
    Ok(())
}

fn parse<T: FromStr>(key: &str, value: &str, want: &str) -> Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("key {key} expects {want}, got {value:?}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("key {key} expects true or false, got {value:?}")),
    }
}

fn apply_pair(settings: &mut Settings, key: &str, value: &str) -> Result<(), String> {
    match key {
        "seed" => settings.seed = parse(key, value, "an integer")?,
        "jobs" => settings.jobs = parse(key, value, "an integer")?,
        "k" => {
            settings.k = if value == "none" {
                None
            } else {
                Some(parse(key, value, "an integer or none")?)
            }
        }
        "criterion" => {
            settings.criterion =
                SelectionCriterion::from_str(value).map_err(|e| e.to_string())?
        }
        "score" => settings.score = ScoreKind::from_str(value).map_err(|e| e.to_string())?,
        "exclude_self" => settings.exclude_self = parse_bool(key, value)?,
        "inpaint_backend" => settings.inpaint_backend = value.to_string(),
        "inpaint_command" => settings.inpaint_command = Some(value.to_string()),
        "dilation_radius" => settings.dilation_radius = parse(key, value, "an integer")?,
        "hflip_probability" => settings.hflip_probability = parse(key, value, "a number")?,
        "gridmask_period_min" => settings.gridmask_period.0 = parse(key, value, "an integer")?,
        "gridmask_period_max" => settings.gridmask_period.1 = parse(key, value, "an integer")?,
        "gridmask_keep_ratio" => settings.gridmask_keep_ratio = parse(key, value, "a number")?,
        "gridmask_probability" => settings.gridmask_probability = parse(key, value, "a number")?,
        "beta" => settings.beta = parse(key, value, "a number")?,
        "fixed_threshold" => settings.fixed_threshold = parse(key, value, "an integer 0-255")?,
        "grid_size" => settings.grid_size = parse(key, value, "an integer")?,
        "manifest" => settings.manifest = Some(PathBuf::from(value)),
        "out" => settings.out = Some(PathBuf::from(value)),
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

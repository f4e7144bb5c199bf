//! Error type shared by every module in the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // The cause is part of the message rather than a source link, so
    // wrappers that print an error chain do not repeat it.
    #[error("{path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },

    #[error("{path}: {cause}")]
    Image {
        path: PathBuf,
        cause: image::ImageError,
    },

    #[error("{width}x{height}x{channels} image cannot hold {len} bytes")]
    InvalidImageShape {
        width: u32,
        height: u32,
        channels: u8,
        len: usize,
    },

    #[error("expected a {expected}-channel image, got {got} channels")]
    ChannelMismatch { expected: u8, got: u8 },

    #[error("mask is {mask_w}x{mask_h} but the image is {image_w}x{image_h}")]
    MaskImageMismatch {
        image_w: u32,
        image_h: u32,
        mask_w: u32,
        mask_h: u32,
    },

    #[error("{path}:{line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate sample id {id:?} (lines {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("invalid sample id {id:?}: {reason}")]
    InvalidId { id: String, reason: &'static str },

    #[error("mask has no salient pixels")]
    NonSalientMask,

    #[error("bounding box has zero area; nothing to place")]
    DegenerateObject,

    #[error("hole covers the whole image; no boundary to diffuse from")]
    HoleCoversImage,

    #[error("inpaint command is missing the {placeholder} placeholder")]
    MissingPlaceholder { placeholder: &'static str },

    #[error("the external inpaint backend needs a command template")]
    MissingCommandTemplate,

    #[error("inpaint command failed ({status}): {stderr}")]
    ExternalCommand { status: String, stderr: String },

    #[error("inpaint command wrote a {got_w}x{got_h} image, expected {want_w}x{want_h}")]
    ExternalDimensionMismatch {
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },

    #[error("image is {width}x{height}; the pattern circle needs at least {min}x{min}")]
    TooSmallForLbp { width: u32, height: u32, min: u32 },

    #[error("cannot compare an all-zero feature vector ({side} side)")]
    ZeroVector { side: &'static str },

    #[error("{path}:{line}: {message}")]
    TableParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("asked for {requested} neighbors but only {available} candidates exist")]
    NotEnoughCandidates { requested: usize, available: usize },

    #[error("patch {patch_w}x{patch_h} does not fit a {image_w}x{image_h} image")]
    PatchTooLarge {
        patch_w: u32,
        patch_h: u32,
        image_w: u32,
        image_h: u32,
    },

    #[error("neighbor list is empty")]
    EmptyNeighbors,

    #[error("no match recorded for object {object_id}")]
    MissingMatch { object_id: String },

    #[error("no background named {background_id} (wanted by object {object_id})")]
    MissingBackground {
        background_id: String,
        object_id: String,
    },

    #[error("object cannot fit the {bg_w}x{bg_h} background even after the fallback")]
    CannotFit { bg_w: u32, bg_h: u32 },

    #[error("placement at ({x}, {y}) pushes a {obj_w}x{obj_h} object outside a {bg_w}x{bg_h} background")]
    PlacementOutOfBounds {
        x: u32,
        y: u32,
        obj_w: u32,
        obj_h: u32,
        bg_w: u32,
        bg_h: u32,
    },

    #[error("grid period must be at least 2, got {period}")]
    GridPeriodTooSmall { period: u32 },

    #[error("keep ratio must lie strictly between 0 and 1, got {ratio}")]
    KeepRatioOutOfRange { ratio: f64 },

    #[error("probability must lie in [0, 1], got {value}")]
    ProbabilityOutOfRange { value: f64 },

    #[error("grid size must be at least 1")]
    GridSizeZero,

    #[error("unknown {kind} {name:?} (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: &'static str,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("every ground-truth mask is empty; threshold metrics are undefined")]
    NoSalientSamples,

    #[error("model {model_id} has no value for {metric}")]
    MissingMetric {
        model_id: String,
        metric: &'static str,
    },

    #[error("ranking needs at least two models, got {got}")]
    NotEnoughModels { got: usize },

    #[error("beta must be positive, got {beta}")]
    InvalidBeta { beta: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, cause: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            cause,
        }
    }
}

//! Process exit codes. The numbers are a stable public contract.

use std::error::Error;

use iris_core::calibration::CalibrationError;
use iris_core::codec::CodecError;
use iris_core::data::DataError;
use iris_core::eval::EvalError;
use iris_core::pipeline::PipelineError;
use iris_core::tensor::TensorError;
use iris_core::unet::UnetError;

pub const OK: u8 = 0;
pub const GENERIC: u8 = 1;
pub const IO: u8 = 2;
pub const DIVERGED: u8 = 3;
pub const NO_EYES: u8 = 4;
pub const IRIS_TOO_SMALL: u8 = 5;
pub const INVALID_INPUT: u8 = 6;
pub const LOCALIZATION: u8 = 7;
pub const UNUSABLE_TEMPLATE: u8 = 8;
pub const FORMAT: u8 = 9;

/// Marker for argument problems detected after parsing.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl Error for InvalidInput {}

fn data(e: &DataError) -> u8 {
    match e {
        DataError::Io { .. } => IO,
        DataError::NotPgm(_)
        | DataError::BadHeader(_)
        | DataError::ZeroDimension(..)
        | DataError::UnsupportedMaxval(_)
        | DataError::Truncated { .. }
        | DataError::UnsupportedFormat(_)
        | DataError::Csv(_) => FORMAT,
        DataError::Manifest { .. } | DataError::Config { .. } | DataError::ConfigValue { .. } | DataError::InvalidParameter(_) => {
            INVALID_INPUT
        }
    }
}

fn tensor(e: &TensorError) -> u8 {
    match e {
        TensorError::Io(_) => IO,
        TensorError::NotWeightFile
        | TensorError::Truncated(_)
        | TensorError::UnsupportedDtype(_)
        | TensorError::LayerShape { .. }
        | TensorError::MissingLayer(_)
        | TensorError::UnexpectedLayer(_) => FORMAT,
        TensorError::NonFiniteGradient(_) => DIVERGED,
        TensorError::ShapeMismatch { .. } | TensorError::Invalid(_) | TensorError::NoForward => GENERIC,
    }
}

fn unet(e: &UnetError) -> u8 {
    match e {
        UnetError::Diverged { .. } => DIVERGED,
        UnetError::InvalidConfig(_) | UnetError::EmptyImage | UnetError::EmptyDataset => INVALID_INPUT,
        UnetError::Tensor(t) => tensor(t),
    }
}

fn codec(e: &CodecError) -> u8 {
    match e {
        CodecError::Io { .. } => IO,
        CodecError::UnusableTemplate { .. } => UNUSABLE_TEMPLATE,
        CodecError::InvalidCircles(_) => LOCALIZATION,
        CodecError::DimensionMismatch => INVALID_INPUT,
        CodecError::NotFilterFile
        | CodecError::FilterCount(_)
        | CodecError::FilterSize(..)
        | CodecError::NotTemplateFile
        | CodecError::TemplateShape(..)
        | CodecError::Truncated(_)
        | CodecError::Malformed(_) => FORMAT,
    }
}

pub fn pipeline(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Config(_) | PipelineError::Eval(_) => INVALID_INPUT,
        PipelineError::Weights { source, .. } => tensor(source),
        PipelineError::Data(d) => data(d),
        PipelineError::NoEyes(_) => NO_EYES,
        PipelineError::TooFar { .. } => IRIS_TOO_SMALL,
        PipelineError::Localization(_) => LOCALIZATION,
        PipelineError::Codec(c) => codec(c),
        PipelineError::Unet(u) => unet(u),
    }
}

fn calibration(e: &CalibrationError) -> u8 {
    match e {
        CalibrationError::Data(d) => data(d),
        CalibrationError::Pipeline(p) => pipeline(p),
        _ => INVALID_INPUT,
    }
}

fn classify_one(e: &(dyn Error + 'static)) -> Option<u8> {
    if let Some(e) = e.downcast_ref::<PipelineError>() {
        return Some(pipeline(e));
    }
    if let Some(e) = e.downcast_ref::<CalibrationError>() {
        return Some(calibration(e));
    }
    if let Some(e) = e.downcast_ref::<DataError>() {
        return Some(data(e));
    }
    if let Some(e) = e.downcast_ref::<CodecError>() {
        return Some(codec(e));
    }
    if let Some(e) = e.downcast_ref::<UnetError>() {
        return Some(unet(e));
    }
    if let Some(e) = e.downcast_ref::<TensorError>() {
        return Some(tensor(e));
    }
    if e.downcast_ref::<EvalError>().is_some() || e.downcast_ref::<InvalidInput>().is_some() {
        return Some(INVALID_INPUT);
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return Some(IO);
    }
    None
}

/// Exit code for an error: the first recognised error in its chain decides.
pub fn classify(err: &anyhow::Error) -> u8 {
    err.chain().find_map(classify_one).unwrap_or(GENERIC)
}

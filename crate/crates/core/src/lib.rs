//! Iris recognition for embedded-class compute budgets.
//!
//! The crate covers the whole recognition chain on single-channel (NIR-like)
//! imagery:
//!
//! 1. [`tensor`] – dense rank-4 tensors, convolution layers and a reverse-mode
//!    gradient tape, enough to train and run a small U-Net.
//! 2. [`unet`] – the UNet_xxs encoder/decoder, its two task configurations
//!    (find eyes, segment iris), mask inference and training.
//! 3. [`eyes`] – eye blob extraction from the task-1 mask and periocular crops.
//! 4. [`localize`] – pupil/iris circle fitting (LMS, Hough, mixed rule,
//!    centre of mass).
//! 5. [`codec`] – rubber-sheet normalization, 7-filter binary encoding and
//!    masked Hamming distance.
//! 6. [`eval`] – score-distribution analytics, segmentation metrics and
//!    throughput benchmarking.
//! 7. [`calibration`] – resolution sweeps, radius/distance model, gaze ratio
//!    and optimal distance intervals.
//! 8. [`data`] – PGM codec, manifests, configuration, augmentation and the
//!    synthetic eye-scene generator.
//! 9. [`pipeline`] – composition of the above into the end-to-end flow.
//!
//! Data-parallel batch work (comparison matrices, corpus processing, scene
//! generation) goes through [`par`], which uses rayon when the `parallel`
//! feature is enabled and falls back to sequential iteration otherwise.

pub mod calibration;
pub mod codec;
pub mod data;
pub mod eval;
pub mod eyes;
pub mod localize;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod tensor;
pub mod unet;

pub use raster::{GrayImage, Mask};

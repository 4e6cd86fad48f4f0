//! `iris run`: one image (or one saved crop) to templates, with optional
//! debug artefacts.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use iris_core::codec::{RubberSheet, SHEET_COLS, SHEET_ROWS};
use iris_core::data::{load_image, save_image, save_mask, EyeSide};
use iris_core::localize::Circle;
use iris_core::pipeline::{EyeResult, PipelineOutput};
use iris_core::GrayImage;

use crate::{invalid, load_pipeline, write_file};

#[derive(Args)]
pub struct RunArgs {
    /// Face image with both eyes.
    #[arg(long, conflicts_with = "crop", required_unless_present = "crop")]
    image: Option<PathBuf>,
    /// Periocular crop saved by an earlier `--out-debug` run; skips eye finding.
    #[arg(long, requires = "side")]
    crop: Option<PathBuf>,
    /// Eye side of `--crop`.
    #[arg(long)]
    side: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Template path. With `--image` one file per eye is written as
    /// `<stem>_<side>.<ext>`; with `--crop` exactly this path.
    #[arg(long)]
    out_template: PathBuf,
    /// Directory for intermediate masks, crops, sheets and localization.
    #[arg(long)]
    out_debug: Option<PathBuf>,
    /// Subject id stored in the template.
    #[arg(long, default_value = "unknown")]
    subject: String,
}

pub fn run(a: RunArgs) -> Result<()> {
    let pipeline = load_pipeline(a.config.as_deref())?;
    if let Some(crop_path) = &a.crop {
        let side = a.side.as_deref().unwrap_or_default();
        let side = EyeSide::parse(side).ok_or_else(|| invalid(format!("--side {side:?} must be left or right")))?;
        let crop = load_image(crop_path)?;
        let eye = pipeline.process_crop(&crop, side, &a.subject)?;
        if let Some(dir) = &a.out_debug {
            write_eye_debug(dir, &eye, crop_path)?;
        }
        save_template(&eye, &a.out_template)?;
        return Ok(());
    }
    let image_path = a.image.as_ref().expect("clap requires --image or --crop");
    let image = load_image(image_path)?;
    let out = pipeline.process(&image, &a.subject).with_context(|| format!("processing {}", image_path.display()))?;
    if let Some(dir) = &a.out_debug {
        write_scene_debug(dir, &image, &out, image_path)?;
    }
    let mut first_error = None;
    let mut written = 0;
    for (side, eye) in [EyeSide::Left, EyeSide::Right].into_iter().zip(out.eyes) {
        match eye {
            Ok(eye) => {
                save_template(&eye, &per_eye_path(&a.out_template, side))?;
                written += 1;
            }
            Err(e) => {
                log::warn!("{} eye: {e}", side.as_str());
                eprintln!("warning: {} eye failed: {e}", side.as_str());
                first_error.get_or_insert(e);
            }
        }
    }
    match (written, first_error) {
        (0, Some(e)) => Err(anyhow::Error::new(e).context(format!("no usable eye in {}", image_path.display()))),
        _ => Ok(()),
    }
}

/// `dir/name.irt` → `dir/name_left.irt`.
pub fn per_eye_path(base: &Path, side: EyeSide) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "template".into());
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{}.{}", side.as_str(), ext.to_string_lossy()),
        None => format!("{stem}_{}", side.as_str()),
    };
    base.with_file_name(name)
}

fn save_template(eye: &EyeResult, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    eye.template.save(path)?;
    println!("{} eye: wrote {}", eye.side.as_str(), path.display());
    Ok(())
}

fn write_scene_debug(dir: &Path, image: &GrayImage, out: &PipelineOutput, image_path: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_image(image, dir.join("input.pgm"))?;
    save_mask(&out.eye_mask, dir.join("eye_mask.pgm"))?;
    let mut eyes = String::from("side,centroid_x,centroid_y,area,box_x0,box_y0,box_width,box_height,clipped\n");
    for (blob, b) in out.blobs.iter().zip(&out.boxes) {
        let _ = writeln!(
            eyes,
            "{},{:.3},{:.3},{},{},{},{},{},{}",
            blob.side.as_str(),
            blob.centroid.0,
            blob.centroid.1,
            blob.area,
            b.x0,
            b.y0,
            b.width,
            b.height,
            b.clipped
        );
    }
    write_file(&dir.join("eyes.csv"), eyes)?;
    let mut loc = String::from(LOC_HEADER);
    for eye in out.eyes.iter().flatten() {
        save_eye_images(dir, eye)?;
        loc.push_str(&loc_row(image_path, eye));
    }
    write_file(&dir.join("localization.csv"), loc)
}

fn write_eye_debug(dir: &Path, eye: &EyeResult, image_path: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_eye_images(dir, eye)?;
    write_file(&dir.join("localization.csv"), format!("{LOC_HEADER}{}", loc_row(image_path, eye)))
}

const LOC_HEADER: &str = "image_path,side,pupil_x,pupil_y,pupil_r,iris_x,iris_y,iris_r,iris_method,pupil_method,confident\n";

fn loc_row(image_path: &Path, eye: &EyeResult) -> String {
    let l = &eye.localization;
    format!(
        "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{},{},{}\n",
        image_path.display(),
        eye.side.as_str(),
        l.pupil.x,
        l.pupil.y,
        l.pupil.r,
        l.iris.x,
        l.iris.y,
        l.iris.r,
        l.iris_method,
        l.pupil_method,
        l.confident
    )
}

fn save_eye_images(dir: &Path, eye: &EyeResult) -> Result<()> {
    let side = eye.side.as_str();
    save_image(&eye.crop, dir.join(format!("crop_{side}.pgm")))?;
    save_mask(&eye.iris_mask, dir.join(format!("iris_mask_{side}.pgm")))?;
    let mut overlay = eye.crop.clone();
    draw_circle(&mut overlay, &eye.localization.pupil, 255);
    draw_circle(&mut overlay, &eye.localization.iris, 255);
    save_image(&overlay, dir.join(format!("overlay_{side}.pgm")))?;
    save_image(&eye.sheet.to_image(), dir.join(format!("sheet_{side}.pgm")))?;
    save_image(&sheet_mask_image(&eye.sheet), dir.join(format!("sheet_mask_{side}.pgm")))?;
    eye.template.save(dir.join(format!("template_{side}.irt")))?;
    Ok(())
}

fn sheet_mask_image(sheet: &RubberSheet) -> GrayImage {
    GrayImage::from_fn(SHEET_COLS, SHEET_ROWS, |x, y| if sheet.valid[y * SHEET_COLS + x] { 255 } else { 0 })
}

fn draw_circle(image: &mut GrayImage, c: &Circle, value: u8) {
    let steps = (TAU * c.r).ceil().max(8.0) as usize * 2;
    for k in 0..steps {
        let t = TAU * k as f64 / steps as f64;
        let (x, y) = ((c.x + c.r * t.cos()).round(), (c.y - c.r * t.sin()).round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < image.width() && (y as usize) < image.height() {
            image.set(x as usize, y as usize, value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_eye_names() {
        assert_eq!(per_eye_path(Path::new("out/a.irt"), EyeSide::Left), PathBuf::from("out/a_left.irt"));
        assert_eq!(per_eye_path(Path::new("b"), EyeSide::Right), PathBuf::from("b_right"));
    }
}

//! PNG image directories: `root/<class_name>/*.png`.

use std::fs;
use std::path::{Path, PathBuf};

use advmark_core::data::{resize_bilinear, DatasetSplit, Sample, SplitTag};
use advmark_core::error::DataError;
use advmark_core::tensor::Tensor;
use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::json::write_file;

/// 8-bit code of a unit-range value, rounding half to even.
pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// `[3, H, W]` unit-range image as PNG bytes.
pub fn encode_png(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::Config(format!(
            "PNG export needs [3, H, W] images, got {shape:?}"
        )));
    }
    let (h, w) = (shape[1], shape[2]);
    let plane = h * w;
    let data = image.data();
    let mut rgb = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            rgb.push(quantize_u8(data[c * plane + i]));
        }
    }
    let img = RgbImage::from_raw(w as u32, h as u32, rgb).expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Report(e.to_string()))?;
    Ok(out.into_inner())
}

/// Decodes a PNG as `[3, H, W]` with values `code / 255`.
pub fn decode_png(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let plane = h * w;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px.0[c] as f32 / 255.0;
        }
    }
    Ok(Tensor::new(&[3, h, w], data).expect("buffer matches dimensions"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn utf8_name(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Ingest {
            path: path.to_path_buf(),
            message: "file name is not valid UTF-8".into(),
        })
}

/// Loads every class subdirectory of `root` in lexicographic order, so the
/// `k`-th directory gets label `k`. Images are resized bilinearly to
/// `resolution × resolution`; ids are `<class>/<file stem>`.
pub fn load_image_directory(root: &Path, resolution: usize) -> Result<DatasetSplit> {
    if resolution == 0 {
        return Err(Error::Config("resolution must be positive".into()));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(DataError::Parameter(format!("{} has no class directories", root.display())).into());
    }
    let mut names = Vec::with_capacity(class_dirs.len());
    let mut samples = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let class = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Ingest {
                path: dir.clone(),
                message: "directory name is not valid UTF-8".into(),
            })?
            .to_string();
        let files: Vec<PathBuf> = sorted_entries(dir)?
            .into_iter()
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        if files.is_empty() {
            return Err(DataError::Parameter(format!("class directory {} has no PNG images", dir.display())).into());
        }
        for file in files {
            let raw = decode_png(&file)?;
            let image = resize_bilinear(&raw, resolution, resolution)?;
            let id = format!("{class}/{}", utf8_name(&file)?);
            samples.push(Sample::new(image, label, id)?);
        }
        names.push(class);
    }
    Ok(DatasetSplit::new(samples, names, SplitTag::All)?)
}

/// Relative PNG path of a sample: `<class>/<stem>.png`, where the stem is the
/// id with any leading `<class>/` removed and remaining separators replaced.
pub fn sample_path(split: &DatasetSplit, sample: &Sample) -> PathBuf {
    let class = &split.class_names()[sample.label];
    let stem = sample
        .id
        .strip_prefix(class.as_str())
        .and_then(|s| s.strip_prefix('/'))
        .unwrap_or(&sample.id)
        .replace(['/', '\\'], "_");
    Path::new(class).join(format!("{stem}.png"))
}

/// Writes `split` as a class directory tree under `root`. Images must sit on
/// the 8-bit grid for the export to be lossless.
pub fn export_dataset(split: &DatasetSplit, root: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(split.len());
    for s in split.samples() {
        let rel = sample_path(split, s);
        write_file(&root.join(&rel), &encode_png(s.image())?)?;
        written.push(rel);
    }
    Ok(written)
}

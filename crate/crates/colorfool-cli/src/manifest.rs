//! JSON-lines dataset manifests: one record per line, paths resolved
//! relative to the manifest file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
}

impl ManifestRecord {
    /// Filename stem used to pair inputs with outputs.
    pub fn stem(&self) -> Result<String, CliError> {
        self.image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "cannot derive a stem from image path {}",
                    self.image_path.display()
                ))
            })
    }
}

/// Loads a manifest, resolving relative paths against the manifest's
/// directory and checking that every image exists.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    let mut stems = std::collections::BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut record: ManifestRecord = serde_json::from_str(line).map_err(|e| {
            CliError::Usage(format!("manifest line {}: bad record: {e}", idx + 1))
        })?;
        record.image_path = resolve(base, &record.image_path);
        record.label_map_path = record.label_map_path.map(|p| resolve(base, &p));
        if !record.image_path.is_file() {
            return Err(CliError::Io(format!(
                "manifest line {}: image {} does not exist",
                idx + 1,
                record.image_path.display()
            )));
        }
        let stem = record.stem()?;
        if !stems.insert(stem.clone()) {
            return Err(CliError::Usage(format!(
                "duplicate image stem {stem:?}; stems pair outputs with inputs and must be unique"
            )));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::Usage(format!(
            "manifest {} contains no records",
            path.display()
        )));
    }
    Ok(records)
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Reads an image from disk into the library's RGB container.
pub fn load_rgb_image(path: &Path) -> Result<colorfool::RgbImage, CliError> {
    let decoded = image::open(path)
        .map_err(|e| CliError::Io(format!("cannot read image {}: {e}", path.display())))?
        .into_rgb8();
    colorfool::RgbImage::new(decoded.width(), decoded.height(), decoded.into_raw())
        .map_err(|e| CliError::Io(format!("image {}: {e}", path.display())))
}

/// Writes an RGB image as PNG (lossless, so filters later see exactly the
/// attack's output).
pub fn save_png(img: &colorfool::RgbImage, path: &Path) -> Result<(), CliError> {
    image::save_buffer_with_format(
        path,
        img.as_bytes(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_resolves_relative_paths_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let img = colorfool::RgbImage::filled(2, 2, [1, 2, 3]);
        save_png(&img, &dir.path().join("a.png")).unwrap();
        let manifest = dir.path().join("m.jsonl");
        std::fs::write(&manifest, "{\"image_path\":\"a.png\"}\n").unwrap();
        let records = load_manifest(&manifest).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].image_path.is_absolute() || records[0].image_path.is_file());
        assert_eq!(records[0].stem().unwrap(), "a");
    }

    #[test]
    fn missing_image_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.jsonl");
        std::fs::write(&manifest, "{\"image_path\":\"missing.png\"}\n").unwrap();
        assert!(matches!(
            load_manifest(&manifest),
            Err(CliError::Io(_))
        ));
    }

    #[test]
    fn malformed_line_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.jsonl");
        std::fs::write(&manifest, "{malformed\n").unwrap();
        assert!(matches!(load_manifest(&manifest), Err(CliError::Usage(_))));
    }

    #[test]
    fn duplicate_stems_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = colorfool::RgbImage::filled(2, 2, [1, 2, 3]);
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        save_png(&img, &dir.path().join("a.png")).unwrap();
        save_png(&img, &dir.path().join("sub/a.png")).unwrap();
        let manifest = dir.path().join("m.jsonl");
        std::fs::write(
            &manifest,
            "{\"image_path\":\"a.png\"}\n{\"image_path\":\"sub/a.png\"}\n",
        )
        .unwrap();
        assert!(matches!(load_manifest(&manifest), Err(CliError::Usage(_))));
    }

    #[test]
    fn png_round_trip_preserves_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let img = colorfool::RgbImage::filled(3, 2, [7, 8, 9]);
        let path = dir.path().join("x.png");
        save_png(&img, &path).unwrap();
        let back = load_rgb_image(&path).unwrap();
        assert_eq!(back, img);
    }
}

//! Semantic decomposition of an image into sensitive and non-sensitive
//! regions.
//!
//! Label maps are always ingested from files produced by an external
//! segmenter; this crate never runs segmentation itself. Pixels of each
//! sensitive category are merged into one region per category, while every
//! distinct non-sensitive label keeps its own region so each can receive an
//! independent color offset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::colorspace::LabImage;

/// Default mapping for the 150-class ADE20K labeling.
const ADE20K_CATEGORIES: &str = include_str!("../data/ade20k.categories");

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("failed to read label map {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to decode label map {path}: {source}")]
    Decode {
        path: String,
        source: image::ImageError,
    },
    #[error("label map must be single-channel, {path} is {found}")]
    NotSingleChannel { path: String, found: String },
    #[error("label map is {map_width}x{map_height} but image is {img_width}x{img_height}")]
    DimensionMismatch {
        map_width: u32,
        map_height: u32,
        img_width: u32,
        img_height: u32,
    },
    #[error("invalid category mapping at line {line}: {reason}")]
    InvalidMapping { line: usize, reason: String },
}

/// Semantic class of a region. The four sensitive categories admit only
/// natural-color perturbations; everything else is non-sensitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SemanticCategory {
    Person,
    Vegetation,
    Water,
    Sky,
    NonSensitive,
}

impl SemanticCategory {
    pub fn is_sensitive(self) -> bool {
        self != SemanticCategory::NonSensitive
    }
}

impl fmt::Display for SemanticCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SemanticCategory::Person => "person",
            SemanticCategory::Vegetation => "vegetation",
            SemanticCategory::Water => "water",
            SemanticCategory::Sky => "sky",
            SemanticCategory::NonSensitive => "non-sensitive",
        };
        f.write_str(s)
    }
}

impl FromStr for SemanticCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "person" => Ok(SemanticCategory::Person),
            "vegetation" => Ok(SemanticCategory::Vegetation),
            "water" => Ok(SemanticCategory::Water),
            "sky" => Ok(SemanticCategory::Sky),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

/// Per-pixel raw label ids, dimension-matched to the image they describe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self, RegionError> {
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(RegionError::InvalidMapping {
                line: 0,
                reason: format!(
                    "label buffer length {} does not match {width}x{height}",
                    labels.len()
                ),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
}

/// Reads a label map from a single-channel 8- or 16-bit PNG or PGM file.
/// Labels are taken verbatim; no remapping happens here.
pub fn load_label_map(path: impl AsRef<Path>) -> Result<LabelMap, RegionError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| RegionError::Io {
        path: display.clone(),
        source,
    })?;
    let decoded = image::load_from_memory(&bytes).map_err(|source| RegionError::Decode {
        path: display.clone(),
        source,
    })?;
    let (width, height) = (decoded.width(), decoded.height());
    let labels: Vec<u32> = match decoded {
        image::DynamicImage::ImageLuma8(img) => img.into_raw().into_iter().map(u32::from).collect(),
        image::DynamicImage::ImageLuma16(img) => {
            img.into_raw().into_iter().map(u32::from).collect()
        }
        other => {
            return Err(RegionError::NotSingleChannel {
                path: display,
                found: format!("{:?}", other.color()),
            })
        }
    };
    LabelMap::new(width, height, labels)
}

/// Total map from raw label id to semantic category; unlisted ids are
/// non-sensitive.
#[derive(Debug, Clone, Default)]
pub struct CategoryMapping {
    table: BTreeMap<u32, SemanticCategory>,
}

impl CategoryMapping {
    /// Mapping for the standard 150-class ADE20K labeling, as shipped in
    /// `data/ade20k.categories`.
    pub fn ade20k() -> Self {
        Self::parse(ADE20K_CATEGORIES).expect("bundled mapping parses")
    }

    /// Parses `<id> = <category>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, RegionError> {
        let mut table = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (id_str, cat_str) =
                content
                    .split_once('=')
                    .ok_or_else(|| RegionError::InvalidMapping {
                        line,
                        reason: "expected `<id> = <category>`".into(),
                    })?;
            let id: u32 =
                id_str
                    .trim()
                    .parse()
                    .map_err(|e| RegionError::InvalidMapping {
                        line,
                        reason: format!("bad label id {:?}: {e}", id_str.trim()),
                    })?;
            let category: SemanticCategory =
                cat_str
                    .trim()
                    .parse()
                    .map_err(|reason| RegionError::InvalidMapping { line, reason })?;
            table.insert(id, category);
        }
        Ok(Self { table })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, RegionError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|source| RegionError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn category_of(&self, label: u32) -> SemanticCategory {
        self.table
            .get(&label)
            .copied()
            .unwrap_or(SemanticCategory::NonSensitive)
    }
}

/// Channel extremes of a region in Lab units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub min_a: f64,
    pub max_a: f64,
    pub min_b: f64,
    pub max_b: f64,
}

/// One semantic region: a binary mask over the image plus the category and
/// channel extremes used to build its natural-color range.
#[derive(Debug, Clone)]
pub struct Region {
    mask: Vec<bool>,
    category: SemanticCategory,
    stats: RegionStats,
    /// Raw label id for non-sensitive regions; `None` for merged
    /// per-category sensitive regions.
    label: Option<u32>,
}

impl Region {
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn category(&self) -> SemanticCategory {
        self.category
    }

    pub fn stats(&self) -> RegionStats {
        self.stats
    }

    pub fn label(&self) -> Option<u32> {
        self.label
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// The decomposition of one image: sensitive regions (one per category
/// present) followed by non-sensitive regions (one per raw label).
#[derive(Debug, Clone)]
pub struct RegionSet {
    width: u32,
    height: u32,
    sensitive: Vec<Region>,
    non_sensitive: Vec<Region>,
}

impl RegionSet {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn sensitive(&self) -> &[Region] {
        &self.sensitive
    }

    pub fn non_sensitive(&self) -> &[Region] {
        &self.non_sensitive
    }

    pub fn len(&self) -> usize {
        self.sensitive.len() + self.non_sensitive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Iterates sensitive regions first, then non-sensitive. This order is
    /// the contract for per-region offset vectors.
    pub fn iter(&self) -> impl Iterator<Item = &Region> {
        self.sensitive.iter().chain(self.non_sensitive.iter())
    }
}

fn stats_over(mask: &[bool], img: &LabImage) -> RegionStats {
    let mut min_a = f64::INFINITY;
    let mut max_a = f64::NEG_INFINITY;
    let mut min_b = f64::INFINITY;
    let mut max_b = f64::NEG_INFINITY;
    for (i, inside) in mask.iter().enumerate() {
        if *inside {
            min_a = min_a.min(img.a()[i]);
            max_a = max_a.max(img.a()[i]);
            min_b = min_b.min(img.b()[i]);
            max_b = max_b.max(img.b()[i]);
        }
    }
    RegionStats {
        min_a,
        max_a,
        min_b,
        max_b,
    }
}

/// Splits `img` into regions according to the label map and category
/// mapping. Sensitive pixels merge into one region per category (in the
/// fixed order person, vegetation, water, sky); each distinct non-sensitive
/// label becomes its own region. Empty categories are omitted, so the masks
/// always partition the image.
pub fn decompose(
    img: &LabImage,
    labels: &LabelMap,
    mapping: &CategoryMapping,
) -> Result<RegionSet, RegionError> {
    if labels.width() != img.width() || labels.height() != img.height() {
        return Err(RegionError::DimensionMismatch {
            map_width: labels.width(),
            map_height: labels.height(),
            img_width: img.width(),
            img_height: img.height(),
        });
    }
    let n = img.pixel_count();
    let categories = [
        SemanticCategory::Person,
        SemanticCategory::Vegetation,
        SemanticCategory::Water,
        SemanticCategory::Sky,
    ];

    let mut sensitive = Vec::new();
    for category in categories {
        let mask: Vec<bool> = labels
            .labels()
            .iter()
            .map(|&l| mapping.category_of(l) == category)
            .collect();
        if mask.iter().any(|m| *m) {
            let stats = stats_over(&mask, img);
            sensitive.push(Region {
                mask,
                category,
                stats,
                label: None,
            });
        }
    }

    // Non-sensitive labels keep their own region, ordered by raw id.
    let mut by_label: BTreeMap<u32, Vec<bool>> = BTreeMap::new();
    for (i, &label) in labels.labels().iter().enumerate() {
        if mapping.category_of(label) == SemanticCategory::NonSensitive {
            by_label.entry(label).or_insert_with(|| vec![false; n])[i] = true;
        }
    }
    let non_sensitive = by_label
        .into_iter()
        .map(|(label, mask)| {
            let stats = stats_over(&mask, img);
            Region {
                mask,
                category: SemanticCategory::NonSensitive,
                stats,
                label: Some(label),
            }
        })
        .collect();

    Ok(RegionSet {
        width: img.width(),
        height: img.height(),
        sensitive,
        non_sensitive,
    })
}

/// The no-priors decomposition: a single non-sensitive region covering
/// every pixel.
pub fn whole_image_region(img: &LabImage) -> RegionSet {
    let mask = vec![true; img.pixel_count()];
    let stats = stats_over(&mask, img);
    RegionSet {
        width: img.width(),
        height: img.height(),
        sensitive: Vec::new(),
        non_sensitive: vec![Region {
            mask,
            category: SemanticCategory::NonSensitive,
            stats,
            label: None,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::{srgb_to_lab, RgbImage};

    fn lab_of(rgb: &RgbImage) -> LabImage {
        srgb_to_lab(rgb)
    }

    #[test]
    fn pgm_labels_read_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\x00\x0c\x0c").unwrap();
        let map = load_label_map(&path).unwrap();
        assert_eq!(map.labels(), &[0, 0, 12, 12]);
        assert_eq!((map.width(), map.height()), (2, 2));
    }

    #[test]
    fn rgb_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        image::RgbImage::from_pixel(2, 2, image::Rgb([1, 2, 3]))
            .save(&path)
            .unwrap();
        let err = load_label_map(&path).unwrap_err();
        assert!(
            err.to_string().contains("must be single-channel"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn sixteen_bit_labels_survive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_pixel(2, 1, image::Luma([300u16]))
            .save(&path)
            .unwrap();
        let map = load_label_map(&path).unwrap();
        assert_eq!(map.labels(), &[300, 300]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_label_map("/nonexistent/labels.png").unwrap_err();
        assert!(matches!(err, RegionError::Io { .. }));
    }

    #[test]
    fn undecodable_file_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("garbage.png");
        std::fs::write(&path, b"not an image at all").unwrap();
        let err = load_label_map(&path).unwrap_err();
        assert!(matches!(err, RegionError::Decode { .. }));
    }

    #[test]
    fn uniform_non_sensitive_map_yields_one_region() {
        let img = lab_of(&RgbImage::filled(3, 3, [10, 200, 30]));
        let labels = LabelMap::new(3, 3, vec![7; 9]).unwrap();
        let set = decompose(&img, &labels, &CategoryMapping::ade20k()).unwrap();
        assert!(set.sensitive().is_empty());
        assert_eq!(set.non_sensitive().len(), 1);
        assert_eq!(set.non_sensitive()[0].pixel_count(), 9);
    }

    #[test]
    fn mixed_map_partitions_image() {
        // 4x4: person (12), sky (2) and two distinct non-sensitive ids.
        let mut labels = vec![12u32; 4];
        labels.extend_from_slice(&[2, 2, 2, 2]);
        labels.extend_from_slice(&[40, 40, 41, 41]);
        labels.extend_from_slice(&[40, 40, 41, 41]);
        let labels = LabelMap::new(4, 4, labels).unwrap();
        let img = lab_of(&RgbImage::filled(4, 4, [90, 120, 200]));
        let set = decompose(&img, &labels, &CategoryMapping::ade20k()).unwrap();
        assert_eq!(set.sensitive().len(), 2);
        assert_eq!(set.non_sensitive().len(), 2);
        assert_eq!(
            set.sensitive()[0].category(),
            SemanticCategory::Person
        );
        assert_eq!(set.sensitive()[1].category(), SemanticCategory::Sky);
        // Brute-force pixel counts per mask.
        assert_eq!(set.sensitive()[0].pixel_count(), 4);
        assert_eq!(set.sensitive()[1].pixel_count(), 4);
        assert_eq!(set.non_sensitive()[0].pixel_count(), 4);
        assert_eq!(set.non_sensitive()[1].pixel_count(), 4);
        // Partition: each pixel covered exactly once.
        for i in 0..16 {
            let covered: usize = set.iter().map(|r| usize::from(r.mask()[i])).sum();
            assert_eq!(covered, 1, "pixel {i} covered {covered} times");
        }
    }

    #[test]
    fn constant_region_stats_collapse() {
        let img = lab_of(&RgbImage::filled(2, 2, [0, 128, 0]));
        let labels = LabelMap::new(2, 2, vec![9; 4]).unwrap();
        let set = decompose(&img, &labels, &CategoryMapping::ade20k()).unwrap();
        let region = &set.sensitive()[0];
        assert_eq!(region.category(), SemanticCategory::Vegetation);
        let stats = region.stats();
        assert_eq!(stats.min_a, stats.max_a);
        assert_eq!(stats.min_b, stats.max_b);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = lab_of(&RgbImage::filled(2, 2, [1, 2, 3]));
        let labels = LabelMap::new(3, 2, vec![0; 6]).unwrap();
        assert!(matches!(
            decompose(&img, &labels, &CategoryMapping::ade20k()),
            Err(RegionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn whole_image_region_covers_everything() {
        let img = lab_of(&RgbImage::filled(3, 3, [5, 5, 5]));
        let set = whole_image_region(&img);
        assert!(set.sensitive().is_empty());
        assert_eq!(set.non_sensitive().len(), 1);
        assert_eq!(set.non_sensitive()[0].pixel_count(), 9);

        let tiny = lab_of(&RgbImage::filled(1, 1, [5, 5, 5]));
        assert_eq!(whole_image_region(&tiny).non_sensitive()[0].pixel_count(), 1);
    }

    #[test]
    fn whole_image_stats_match_global_extremes() {
        let mut data = Vec::new();
        for v in [[250u8, 10, 10], [10, 250, 10], [10, 10, 250], [200, 200, 0]] {
            data.extend_from_slice(&v);
        }
        let img = lab_of(&RgbImage::new(2, 2, data).unwrap());
        let set = whole_image_region(&img);
        let stats = set.non_sensitive()[0].stats();
        let min_a = img.a().iter().cloned().fold(f64::INFINITY, f64::min);
        let max_a = img.a().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_b = img.b().iter().cloned().fold(f64::INFINITY, f64::min);
        let max_b = img.b().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(stats.min_a, min_a);
        assert_eq!(stats.max_a, max_a);
        assert_eq!(stats.min_b, min_b);
        assert_eq!(stats.max_b, max_b);
    }

    #[test]
    fn mapping_parser_reports_bad_lines() {
        assert!(CategoryMapping::parse("12 = person").is_ok());
        let err = CategoryMapping::parse("12 person").unwrap_err();
        assert!(matches!(err, RegionError::InvalidMapping { line: 1, .. }));
        let err = CategoryMapping::parse("x = person").unwrap_err();
        assert!(matches!(err, RegionError::InvalidMapping { line: 1, .. }));
        let err = CategoryMapping::parse("1 = persons").unwrap_err();
        assert!(matches!(err, RegionError::InvalidMapping { line: 1, .. }));
    }

    #[test]
    fn unlisted_labels_default_to_non_sensitive() {
        let mapping = CategoryMapping::ade20k();
        assert_eq!(mapping.category_of(12), SemanticCategory::Person);
        assert_eq!(mapping.category_of(2), SemanticCategory::Sky);
        assert_eq!(mapping.category_of(999), SemanticCategory::NonSensitive);
    }
}

//! Input-transformation defenses: re-quantization, median filtering and a
//! JPEG compression round trip.
//!
//! All filters map valid RGB images to valid RGB images of the same size,
//! so they can be chained in front of any oracle.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::colorspace::RgbImage;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("{kind} parameter {parameter} outside supported grid {grid}")]
    InvalidParameter {
        kind: FilterKind,
        parameter: u32,
        grid: &'static str,
    },
    #[error("image {width}x{height} smaller than {k}x{k} kernel")]
    ImageTooSmall { width: u32, height: u32, k: u32 },
    #[error("jpeg encoding failed: {0}")]
    JpegEncode(String),
    #[error("jpeg decoding failed: {0}")]
    JpegDecode(String),
    #[error("image dimensions exceed the codec limit of 65535")]
    TooLargeForCodec,
    #[error("cannot parse filter spec {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FilterKind {
    Requantize,
    Median,
    Jpeg,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FilterKind::Requantize => "requantize",
            FilterKind::Median => "median",
            FilterKind::Jpeg => "jpeg",
        };
        f.write_str(s)
    }
}

/// One configured defense filter. Serializes as `kind:parameter`, e.g.
/// `median:3`, `jpeg:75`, `requantize:4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FilterSpec {
    kind: FilterKind,
    parameter: u32,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, parameter: u32) -> Result<Self, DefenseError> {
        let ok = match kind {
            FilterKind::Requantize => (1..=7).contains(&parameter),
            FilterKind::Median => matches!(parameter, 2 | 3 | 5),
            FilterKind::Jpeg => matches!(parameter, 25 | 50 | 75 | 100),
        };
        if ok {
            Ok(Self { kind, parameter })
        } else {
            Err(DefenseError::InvalidParameter {
                kind,
                parameter,
                grid: match kind {
                    FilterKind::Requantize => "1..=7",
                    FilterKind::Median => "{2,3,5}",
                    FilterKind::Jpeg => "{25,50,75,100}",
                },
            })
        }
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn parameter(&self) -> u32 {
        self.parameter
    }

    pub fn apply(&self, img: &RgbImage) -> Result<RgbImage, DefenseError> {
        match self.kind {
            FilterKind::Requantize => requantize(img, self.parameter),
            FilterKind::Median => median_filter(img, self.parameter),
            FilterKind::Jpeg => jpeg_roundtrip(img, self.parameter),
        }
    }

    /// The full defense grid: re-quantization with 1 to 7 bits, median
    /// kernels 2, 3 and 5, JPEG qualities 25, 50, 75 and 100.
    pub fn full_grid() -> Vec<FilterSpec> {
        let mut grid = Vec::with_capacity(14);
        for bits in 1..=7 {
            grid.push(FilterSpec::new(FilterKind::Requantize, bits).unwrap());
        }
        for k in [2, 3, 5] {
            grid.push(FilterSpec::new(FilterKind::Median, k).unwrap());
        }
        for q in [25, 50, 75, 100] {
            grid.push(FilterSpec::new(FilterKind::Jpeg, q).unwrap());
        }
        grid
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.parameter)
    }
}

impl FromStr for FilterSpec {
    type Err = DefenseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |reason: &str| DefenseError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let (kind_str, param_str) = s
            .split_once(':')
            .ok_or_else(|| parse_err("expected `kind:parameter`"))?;
        let kind = match kind_str.trim() {
            "requantize" => FilterKind::Requantize,
            "median" => FilterKind::Median,
            "jpeg" => FilterKind::Jpeg,
            _ => return Err(parse_err("kind must be requantize, median or jpeg")),
        };
        let parameter: u32 = param_str
            .trim()
            .parse()
            .map_err(|_| parse_err("parameter must be an integer"))?;
        FilterSpec::new(kind, parameter)
    }
}

impl Serialize for FilterSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FilterSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Re-quantizes every channel to `bits` bits: values snap to the nearest of
/// `2^bits` evenly spaced levels and are scaled back to `[0,255]`.
pub fn requantize(img: &RgbImage, bits: u32) -> Result<RgbImage, DefenseError> {
    if !(1..=7).contains(&bits) {
        return Err(DefenseError::InvalidParameter {
            kind: FilterKind::Requantize,
            parameter: bits,
            grid: "1..=7",
        });
    }
    let levels = f64::from((1u32 << bits) - 1);
    let data = img
        .as_bytes()
        .iter()
        .map(|&v| {
            let level = (f64::from(v) * levels / 255.0).round();
            (level * 255.0 / levels).round() as u8
        })
        .collect();
    Ok(RgbImage::new(img.width(), img.height(), data).expect("same dimensions"))
}

/// Median filter with a square window per channel.
///
/// Odd kernels are centered; the even kernel `k=2` is anchored at the top
/// left. Out-of-image samples replicate the nearest edge pixel, and even
/// window sizes take the lower of the two middle order statistics so output
/// values stay in the input's value set.
pub fn median_filter(img: &RgbImage, k: u32) -> Result<RgbImage, DefenseError> {
    if !matches!(k, 2 | 3 | 5) {
        return Err(DefenseError::InvalidParameter {
            kind: FilterKind::Median,
            parameter: k,
            grid: "{2,3,5}",
        });
    }
    let (width, height) = img.dimensions();
    if width < k || height < k {
        return Err(DefenseError::ImageTooSmall {
            width,
            height,
            k,
        });
    }
    let (lo, hi) = if k % 2 == 1 {
        (-((k / 2) as i64), (k / 2) as i64)
    } else {
        (0, (k - 1) as i64)
    };
    let mut data = Vec::with_capacity(img.as_bytes().len());
    let mut window = Vec::with_capacity((k * k) as usize);
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            for channel in 0..3 {
                window.clear();
                for dy in lo..=hi {
                    let sy = (y + dy).clamp(0, height as i64 - 1) as u32;
                    for dx in lo..=hi {
                        let sx = (x + dx).clamp(0, width as i64 - 1) as u32;
                        window.push(img.pixel(sx, sy)[channel]);
                    }
                }
                window.sort_unstable();
                data.push(window[(window.len() - 1) / 2]);
            }
        }
    }
    Ok(RgbImage::new(width, height, data).expect("same dimensions"))
}

/// Encodes the image as baseline JPEG at the given quality and decodes it
/// back. Chroma is subsampled 4:2:0 below quality 100 and kept 4:4:4 at
/// quality 100.
pub fn jpeg_roundtrip(img: &RgbImage, quality: u32) -> Result<RgbImage, DefenseError> {
    if !matches!(quality, 25 | 50 | 75 | 100) {
        return Err(DefenseError::InvalidParameter {
            kind: FilterKind::Jpeg,
            parameter: quality,
            grid: "{25,50,75,100}",
        });
    }
    let width = u16::try_from(img.width()).map_err(|_| DefenseError::TooLargeForCodec)?;
    let height = u16::try_from(img.height()).map_err(|_| DefenseError::TooLargeForCodec)?;

    let mut encoded = Vec::new();
    let mut encoder = jpeg_encoder::Encoder::new(&mut encoded, quality as u8);
    encoder.set_sampling_factor(if quality < 100 {
        jpeg_encoder::SamplingFactor::R_4_2_0
    } else {
        jpeg_encoder::SamplingFactor::R_4_4_4
    });
    encoder
        .encode(img.as_bytes(), width, height, jpeg_encoder::ColorType::Rgb)
        .map_err(|e| DefenseError::JpegEncode(e.to_string()))?;

    let decoded = image::load_from_memory_with_format(&encoded, image::ImageFormat::Jpeg)
        .map_err(|e| DefenseError::JpegDecode(e.to_string()))?
        .into_rgb8();
    if decoded.dimensions() != img.dimensions() {
        return Err(DefenseError::JpegDecode(format!(
            "decoder returned {}x{}, expected {}x{}",
            decoded.width(),
            decoded.height(),
            img.width(),
            img.height()
        )));
    }
    Ok(
        RgbImage::new(img.width(), img.height(), decoded.into_raw())
            .expect("decoder preserved dimensions"),
    )
}

/// Identifier of the JPEG codec pair, recorded in report metadata so
/// cross-codec drift in the detection metrics stays visible.
pub fn jpeg_codec_id() -> String {
    "jpeg-encoder-0.7/image-0.25".into()
}

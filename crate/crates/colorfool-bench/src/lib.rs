//! Shared fixtures for the pipeline benchmarks.

use colorfool::RgbImage;

/// Deterministic pseudo-natural test image.
pub fn test_image(width: u32, height: u32) -> RgbImage {
    let mut data = Vec::with_capacity((width * height * 3) as usize);
    for y in 0..height {
        for x in 0..width {
            let r = ((x * 7 + y * 3) % 256) as u8;
            let g = ((x * 2 + y * 11) % 256) as u8;
            let b = ((x * 5 + y * 5) % 256) as u8;
            data.extend_from_slice(&[r, g, b]);
        }
    }
    RgbImage::new(width, height, data).expect("well-formed fixture")
}

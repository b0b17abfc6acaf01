//! Image containers and exact color space conversions.
//!
//! Conversions are deterministic pure functions: sRGB (D65) to CIE 1976
//! L*a*b* and back, and the hexcone HSV model. `lab_to_srgb` includes the
//! final quantization step, so its output is always a valid 8-bit image
//! regardless of how far the Lab planes were pushed.

use thiserror::Error;

/// D65 reference white in XYZ, normalized to Y = 1.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

/// sRGB (linear) to XYZ, row-major.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// XYZ to sRGB (linear), row-major.
const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

const LAB_EPS: f64 = 216.0 / 24389.0; // (6/29)^3
const LAB_DELTA: f64 = 6.0 / 29.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be nonzero, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("buffer length {actual} does not match {width}x{height} image (expected {expected})")]
    BufferLength {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
}

/// An 8-bit RGB image with interleaved `r,g,b` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImageError::BufferLength {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image of the given size with every pixel set to `rgb`.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, data).expect("filled image is well formed")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Floating-point CIELAB planes of an image.
///
/// `l` is in `[0,100]`, `a` and `b` in `[-128,127]`. Constructors clamp;
/// intermediate arithmetic may leave the ranges only inside an operation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: u32,
    height: u32,
    l: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LabImage {
    pub fn new(
        width: u32,
        height: u32,
        l: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        let expected = width as usize * height as usize;
        for plane in [&l, &a, &b] {
            if plane.len() != expected {
                return Err(ImageError::BufferLength {
                    width,
                    height,
                    expected,
                    actual: plane.len(),
                });
            }
        }
        let mut img = Self {
            width,
            height,
            l,
            a,
            b,
        };
        img.clamp_planes();
        Ok(img)
    }

    fn clamp_planes(&mut self) {
        for v in &mut self.l {
            *v = v.clamp(0.0, 100.0);
        }
        for v in &mut self.a {
            *v = v.clamp(-128.0, 127.0);
        }
        for v in &mut self.b {
            *v = v.clamp(-128.0, 127.0);
        }
    }

    pub(crate) fn clamp_chroma(&mut self) {
        for v in &mut self.a {
            *v = v.clamp(-128.0, 127.0);
        }
        for v in &mut self.b {
            *v = v.clamp(-128.0, 127.0);
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub(crate) fn a_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub(crate) fn b_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }
}

/// HSV planes with hue in turns, `[0,1)`, and saturation/value in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvImage {
    width: u32,
    height: u32,
    h: Vec<f64>,
    s: Vec<f64>,
    v: Vec<f64>,
}

impl HsvImage {
    pub fn new(
        width: u32,
        height: u32,
        h: Vec<f64>,
        s: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        let expected = width as usize * height as usize;
        for plane in [&h, &s, &v] {
            if plane.len() != expected {
                return Err(ImageError::BufferLength {
                    width,
                    height,
                    expected,
                    actual: plane.len(),
                });
            }
        }
        let mut img = Self {
            width,
            height,
            h,
            s,
            v,
        };
        for x in &mut img.h {
            *x = wrap_unit(*x);
        }
        for x in &mut img.s {
            *x = x.clamp(0.0, 1.0);
        }
        for x in &mut img.v {
            *x = x.clamp(0.0, 1.0);
        }
        Ok(img)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }
}

/// Wraps hue into `[0,1)`.
pub(crate) fn wrap_unit(h: f64) -> f64 {
    let r = h.rem_euclid(1.0);
    if r == 1.0 {
        0.0
    } else {
        r
    }
}

fn srgb_linearize(v: u8) -> f64 {
    let c = f64::from(v) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_delinearize(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPS {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t * t * t
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

/// Quantization to the 8-bit dynamic range: clamp, then round half away
/// from zero.
fn quantize_channel(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

/// Converts an sRGB image to CIE 1976 L*a*b* under the D65 white point.
pub fn srgb_to_lab(img: &RgbImage) -> LabImage {
    let n = img.pixel_count();
    let mut l = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for px in img.as_bytes().chunks_exact(3) {
        let r = srgb_linearize(px[0]);
        let g = srgb_linearize(px[1]);
        let bl = srgb_linearize(px[2]);
        let x = RGB_TO_XYZ[0][0] * r + RGB_TO_XYZ[0][1] * g + RGB_TO_XYZ[0][2] * bl;
        let y = RGB_TO_XYZ[1][0] * r + RGB_TO_XYZ[1][1] * g + RGB_TO_XYZ[1][2] * bl;
        let z = RGB_TO_XYZ[2][0] * r + RGB_TO_XYZ[2][1] * g + RGB_TO_XYZ[2][2] * bl;
        let fx = lab_f(x / WHITE[0]);
        let fy = lab_f(y / WHITE[1]);
        let fz = lab_f(z / WHITE[2]);
        l.push(116.0 * fy - 16.0);
        a.push(500.0 * (fx - fy));
        b.push(200.0 * (fy - fz));
    }
    LabImage::new(img.width(), img.height(), l, a, b).expect("planes sized from the source image")
}

/// Converts Lab planes back to sRGB and quantizes to 8 bits.
///
/// This is the composition of the inverse color transform with the final
/// range quantization: out-of-gamut values land on the clamped boundary.
pub fn lab_to_srgb(img: &LabImage) -> RgbImage {
    let n = img.pixel_count();
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        let fy = (img.l()[i] + 16.0) / 116.0;
        let fx = fy + img.a()[i] / 500.0;
        let fz = fy - img.b()[i] / 200.0;
        let x = WHITE[0] * lab_f_inv(fx);
        let y = WHITE[1] * lab_f_inv(fy);
        let z = WHITE[2] * lab_f_inv(fz);
        for row in &XYZ_TO_RGB {
            let lin = row[0] * x + row[1] * y + row[2] * z;
            let v = srgb_delinearize(lin.clamp(0.0, 1.0)) * 255.0;
            data.push(quantize_channel(v));
        }
    }
    RgbImage::new(img.width(), img.height(), data).expect("buffer sized from the source image")
}

/// Converts an RGB image to hexcone HSV. Achromatic pixels take hue 0.
pub fn rgb_to_hsv(img: &RgbImage) -> HsvImage {
    let n = img.pixel_count();
    let mut h = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for px in img.as_bytes().chunks_exact(3) {
        let r = f64::from(px[0]) / 255.0;
        let g = f64::from(px[1]) / 255.0;
        let b = f64::from(px[2]) / 255.0;
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let chroma = max - min;
        let hue = if chroma == 0.0 {
            0.0
        } else if max == r {
            wrap_unit(((g - b) / chroma).rem_euclid(6.0) / 6.0)
        } else if max == g {
            ((b - r) / chroma + 2.0) / 6.0
        } else {
            ((r - g) / chroma + 4.0) / 6.0
        };
        h.push(hue);
        s.push(if max == 0.0 { 0.0 } else { chroma / max });
        v.push(max);
    }
    HsvImage::new(img.width(), img.height(), h, s, v).expect("planes sized from the source image")
}

/// Converts HSV planes back to an 8-bit RGB image.
pub fn hsv_to_rgb(img: &HsvImage) -> RgbImage {
    let n = img.width() as usize * img.height() as usize;
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        let h6 = wrap_unit(img.h()[i]) * 6.0;
        let sector = (h6.floor() as usize) % 6;
        let f = h6 - h6.floor();
        let s = img.s()[i];
        let v = img.v()[i];
        let p = v * (1.0 - s);
        let q = v * (1.0 - s * f);
        let t = v * (1.0 - s * (1.0 - f));
        let (r, g, b) = match sector {
            0 => (v, t, p),
            1 => (q, v, p),
            2 => (p, v, t),
            3 => (p, q, v),
            4 => (t, p, v),
            _ => (v, p, q),
        };
        data.push(quantize_channel(r * 255.0));
        data.push(quantize_channel(g * 255.0));
        data.push(quantize_channel(b * 255.0));
    }
    RgbImage::new(img.width(), img.height(), data).expect("buffer sized from the source image")
}

//! Registered RGB-D image containers, PNG I/O, depth hole filling and the
//! pinhole camera model.
//!
//! Depth is stored in meters as `f64`, with `0.0` marking a missing reading.
//! On disk depth lives in 16-bit single-channel PNG files holding millimeters.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel coordinate. `x` is the column and `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub const fn new(x: u32, y: u32) -> Self {
        Pixel { x, y }
    }

    /// Key for row-major ordering: smaller row first, then smaller column.
    pub fn row_major(&self) -> (u32, u32) {
        (self.y, self.x)
    }

    pub fn as_f64(&self) -> [f64; 2] {
        [self.x as f64, self.y as f64]
    }
}

/// Per-pixel depth in meters, row-major. `0.0` means invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} depth values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidImage(format!("depth value {bad} is not finite and non-negative")));
        }
        Ok(DepthImage { width, height, data })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self::from_fn(width, height, |_, _| depth)
    }

    /// Builds an image from `f(x, y)`. Non-finite or negative values become invalid (0).
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let d = f(x, y);
                data.push(if d.is_finite() && d > 0.0 { d } else { 0.0 });
            }
        }
        DepthImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, p: Pixel) -> f64 {
        self.get(p.x as usize, p.y as usize)
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }

    /// Depth quantized to whole millimeters, saturating at `u16::MAX`.
    pub fn to_millimeters(&self) -> Vec<u16> {
        self.data
            .iter()
            .map(|d| (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16)
            .collect()
    }

    pub fn from_millimeters(width: usize, height: usize, mm: &[u16]) -> Result<Self> {
        let data = mm.iter().map(|v| *v as f64 / 1000.0).collect();
        Self::new(width, height, data)
    }
}

/// Row-major RGB, 8 bits per channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} color bytes, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(ColorImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = std::iter::repeat_n(rgb, width * height).flatten().collect();
        ColorImage { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        ColorImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// ITU-R BT.601 luma of one pixel.
    #[inline]
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let [r, g, b] = self.get(x, y);
        luma([r as f64, g as f64, b as f64])
    }
}

#[inline]
pub fn luma(rgb: [f64; 3]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// Reads an 8-bit RGB PNG and a 16-bit millimeter depth PNG of equal size.
pub fn load_rgbd(color_path: impl AsRef<Path>, depth_path: impl AsRef<Path>) -> Result<(ColorImage, DepthImage)> {
    let color = load_color_png(color_path)?;
    let depth = load_depth_png(depth_path)?;
    if color.width != depth.width || color.height != depth.height {
        return Err(Error::Registration {
            color_width: color.width,
            color_height: color.height,
            depth_width: depth.width,
            depth_height: depth.height,
        });
    }
    Ok((color, depth))
}

pub fn load_color_png(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::io(path, e))?;
    let rgb = match img {
        image::DynamicImage::ImageRgb8(rgb) => rgb,
        other => {
            return Err(Error::io(
                path,
                format!("expected 8-bit RGB, found {:?}", other.color()),
            ))
        }
    };
    let (w, h) = rgb.dimensions();
    ColorImage::new(w as usize, h as usize, rgb.into_raw())
}

pub fn load_depth_png(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::io(path, e))?;
    let gray = match img {
        image::DynamicImage::ImageLuma16(gray) => gray,
        other => {
            return Err(Error::io(
                path,
                format!("expected 16-bit grayscale depth, found {:?}", other.color()),
            ))
        }
    };
    let (w, h) = gray.dimensions();
    DepthImage::from_millimeters(w as usize, h as usize, gray.as_raw())
}

pub fn save_color_png(color: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(color.width as u32, color.height as u32, color.data.clone())
            .expect("buffer length checked on construction");
    buf.save(path).map_err(|e| Error::io(path, e))
}

pub fn save_depth_png(depth: &DepthImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width as u32, depth.height as u32, depth.to_millimeters())
            .expect("buffer length checked on construction");
    buf.save(path).map_err(|e| Error::io(path, e))
}

/// Fills every invalid pixel with the depth of its nearest valid pixel.
///
/// Distance is Euclidean in pixels; among equally near valid pixels the one
/// with the smaller row, then the smaller column, wins. Valid pixels are
/// returned untouched.
pub fn inpaint_invalid(depth: &DepthImage) -> Result<DepthImage> {
    let (w, h) = (depth.width, depth.height);
    if depth.valid_count() == 0 {
        return Err(Error::EmptyDepth);
    }
    if depth.valid_count() == w * h {
        return Ok(depth.clone());
    }
    let dist = squared_distance_transform(depth);
    let mut out = depth.data.clone();
    for y in 0..h {
        for x in 0..w {
            if depth.is_valid(x, y) {
                continue;
            }
            let d2 = dist[y * w + x];
            out[y * w + x] = nearest_on_circle(depth, x as i64, y as i64, d2)
                .expect("distance transform points at an existing valid pixel");
        }
    }
    Ok(DepthImage { width: w, height: h, data: out })
}

/// Scans the lattice points at exactly squared distance `d2` in row-major
/// order and returns the first valid depth.
fn nearest_on_circle(depth: &DepthImage, x: i64, y: i64, d2: i64) -> Option<f64> {
    let r = isqrt(d2);
    for dy in -r..=r {
        let rest = d2 - dy * dy;
        let dx = isqrt(rest);
        if dx * dx != rest {
            continue;
        }
        let cols: &[i64] = if dx == 0 { &[0] } else { &[-dx, dx] };
        for &cx in cols {
            let (px, py) = (x + cx, y + dy);
            if depth.contains(px, py) && depth.is_valid(px as usize, py as usize) {
                return Some(depth.get(px as usize, py as usize));
            }
        }
    }
    None
}

fn isqrt(v: i64) -> i64 {
    let mut r = (v as f64).sqrt() as i64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

/// Exact squared Euclidean distance to the nearest valid pixel
/// (Felzenszwalb & Huttenlocher, separable lower envelope of parabolas).
fn squared_distance_transform(depth: &DepthImage) -> Vec<i64> {
    const INF: i64 = i64::MAX / 4;
    let (w, h) = (depth.width, depth.height);

    // columns: 1D distance to the nearest valid pixel in the same column
    let mut col = vec![INF; w * h];
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if depth.is_valid(x, y) {
                last = Some(y);
            }
            if let Some(l) = last {
                let d = (y - l) as i64;
                col[y * w + x] = d * d;
            }
        }
        last = None;
        for y in (0..h).rev() {
            if depth.is_valid(x, y) {
                last = Some(y);
            }
            if let Some(l) = last {
                let d = (l - y) as i64;
                col[y * w + x] = col[y * w + x].min(d * d);
            }
        }
    }

    let mut out = vec![INF; w * h];
    let mut sites: Vec<usize> = Vec::with_capacity(w);
    let mut bounds: Vec<f64> = Vec::with_capacity(w + 1);
    for y in 0..h {
        let f = &col[y * w..(y + 1) * w];
        sites.clear();
        bounds.clear();
        for q in 0..w {
            if f[q] >= INF {
                continue;
            }
            loop {
                match sites.last() {
                    None => {
                        sites.push(q);
                        bounds.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&p) => {
                        let s = ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64
                            / (2.0 * (q as f64 - p as f64));
                        if s <= *bounds.last().unwrap() {
                            sites.pop();
                            bounds.pop();
                        } else {
                            sites.push(q);
                            bounds.push(s);
                            break;
                        }
                    }
                }
            }
        }
        if sites.is_empty() {
            continue;
        }
        let mut k = 0;
        for q in 0..w {
            while k + 1 < sites.len() && bounds[k + 1] < q as f64 {
                k += 1;
            }
            let p = sites[k];
            let dx = q as i64 - p as i64;
            out[y * w + q] = dx * dx + f[p];
        }
    }
    out
}

/// Pinhole intrinsics of a camera producing `width` x `height` images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    /// RealSense D435-like color intrinsics at 640x480.
    pub fn d435_vga() -> Self {
        CameraIntrinsics { fx: 615.0, fy: 615.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad intrinsics {self:?}")))
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let k: CameraIntrinsics = serde_json::from_str(&text).map_err(|e| Error::io(path, e))?;
        k.validate()?;
        Ok(k)
    }

    pub fn deproject(&self, u: f64, v: f64, depth: f64) -> Result<Point3> {
        deproject(u, v, depth, self)
    }

    pub fn project(&self, p: Point3) -> Result<(f64, f64)> {
        project(p, self)
    }
}

/// A point in the camera frame, meters; `z` grows away from the camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

pub fn deproject(u: f64, v: f64, depth: f64, k: &CameraIntrinsics) -> Result<Point3> {
    if !(depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    Ok(Point3 {
        x: (u - k.cx) * depth / k.fx,
        y: (v - k.cy) * depth / k.fy,
        z: depth,
    })
}

/// Real-valued pixel coordinates of `p`; rounding is left to the caller.
pub fn project(p: Point3, k: &CameraIntrinsics) -> Result<(f64, f64)> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

//! Conversions between 8-bit files, the `[-1, 1]` GAN domain and edge maps.
//!
//! All images are planar (channel-major): `pixels[c * h * w + y * w + x]`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// 8-bit RGB image in planar layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidTensor("image dimensions must be positive".into()));
        }
        if pixels.len() != 3 * height * width {
            return Err(Error::InvalidTensor(format!(
                "expected {} planar RGB values, got {}",
                3 * height * width,
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Build from a per-pixel closure returning `[r, g, b]`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = vec![0u8; 3 * height * width];
        for y in 0..height {
            for x in 0..width {
                let rgb = f(y, x);
                for c in 0..3 {
                    pixels[c * height * width + y * width + x] = rgb[c];
                }
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u8 {
        self.pixels[c * self.height * self.width + y * self.width + x]
    }

    fn to_rgb_image(&self) -> image::RgbImage {
        let (h, w) = (self.height, self.width);
        image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            image::Rgb([self.get(0, y, x), self.get(1, y, x), self.get(2, y, x)])
        })
    }

    /// Luma plane (0.299 R + 0.587 G + 0.114 B) in the 0..=255 range.
    pub fn luma(&self) -> Vec<f64> {
        let n = self.height * self.width;
        (0..n)
            .map(|i| {
                0.299 * self.pixels[i] as f64
                    + 0.587 * self.pixels[n + i] as f64
                    + 0.114 * self.pixels[2 * n + i] as f64
            })
            .collect()
    }
}

/// Three-channel image in the GAN domain: every entry finite and in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<T: Scalar = f32>(Tensor<T>);

impl<T: Scalar> ImageTensor<T> {
    pub fn new(t: Tensor<T>) -> Result<Self> {
        if t.shape().len() != 3 || t.shape()[0] != 3 {
            return Err(Error::InvalidTensor(format!(
                "image tensor must be 3xHxW, got {:?}",
                t.shape()
            )));
        }
        let one = T::one();
        if let Some(v) = t
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < -one || **v > one)
        {
            return Err(Error::InvalidTensor(format!(
                "value {v:?} outside [-1, 1]"
            )));
        }
        Ok(Self(t))
    }

    /// Clamp into range; NaN is still rejected.
    pub fn clamped(t: Tensor<T>) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::InvalidTensor("non-finite value".into()));
        }
        let one = T::one();
        Self::new(t.map(|v| v.max(-one).min(one)))
    }

    pub fn filled(side: usize, value: T) -> Result<Self> {
        Self::new(Tensor::filled(&[3, side, side], value))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor(self.0.cast())
    }
}

/// Single-channel edge strength map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl EdgeMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::InvalidTensor("edge map size mismatch".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidTensor("edge values must lie in [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageU8> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Ok(ImageU8::from_fn(h, w, |y, x| rgb.get_pixel(x as u32, y as u32).0))
}

pub fn save_png(img: &ImageU8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.to_rgb_image()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::io(path, std::io::Error::other(other.to_string())),
        })
}

/// Source index pairs and the weight of the upper neighbour for one axis of a
/// half-pixel-centred bilinear resample.
pub(crate) fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Bilinear resample of one plane.
pub fn resize_plane<T: Scalar>(
    plane: &[T],
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, fy) in &ty {
        let fy = T::lit(fy);
        for &(x0, x1, fx) in &tx {
            let fx = T::lit(fx);
            let top = plane[y0 * w + x0] * (T::one() - fx) + plane[y0 * w + x1] * fx;
            let bot = plane[y1 * w + x0] * (T::one() - fx) + plane[y1 * w + x1] * fx;
            out.push(top * (T::one() - fy) + bot * fy);
        }
    }
    out
}

/// Adjoint of [`resize_plane`]: scatters output gradients back to the source grid.
pub fn resize_plane_adjoint<T: Scalar>(
    grad_out: &[T],
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut grad = vec![T::zero(); h * w];
    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
        let fy = T::lit(fy);
        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
            let fx = T::lit(fx);
            let g = grad_out[oy * ow + ox];
            grad[y0 * w + x0] += g * (T::one() - fy) * (T::one() - fx);
            grad[y0 * w + x1] += g * (T::one() - fy) * fx;
            grad[y1 * w + x0] += g * fy * (T::one() - fx);
            grad[y1 * w + x1] += g * fy * fx;
        }
    }
    grad
}

fn resize_u8(img: &ImageU8, oh: usize, ow: usize) -> ImageU8 {
    let (h, w) = (img.height, img.width);
    let mut pixels = Vec::with_capacity(3 * oh * ow);
    for c in 0..3 {
        let plane: Vec<f64> = img.pixels[c * h * w..(c + 1) * h * w]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let out = resize_plane(&plane, (h, w), (oh, ow));
        pixels.extend(out.iter().map(|v| (v + 0.5).floor().clamp(0.0, 255.0) as u8));
    }
    ImageU8 {
        height: oh,
        width: ow,
        pixels,
    }
}

/// Bilinear resize to `side x side`, then `u / 255 / 0.5 - 1`.
pub fn to_gan_input(img: &ImageU8, side: usize) -> Result<ImageTensor<f32>> {
    if side == 0 {
        return Err(Error::config("side", "must be positive"));
    }
    let (h, w) = (img.height, img.width);
    let mut data = Vec::with_capacity(3 * side * side);
    for c in 0..3 {
        let plane: Vec<f64> = img.pixels[c * h * w..(c + 1) * h * w]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let resized = resize_plane(&plane, (h, w), (side, side));
        data.extend(
            resized
                .iter()
                .map(|u| ((u / 255.0) / 0.5 - 1.0).clamp(-1.0, 1.0) as f32),
        );
    }
    ImageTensor::new(Tensor::from_vec(&[3, side, side], data)?)
}

/// Inverse of the GAN normalisation: `round(255 * (x + 1) / 2)`, halves rounded up.
pub fn from_gan_output<T: Scalar>(x: &ImageTensor<T>) -> Result<ImageU8> {
    let t = x.tensor();
    if !t.is_finite() {
        return Err(Error::InvalidTensor("NaN or infinite value in output".into()));
    }
    let (_, h, w) = t.chw();
    let pixels = t
        .data()
        .iter()
        .map(|v| {
            let u = 255.0 * (v.as_f64() + 1.0) / 2.0;
            (u + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageU8::new(h, w, pixels)
}

fn replicate(v: isize, n: usize) -> usize {
    v.clamp(0, n as isize - 1) as usize
}

/// 4-neighbour Laplacian `[[0,1,0],[1,-4,1],[0,1,0]]` with replicate padding.
pub fn laplacian_plane<T: Scalar>(plane: &[T], h: usize, w: usize) -> Vec<T> {
    let four = T::lit(4.0);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let at = |yy: isize, xx: isize| plane[replicate(yy, h) * w + replicate(xx, w)];
            out.push(at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - four * at(y, x));
        }
    }
    out
}

/// Adjoint of [`laplacian_plane`] (replicate padding folds border taps back).
pub fn laplacian_plane_adjoint<T: Scalar>(grad_out: &[T], h: usize, w: usize) -> Vec<T> {
    let four = T::lit(4.0);
    let mut grad = vec![T::zero(); h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let g = grad_out[y as usize * w + x as usize];
            for (dy, dx) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                grad[replicate(y + dy, h) * w + replicate(x + dx, w)] += g;
            }
            grad[y as usize * w + x as usize] -= four * g;
        }
    }
    grad
}

/// |Laplacian| of the luma plane, scaled so the maximum is 1.
pub fn laplacian_edge_map(img: &ImageU8) -> EdgeMap {
    let (h, w) = (img.height, img.width);
    let lap = laplacian_plane(&img.luma(), h, w);
    let mags: Vec<f64> = lap.iter().map(|v| v.abs()).collect();
    let max = mags.iter().cloned().fold(0.0, f64::max);
    let values = mags
        .iter()
        .map(|&m| if max > 0.0 { (m / max) as f32 } else { 0.0 })
        .collect();
    EdgeMap {
        height: h,
        width: w,
        values,
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn convolve_separable(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w as isize {
            tmp[y * w + x as usize] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * plane[y * w + replicate(x + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w {
            out[y as usize * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[replicate(y + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Gaussian smoothing (sigma 1.4), Sobel gradients, non-maximum suppression
/// and hysteresis between `low` and `high` on the luma plane.
pub fn canny_edge_map(img: &ImageU8, low: f64, high: f64) -> Result<EdgeMap> {
    if low > high {
        return Err(Error::config(
            "canny thresholds",
            format!("low ({low}) exceeds high ({high})"),
        ));
    }
    let (h, w) = (img.height, img.width);
    let smooth = convolve_separable(&img.luma(), h, w, &gaussian_kernel(1.4));
    let at = |y: isize, x: isize| smooth[replicate(y, h) * w + replicate(x, w)];

    let mut mag = vec![0.0; h * w];
    let mut dir = vec![0u8; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            dir[i] = match angle {
                a if !(22.5..157.5).contains(&a) => 0,
                a if a < 67.5 => 1,
                a if a < 112.5 => 2,
                _ => 3,
            };
        }
    }

    // Non-maximum suppression; the one-pixel border is never marked.
    let mut thin = vec![0.0; h * w];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let (a, b) = match dir[i] {
                0 => (mag[i - 1], mag[i + 1]),
                1 => (mag[i + w + 1], mag[i - w - 1]),
                2 => (mag[i - w], mag[i + w]),
                _ => (mag[i + w - 1], mag[i - w + 1]),
            };
            if mag[i] >= a && mag[i] >= b {
                thin[i] = mag[i];
            }
        }
    }

    let mut out = vec![0.0f32; h * w];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high && out[i] == 0.0 {
            out[i] = 1.0;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (jy, jx) = ((j / w) as isize, (j % w) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (ny, nx) = (jy + dy, jx + dx);
                        if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                            continue;
                        }
                        let n = ny as usize * w + nx as usize;
                        if out[n] == 0.0 && thin[n] >= low {
                            out[n] = 1.0;
                            stack.push(n);
                        }
                    }
                }
            }
        }
    }
    EdgeMap::new(h, w, out)
}

pub fn edge_to_rgb(edges: &EdgeMap) -> ImageU8 {
    let plane: Vec<u8> = edges
        .values
        .iter()
        .map(|v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    let mut pixels = Vec::with_capacity(3 * plane.len());
    for _ in 0..3 {
        pixels.extend_from_slice(&plane);
    }
    ImageU8 {
        height: edges.height,
        width: edges.width,
        pixels,
    }
}

pub const EXPORT_SIDE: usize = 512;
pub const DIFFUSION_STEPS: u32 = 80;
pub const GUIDANCE_SCALE: f64 = 12.0;

/// Hand-off document for an external ControlNet-style diffusion pipeline.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DiffusionManifest {
    pub image: String,
    pub edge_map: String,
    pub prompt: String,
    pub negative_prompt: String,
    pub steps: u32,
    pub guidance_scale: f64,
}

/// Writes `image.png` (512x512), `edge_map.png` (Laplacian, RGB) and `manifest.json`.
pub fn export_diffusion_manifest<T: Scalar>(
    generated: &ImageTensor<T>,
    prompt: &str,
    negative_prompt: &str,
    out_dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let upscaled = resize_u8(&from_gan_output(generated)?, EXPORT_SIDE, EXPORT_SIDE);
    let edges = edge_to_rgb(&laplacian_edge_map(&upscaled));
    save_png(&upscaled, out_dir.join("image.png"))?;
    save_png(&edges, out_dir.join("edge_map.png"))?;
    let manifest = DiffusionManifest {
        image: "image.png".into(),
        edge_map: "edge_map.png".into(),
        prompt: prompt.into(),
        negative_prompt: negative_prompt.into(),
        steps: DIFFUSION_STEPS,
        guidance_scale: GUIDANCE_SCALE,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Resize an 8-bit image with the same bilinear kernel used everywhere else.
pub fn resize(img: &ImageU8, height: usize, width: usize) -> Result<ImageU8> {
    if height == 0 || width == 0 {
        return Err(Error::config("size", "must be positive"));
    }
    Ok(resize_u8(img, height, width))
}

/// Writes a tensor as a little-endian `float32` `.npy` array.
pub fn save_npy<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    let shape = if dims.len() == 1 {
        format!("({},)", dims[0])
    } else {
        format!("({})", dims.join(", "))
    };
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {shape}, }}");
    // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of 64
    let pad = 64 - (10 + header.len() + 1) % 64;
    header.push_str(&" ".repeat(pad % 64));
    header.push('\n');

    let mut bytes = Vec::with_capacity(10 + header.len() + 4 * t.len());
    bytes.extend_from_slice(b"\x93NUMPY\x01\x00");
    bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for v in t.data() {
        bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

//! Linear-RGB images, PFM/PNG I/O and differentiable bilinear sampling.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diff::Real;
use crate::error::{Error, Result};

/// Linear RGB image, row-major from the top-left pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

/// Display gamma used for PNG encode/decode.
pub const GAMMA: f64 = 2.2;

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, v: [f64; 3]) -> Self {
        Image { width, height, data: vec![v; width * height] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_size(&self, o: &Image) -> bool {
        self.width == o.width && self.height == o.height
    }

    /// Mean of the three channels after clamping to `[0, 1]` and applying
    /// display gamma.
    pub fn display_luminance(&self) -> Vec<f64> {
        self.data.iter().map(|p| p.iter().map(|c| c.clamp(0.0, 1.0).powf(1.0 / GAMMA)).sum::<f64>() / 3.0).collect()
    }

    /// Smoothstep-weighted bilinear sample at a continuous pixel position
    /// (pixel centers at `i + 0.5`), clamp-to-edge. C¹ in the position.
    pub fn sample<S: Real>(&self, px: S, py: S) -> [S; 3] {
        let (i0, fx) = (px - 0.5).floor_frac();
        let (j0, fy) = (py - 0.5).floor_frac();
        let (fx, fy) = (fx.smoothstep(), fy.smoothstep());
        let cx = |i: i64| i.clamp(0, self.width as i64 - 1) as usize;
        let cy = |j: i64| j.clamp(0, self.height as i64 - 1) as usize;
        let (xa, xb, ya, yb) = (cx(i0), cx(i0 + 1), cy(j0), cy(j0 + 1));
        let (p00, p10) = (self.get(xa, ya), self.get(xb, ya));
        let (p01, p11) = (self.get(xa, yb), self.get(xb, yb));
        [0, 1, 2].map(|c| {
            let top = fx * (p10[c] - p00[c]) + p00[c];
            let bottom = fx * (p11[c] - p01[c]) + p01[c];
            fy * (bottom - top) + top
        })
    }

    /// Read a `.pfm` (linear) or `.png` (sRGB-ish, gamma 2.2) file.
    pub fn read(path: &Path) -> Result<Image> {
        match ext(path).as_str() {
            "pfm" => read_pfm(path),
            "png" => read_png(path),
            e => Err(Error::format(path, format!("unsupported image extension {e:?}"))),
        }
    }

    /// Write by extension: `.pfm` keeps linear values, `.png` tone maps.
    pub fn write(&self, path: &Path) -> Result<()> {
        match ext(path).as_str() {
            "pfm" => write_pfm(path, self),
            "png" => write_png(path, self),
            e => Err(Error::format(path, format!("unsupported image extension {e:?}"))),
        }
    }
}

fn ext(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    let mut buf = format!("PF\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            for c in img.get(x, y) {
                buf.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::format(path, m.to_string());
    // three whitespace-terminated header tokens: magic, dims, scale
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ascii"))?);
    }
    pos += 1;
    let channels = match tokens[0] {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("bad magic")),
    };
    let w: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let need = w * h * channels * 4;
    if bytes.len() < pos + need {
        return Err(bad("truncated pixel data"));
    }
    let mut img = Image::new(w, h);
    let mut k = pos;
    for y in (0..h).rev() {
        for x in 0..w {
            let mut px = [0.0; 3];
            for c in 0..channels {
                let b: [u8; 4] = bytes[k..k + 4].try_into().expect("4 bytes");
                k += 4;
                px[c] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) } as f64;
            }
            if channels == 1 {
                px = [px[0]; 3];
            }
            img.set(x, y, px);
        }
    }
    Ok(img)
}

pub fn read_png(path: &Path) -> Result<Image> {
    let dynimg = ::image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let rgb = dynimg.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.pixels().map(|p| p.0.map(|c| (c as f64 / 255.0).powf(GAMMA))).collect();
    Ok(Image { width: w as usize, height: h as usize, data })
}

fn to_byte(c: f64) -> u8 {
    (c.clamp(0.0, 1.0).powf(1.0 / GAMMA) * 255.0).round() as u8
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let mut buf = ::image::RgbImage::new(img.width as u32, img.height as u32);
    for (i, p) in buf.pixels_mut().enumerate() {
        p.0 = img.data[i].map(to_byte);
    }
    buf.save(path).map_err(|e| Error::format(path, e.to_string()))
}

/// Binary mask as an 8-bit grey PNG (255 = set).
pub fn write_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let buf = ::image::GrayImage::from_fn(width as u32, height as u32, |x, y| {
        ::image::Luma([if mask[y as usize * width + x as usize] { 255 } else { 0 }])
    });
    buf.save(path).map_err(|e| Error::format(path, e.to_string()))
}

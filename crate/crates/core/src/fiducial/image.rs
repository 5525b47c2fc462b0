//! Grayscale images and their two on-disk formats.
//!
//! - 16-bit binary PGM (`P5`, maxval 65535, big-endian samples) with a
//!   `# flux_scale=<f>` comment; stored value × scale = flux.
//! - `FLG1` float raw for subtraction images: 16-byte header (`FLG1`,
//!   width, height, reserved zero, all `u32` little-endian) followed by
//!   row-major `f32` little-endian samples.

use std::io::{Read, Write};

use super::FiducialError;

/// Row-major grayscale image of `f64` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, FiducialError> {
        if data.len() != width * height {
            return Err(FiducialError::InvalidImage(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FiducialError::InvalidImage("non-finite sample".into()));
        }
        Ok(Self { width, height, data })
    }

    /// A flux image: every sample finite and non-negative.
    pub fn from_flux(width: usize, height: usize, data: Vec<f64>) -> Result<Self, FiducialError> {
        let img = Self::new(width, height, data)?;
        img.check_flux()?;
        Ok(img)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn check_flux(&self) -> Result<(), FiducialError> {
        if self.data.iter().any(|v| *v < 0.0) {
            return Err(FiducialError::InvalidImage("negative flux sample".into()));
        }
        Ok(())
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Value at `(x, y)` if inside the image.
    #[inline]
    pub fn at(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    /// Bilinear interpolation at a sub-pixel position; `None` outside.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image2D {
        Image2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Content moved by `(dx, dy)` whole pixels; uncovered pixels take `fill`.
    pub fn shifted(&self, dx: i64, dy: i64, fill: f64) -> Image2D {
        let mut out = Image2D::filled(self.width, self.height, fill);
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                if let Some(v) = self.at(x - dx, y - dy) {
                    out.set(x as usize, y as usize, v);
                }
            }
        }
        out
    }

    /// Encodes as 16-bit PGM. The flux scale maps the brightest sample to
    /// 65535 (or 1.0 for an all-zero image).
    pub fn to_pgm(&self) -> Result<Vec<u8>, FiducialError> {
        self.check_flux()?;
        let (_, max) = self.min_max();
        let scale = if max > 0.0 { max / 65535.0 } else { 1.0 };
        self.to_pgm_with_scale(scale)
    }

    pub fn to_pgm_with_scale(&self, scale: f64) -> Result<Vec<u8>, FiducialError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(FiducialError::InvalidImage(format!("bad flux scale {scale}")));
        }
        let mut out = format!(
            "P5\n# flux_scale={scale}\n{} {}\n65535\n",
            self.width, self.height
        )
        .into_bytes();
        out.reserve(self.data.len() * 2);
        for v in &self.data {
            let q = (v / scale).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
        Ok(out)
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Image2D, FiducialError> {
        let bad = |m: &str| FiducialError::InvalidImage(format!("pgm: {m}"));
        let mut pos = 0usize;
        let mut scale = 1.0;
        let mut tokens = Vec::new();
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos >= bytes.len() {
                return Err(bad("truncated header"));
            }
            if bytes[pos] == b'#' {
                let end = bytes[pos..]
                    .iter()
                    .position(|b| *b == b'\n')
                    .map_or(bytes.len(), |e| pos + e);
                let comment = std::str::from_utf8(&bytes[pos + 1..end]).map_err(|_| bad("comment"))?;
                if let Some(v) = comment.trim().strip_prefix("flux_scale=") {
                    scale = v.trim().parse().map_err(|_| bad("flux_scale"))?;
                }
                pos = end;
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            tokens.push(
                std::str::from_utf8(&bytes[start..pos])
                    .map_err(|_| bad("header"))?
                    .to_string(),
            );
        }
        // exactly one whitespace byte separates maxval from the raster
        pos += 1;
        if tokens[0] != "P5" {
            return Err(bad("not a binary PGM"));
        }
        let width: usize = tokens[1].parse().map_err(|_| bad("width"))?;
        let height: usize = tokens[2].parse().map_err(|_| bad("height"))?;
        let maxval: u32 = tokens[3].parse().map_err(|_| bad("maxval"))?;
        let bytes_per = if maxval > 255 { 2 } else { 1 };
        let raster = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
        if raster.len() < width * height * bytes_per {
            return Err(bad("short raster"));
        }
        let data = (0..width * height)
            .map(|i| {
                let q = if bytes_per == 2 {
                    u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
                } else {
                    raster[i] as f64
                };
                q * scale
            })
            .collect();
        Image2D::from_flux(width, height, data)
    }

    pub fn write_flg(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(b"FLG1")?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_flg(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        self.write_flg(&mut out).expect("write to Vec");
        out
    }

    pub fn read_flg(mut r: impl Read) -> Result<Image2D, FiducialError> {
        let io = |e: std::io::Error| FiducialError::InvalidImage(format!("flg: {e}"));
        let mut header = [0u8; 16];
        r.read_exact(&mut header).map_err(io)?;
        if &header[0..4] != b"FLG1" {
            return Err(FiducialError::InvalidImage("flg: bad magic".into()));
        }
        let width = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
        let height = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
        let mut raw = vec![0u8; width * height * 4];
        r.read_exact(&mut raw).map_err(io)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Image2D::new(width, height, data)
    }
}

//! 8-bit grayscale rasters: magnitude-matrix rendering, PGM/PNG output, and a
//! few plots drawn straight into pixels (ROC curves, confusion matrices, loss
//! curves).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scaling {
    #[default]
    Linear,
    /// `ln(1 + m)` before min-max scaling.
    Log,
}

impl std::str::FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Scaling::Linear),
            "log" => Ok(Scaling::Log),
            other => Err(Error::Config(format!("unknown scaling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        if x < self.width && y < self.height {
            self.pixels[y * self.width + x] = v;
        }
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::file(path, e))
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            encoder.set_color(png::ColorType::Grayscale);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header()?;
            writer.write_image_data(&self.pixels)?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_png()?;
        let mut file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::file(path, e))
    }

    /// Pixels as `[0, 1]` floats, row-major.
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }

    fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, v: u8) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            if x >= 0 && y >= 0 {
                self.set(x as usize, y as usize, v);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, v: u8) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.pixels[yy * self.width + xx] = v;
            }
        }
    }

    fn text(&mut self, x: usize, y: usize, s: &str, scale: usize, v: u8) {
        let mut cx = x;
        for ch in s.chars() {
            if let Some(rows) = glyph(ch) {
                for (ry, bits) in rows.iter().enumerate() {
                    for rx in 0..3 {
                        if bits & (0b100 >> rx) != 0 {
                            self.fill_rect(cx + rx * scale, y + ry * scale, scale, scale, v);
                        }
                    }
                }
            }
            cx += 4 * scale;
        }
    }
}

/// 3×5 bitmap glyphs for digits and a handful of symbols.
fn glyph(ch: char) -> Option<[u8; 5]> {
    Some(match ch {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        ' ' => [0; 5],
        _ => return None,
    })
}

/// Renders `rows` (top row first) into an `out_h × out_w` image.
///
/// Values are optionally log-compressed, min-max scaled to `[0, 1]`, resampled
/// bilinearly with corner alignment, then quantized to `0..=255`. A matrix with
/// zero range renders as all zeros.
pub fn render_matrix(rows: &[Vec<f64>], out_w: usize, out_h: usize, scaling: Scaling) -> Result<GrayImage> {
    let in_h = rows.len();
    let in_w = rows.first().map_or(0, Vec::len);
    if in_h == 0 || in_w == 0 || rows.iter().any(|r| r.len() != in_w) {
        return Err(Error::Size("cannot render an empty or ragged matrix".into()));
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::Size(format!("output size {out_w}x{out_h} must be positive")));
    }
    let transform = |m: f64| match scaling {
        Scaling::Linear => m,
        Scaling::Log => m.max(0.0).ln_1p(),
    };
    let values: Vec<f64> = rows.iter().flatten().map(|&m| transform(m)).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return Ok(GrayImage::new(out_w, out_h, 0));
    }
    let unit = |r: usize, c: usize| (values[r * in_w + c] - lo) / range;

    let coord = |i: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        if out == 1 || inp == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (inp - 1) as f64 / (out - 1) as f64;
        let i0 = (pos.floor() as usize).min(inp - 1);
        let i1 = (i0 + 1).min(inp - 1);
        (i0, i1, pos - i0 as f64)
    };

    let mut img = GrayImage::new(out_w, out_h, 0);
    for y in 0..out_h {
        let (r0, r1, fy) = coord(y, out_h, in_h);
        for x in 0..out_w {
            let (c0, c1, fx) = coord(x, out_w, in_w);
            let top = unit(r0, c0) * (1.0 - fx) + unit(r0, c1) * fx;
            let bottom = unit(r1, c0) * (1.0 - fx) + unit(r1, c1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            img.pixels[y * out_w + x] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(img)
}

const PLOT_MARGIN: usize = 12;

/// ROC curve on a white canvas with axes and the chance diagonal.
pub fn roc_plot(points: &[(f64, f64)], size: usize) -> GrayImage {
    let size = size.max(4 * PLOT_MARGIN);
    let mut img = GrayImage::new(size, size, 255);
    let span = (size - 2 * PLOT_MARGIN) as f64;
    let to_px = |fpr: f64, tpr: f64| -> (i64, i64) {
        let x = PLOT_MARGIN as f64 + fpr.clamp(0.0, 1.0) * span;
        let y = (size - PLOT_MARGIN) as f64 - tpr.clamp(0.0, 1.0) * span;
        (x.round() as i64, y.round() as i64)
    };
    let (ox, oy) = to_px(0.0, 0.0);
    let (ex, _) = to_px(1.0, 0.0);
    let (_, ty) = to_px(0.0, 1.0);
    img.line(ox, oy, ex, oy, 0);
    img.line(ox, oy, ox, ty, 0);
    // dotted chance line
    let steps = span as i64;
    for s in (0..=steps).step_by(4) {
        let t = s as f64 / steps as f64;
        let (x, y) = to_px(t, t);
        img.set(x as usize, y as usize, 160);
    }
    for w in points.windows(2) {
        let (x0, y0) = to_px(w[0].0, w[0].1);
        let (x1, y1) = to_px(w[1].0, w[1].1);
        img.line(x0, y0, x1, y1, 0);
    }
    img
}

/// 2×2 confusion matrix, rows = actual (SZ, HC), columns = predicted.
/// Cell shade scales with the count; counts are printed in each cell.
pub fn confusion_plot(counts: [[usize; 2]; 2], cell: usize) -> GrayImage {
    let cell = cell.max(24);
    let size = 2 * cell;
    let mut img = GrayImage::new(size, size, 255);
    let max = counts.iter().flatten().copied().max().unwrap_or(0).max(1);
    for (r, row) in counts.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            let shade = 255 - (200 * n / max) as u8;
            img.fill_rect(c * cell, r * cell, cell, cell, shade);
            let label = n.to_string();
            let scale = (cell / 24).max(1);
            let ink = if shade < 128 { 255 } else { 0 };
            let tx = c * cell + cell / 2 - (label.len() * 4 * scale) / 2;
            let ty = r * cell + cell / 2 - 5 * scale / 2;
            img.text(tx, ty, &label, scale, ink);
        }
    }
    for i in 0..=2 {
        let p = (i * cell).min(size - 1) as i64;
        img.line(p, 0, p, size as i64 - 1, 0);
        img.line(0, p, size as i64 - 1, p, 0);
    }
    img
}

/// Polyline of a series (e.g. loss per epoch), y auto-scaled.
pub fn line_plot(values: &[f64], width: usize, height: usize) -> GrayImage {
    let width = width.max(4 * PLOT_MARGIN);
    let height = height.max(4 * PLOT_MARGIN);
    let mut img = GrayImage::new(width, height, 255);
    let (x0, y0) = (PLOT_MARGIN as i64, (height - PLOT_MARGIN) as i64);
    img.line(x0, y0, (width - PLOT_MARGIN) as i64, y0, 0);
    img.line(x0, y0, x0, PLOT_MARGIN as i64, 0);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return img;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let w = (width - 2 * PLOT_MARGIN) as f64;
    let h = (height - 2 * PLOT_MARGIN) as f64;
    let pts: Vec<(i64, i64)> = finite
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = PLOT_MARGIN as f64 + w * i as f64 / (finite.len() - 1) as f64;
            let y = (height - PLOT_MARGIN) as f64 - h * (v - lo) / range;
            (x.round() as i64, y.round() as i64)
        })
        .collect();
    for p in pts.windows(2) {
        img.line(p[0].0, p[0].1, p[1].0, p[1].1, 0);
    }
    img
}

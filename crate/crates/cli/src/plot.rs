//! Minimal static raster plots: framed axes, grid lines at round values,
//! polylines and square markers. No text; the companion CSV carries the
//! numbers.

use anyhow::{bail, Result};
use image::{Rgb, RgbImage};
use std::path::Path;

const W: u32 = 800;
const H: u32 = 500;
const MARGIN: i64 = 40;

pub const BLACK: [u8; 3] = [0, 0, 0];
pub const BLUE: [u8; 3] = [31, 119, 180];
pub const ORANGE: [u8; 3] = [255, 127, 14];
pub const GREEN: [u8; 3] = [44, 160, 44];
pub const RED: [u8; 3] = [214, 39, 40];
const GRID: [u8; 3] = [225, 225, 225];

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
    Both,
}

pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
    pub style: Style,
}

impl Series {
    pub fn new(points: Vec<(f64, f64)>, color: [u8; 3], style: Style) -> Self {
        Self { points, color, style }
    }
}

#[derive(Default)]
pub struct Plot {
    pub series: Vec<Series>,
    pub log_y: bool,
}

impl Plot {
    pub fn log_y() -> Self {
        Self { series: Vec::new(), log_y: true }
    }

    pub fn add(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn ty(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            y.is_finite().then_some(y)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter_map(|&(x, y)| self.ty(y).filter(|_| x.is_finite()).map(|y| (x, y)))
            .collect();
        if pts.is_empty() {
            bail!("nothing to plot");
        }
        let (mut x0, mut x1) = bounds(pts.iter().map(|p| p.0));
        let (mut y0, mut y1) = bounds(pts.iter().map(|p| p.1));
        pad(&mut x0, &mut x1);
        pad(&mut y0, &mut y1);
        let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
        let (pw, ph) = ((W as i64 - 2 * MARGIN) as f64, (H as i64 - 2 * MARGIN) as f64);
        let px = |x: f64| MARGIN + ((x - x0) / (x1 - x0) * pw).round() as i64;
        let py = |y: f64| H as i64 - MARGIN - ((y - y0) / (y1 - y0) * ph).round() as i64;

        let ystep = if self.log_y { 1.0 } else { nice_step(y1 - y0) };
        let mut g = (y0 / ystep).ceil() * ystep;
        while g <= y1 {
            line(&mut img, (MARGIN, py(g)), (W as i64 - MARGIN, py(g)), GRID);
            g += ystep;
        }
        let xstep = nice_step(x1 - x0);
        let mut g = (x0 / xstep).ceil() * xstep;
        while g <= x1 {
            line(&mut img, (px(g), MARGIN), (px(g), H as i64 - MARGIN), GRID);
            g += xstep;
        }
        let (l, r, t, b) = (MARGIN, W as i64 - MARGIN, MARGIN, H as i64 - MARGIN);
        for (p, q) in [((l, t), (r, t)), ((r, t), (r, b)), ((r, b), (l, b)), ((l, b), (l, t))] {
            line(&mut img, p, q, BLACK);
        }

        for s in &self.series {
            let mapped: Vec<(i64, i64)> = s
                .points
                .iter()
                .filter_map(|&(x, y)| self.ty(y).filter(|_| x.is_finite()).map(|y| (px(x), py(y))))
                .collect();
            if s.style != Style::Markers {
                for w in mapped.windows(2) {
                    line(&mut img, w[0], w[1], s.color);
                }
            }
            if s.style != Style::Line {
                for &(cx, cy) in &mapped {
                    for dx in -3..=3 {
                        for dy in -3..=3 {
                            put(&mut img, cx + dx, cy + dy, s.color);
                        }
                    }
                }
            }
        }
        img.save(path)?;
        Ok(())
    }
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn pad(lo: &mut f64, hi: &mut f64) {
    let span = *hi - *lo;
    let p = if span > 0.0 { 0.05 * span } else { 0.5 * lo.abs().max(1.0) };
    *lo -= p;
    *hi += p;
}

/// Step from {1, 2, 5} x 10^k giving at most ~10 grid lines.
fn nice_step(span: f64) -> f64 {
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag)
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

/// Bresenham segment.
fn line(img: &mut RgbImage, (mut x, mut y): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
    let (dx, dy) = ((x1 - x).abs(), -(y1 - y).abs());
    let (sx, sy) = (if x < x1 { 1 } else { -1 }, if y < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x, y, c);
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

/// Histogram as a step polyline.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = bounds(values.iter().copied().filter(|v| v.is_finite()));
    if !(hi > lo) {
        return vec![(lo, values.len() as f64)];
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
    }
    let mut out = vec![(lo, 0.0)];
    for (i, &c) in counts.iter().enumerate() {
        let (a, b) = (lo + i as f64 * w, lo + (i + 1) as f64 * w);
        out.push((a, c as f64));
        out.push((b, c as f64));
    }
    out.push((hi, 0.0));
    out
}

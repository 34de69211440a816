//! Raster figures: echogram overlays and cumulative error curves.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::metrics::ErrorCdf;
use crate::preprocess::{BoundaryLine, Echogram, Segmentation};
use crate::{Error, Result};

/// Sv range mapped onto the grey scale.
const SV_RANGE: (f32, f32) = (-100.0, -30.0);

const AIR: Rgb<u8> = Rgb([255, 64, 64]);
const SEAFLOOR: Rgb<u8> = Rgb([64, 160, 255]);
const SURFACE: Rgb<u8> = Rgb([64, 220, 64]);
const REFERENCE: Rgb<u8> = Rgb([255, 220, 0]);
const MISSING: Rgb<u8> = Rgb([40, 0, 40]);

/// Curve colours, cycled.
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([220, 50, 50]),
    Rgb([50, 100, 220]),
    Rgb([40, 160, 60]),
    Rgb([200, 120, 20]),
    Rgb([140, 60, 180]),
    Rgb([20, 160, 170]),
];

fn grey(v: f32) -> Rgb<u8> {
    let t = ((v - SV_RANGE.0) / (SV_RANGE.1 - SV_RANGE.0)).clamp(0.0, 1.0);
    let g = (t * 255.0).round() as u8;
    Rgb([g, g, g])
}

fn blend(a: Rgb<u8>, b: Rgb<u8>, t: f32) -> Rgb<u8> {
    Rgb(std::array::from_fn(|k| (a.0[k] as f32 * (1.0 - t) + b.0[k] as f32 * t).round() as u8))
}

/// Row of the image holding depth `d`.
fn depth_row(e: &Echogram, d: f64) -> Option<u32> {
    let (lo, hi) = e.depth_edges();
    if !(d >= lo && d <= hi) {
        return None;
    }
    let m = e.n_depths();
    Some((((d - lo) / (hi - lo) * m as f64).floor() as usize).min(m - 1) as u32)
}

fn draw_line(img: &mut RgbImage, e: &Echogram, line: &BoundaryLine, colour: Rgb<u8>) {
    for (i, (&d, &ok)) in line.depths.iter().zip(&line.valid).enumerate() {
        if let (true, Some(j)) = (ok, depth_row(e, d)) {
            img.put_pixel(i as u32, j, colour);
        }
    }
}

/// Echogram with pings across and depth down, masked data tinted and the
/// annotation lines drawn over it. A reference annotation is drawn first so
/// predictions stay visible where they agree.
pub fn render_overlay(e: &Echogram, seg: &Segmentation, reference: Option<&Segmentation>) -> Result<RgbImage> {
    let (n, m) = (e.n_pings(), e.n_depths());
    if n == 0 || m == 0 || seg.n_pings() != n {
        return Err(Error::Alignment(format!("annotation of {} pings for {n} pings", seg.n_pings())));
    }
    let good = seg.good_mask(e);
    let mut img = RgbImage::from_fn(n as u32, m as u32, |i, j| {
        let (i, j) = (i as usize, j as usize);
        let base = e.get(i, j).map_or(MISSING, grey);
        if good[(i, j)] {
            base
        } else {
            blend(base, Rgb([120, 0, 0]), 0.35)
        }
    });
    if let Some(r) = reference {
        for l in [&r.air, &r.seafloor, &r.surface] {
            draw_line(&mut img, e, l, REFERENCE);
        }
    }
    draw_line(&mut img, e, &seg.surface, SURFACE);
    draw_line(&mut img, e, &seg.seafloor, SEAFLOOR);
    draw_line(&mut img, e, &seg.air, AIR);
    Ok(img)
}

/// Cumulative error curves on `[0, max_error]`, fraction of pings rising
/// up the image.
pub fn render_error_cdf(curves: &[(String, ErrorCdf)], max_error: f64, size: (u32, u32)) -> Result<RgbImage> {
    let (w, h) = size;
    if w < 8 || h < 8 || !(max_error > 0.0) {
        return Err(Error::Domain("figure too small or error range empty".into()));
    }
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for x in 0..w {
        img.put_pixel(x, h - 1, Rgb([0, 0, 0]));
    }
    for y in 0..h {
        img.put_pixel(0, y, Rgb([0, 0, 0]));
    }
    for (k, (_, cdf)) in curves.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut prev: Option<u32> = None;
        for x in 1..w {
            let t = max_error * x as f64 / (w - 1) as f64;
            let y = ((1.0 - cdf.fraction_le(t)) * (h - 1) as f64).round() as u32;
            let (a, b) = prev.map_or((y, y), |p| (p.min(y), p.max(y)));
            for yy in a..=b {
                img.put_pixel(x, yy.min(h - 1), colour);
            }
            prev = Some(y);
        }
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

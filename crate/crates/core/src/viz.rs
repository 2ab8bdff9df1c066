//! Sample grids (binary PGM) and latent scatter plots (SVG).

use std::fmt::Write as _;

use crate::hgauss::LatentPoint;
use crate::{Error, Result};

/// Tiles `images` (values in `[0, 1]`, `rows×cols` each) into a
/// `⌈√n⌉`-wide grid and encodes it as a binary PGM.
pub fn pgm_grid(images: &[Vec<f64>], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if images.is_empty() {
        return Err(Error::usage("no images to tile"));
    }
    let n = images.len();
    let gw = (n as f64).sqrt().ceil() as usize;
    let gh = n.div_ceil(gw);
    let (w, h) = (gw * cols, gh * rows);
    let mut px = vec![0u8; w * h];
    for (k, img) in images.iter().enumerate() {
        if img.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: img.len(),
            });
        }
        let (gy, gx) = (k / gw, k % gw);
        for r in 0..rows {
            for c in 0..cols {
                let v = img[r * cols + c].clamp(0.0, 1.0);
                px[(gy * rows + r) * w + gx * cols + c] = (v * 255.0).round() as u8;
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&px);
    Ok(out)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Scatter of 2-D ball coordinates, rescaled so the boundary of the ball of
/// radius `radius` is the drawn unit circle. One `<circle class="pt">` per
/// point.
pub fn latent_svg(points: &[[f64; 2]], labels: Option<&[usize]>, radius: f64) -> Result<String> {
    if let Some(l) = labels {
        if l.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: l.len(),
            });
        }
    }
    let size = 520.0;
    let half = size / 2.0;
    let scale = 250.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<circle class="boundary" cx="{half}" cy="{half}" r="{scale}" fill="none" stroke="black" stroke-width="1.5"/>"#
    );
    for (i, p) in points.iter().enumerate() {
        let (x, y) = (p[0] / radius, p[1] / radius);
        let color = labels.map_or(PALETTE[0], |l| PALETTE[l[i] % PALETTE.len()]);
        let _ = writeln!(
            s,
            r#"<circle class="pt" cx="{:.3}" cy="{:.3}" r="1.6" fill="{color}" fill-opacity="0.7"/>"#,
            half + scale * x,
            half - scale * y
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// First two coordinates of the first block, which must have at least two
/// dimensions. The projection of a ball point stays inside the disk.
pub fn planar_codes(points: &[LatentPoint]) -> Result<Vec<[f64; 2]>> {
    points
        .iter()
        .map(|p| {
            let b = p.blocks().first().map(|b| b.coords()).unwrap_or(&[]);
            if b.len() < 2 {
                return Err(Error::usage(
                    "latent plot needs a first block of dimension ≥ 2",
                ));
            }
            Ok([b[0], b[1]])
        })
        .collect()
}

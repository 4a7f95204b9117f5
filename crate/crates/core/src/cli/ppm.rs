//! Binary PPM (P6) export of dominant-item rasters.
//!
//! Items 1-3, 4-6 and 7-9 of a 9-item unit map to shades of red, green and
//! blue; items 1, 2 and 3 of a 3-item unit map to red, green and blue.
//! Cells without a clear dominant item are gray.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::Raster;
use crate::error::Result;

pub const GRAY: [u8; 3] = [128, 128, 128];

/// Full, light and dark shade of a family: (primary channel, other channels).
const SHADES: [(u8, u8); 3] = [(255, 0), (255, 140), (140, 0)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Palette {
    /// Items per unit, 3 or 9.
    pub items: usize,
    /// When set, colours are scaled by the dominant concentration over this
    /// reference, floored at a quarter of full brightness.
    pub brightness_ref: Option<f64>,
}

impl Palette {
    pub fn new(items: usize) -> Self {
        Palette {
            items,
            brightness_ref: None,
        }
    }

    /// Colour of 0-based `item`.
    pub fn color(&self, item: usize) -> [u8; 3] {
        let (family, shade) = if self.items > 3 { (item / 3, item % 3) } else { (item, 0) };
        let (hi, lo) = SHADES[shade];
        let mut c = [lo; 3];
        c[family % 3] = hi;
        c
    }

    pub fn pixel(&self, item: usize, value: f64, degenerate: bool) -> [u8; 3] {
        if degenerate {
            return GRAY;
        }
        let c = self.color(item);
        match self.brightness_ref {
            None => c,
            Some(r) => {
                let k = 0.25 + 0.75 * (value / r).clamp(0.0, 1.0);
                c.map(|ch| (ch as f64 * k).round() as u8)
            }
        }
    }
}

pub fn write_ppm<W: Write>(raster: &Raster, palette: &Palette, mut out: W) -> Result<()> {
    write!(out, "P6\n{} {}\n255\n", raster.width, raster.height)?;
    let mut buf = Vec::with_capacity(3 * raster.items.len());
    for ((&item, &v), &deg) in raster.items.iter().zip(&raster.values).zip(&raster.degenerate) {
        buf.extend_from_slice(&palette.pixel(item as usize, v, deg));
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Writes `frame_00000.ppm`, `frame_00001.ppm`, ... into `dir` and returns
/// the paths.
pub fn export_frames(rasters: &[Raster], palette: &Palette, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(rasters.len());
    for (j, r) in rasters.iter().enumerate() {
        let path = dir.join(format!("frame_{j:05}.ppm"));
        let mut bytes = Vec::new();
        write_ppm(r, palette, &mut bytes)?;
        std::fs::write(&path, bytes)?;
        paths.push(path);
    }
    Ok(paths)
}

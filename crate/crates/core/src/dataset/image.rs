use std::fmt;
use std::io::Write;
use std::path::Path;

use super::DatasetError;

/// Rectangular bitmap of foreground/background pixels, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

impl BinaryImage {
    /// All-background image. Panics on a zero dimension.
    pub fn blank(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        BinaryImage {
            width,
            height,
            pixels: vec![false; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<bool>) -> Option<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return None;
        }
        Some(BinaryImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut img = Self::blank(width, height);
        for r in 0..height {
            for c in 0..width {
                img.pixels[r * width + c] = f(r, c);
            }
        }
        img
    }

    /// Builds an image from text rows where `#` marks foreground.
    pub fn from_rows(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        assert!(
            rows.iter().all(|r| r.chars().count() == width),
            "ragged rows"
        );
        let pixels = rows
            .iter()
            .flat_map(|r| r.chars().map(|ch| ch == '#'))
            .collect();
        Self::from_pixels(width, height, pixels).expect("empty row set")
    }

    /// Binarizes 8-bit intensities: values below half the 8-bit range are ink.
    pub fn from_luma(width: usize, height: usize, luma: &[u8]) -> Option<Self> {
        Self::from_pixels(width, height, luma.iter().map(|&v| v < 128).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Copy of the `width`×`height` window whose top-left corner is (`row`, `col`).
    pub fn sub_image(&self, row: usize, col: usize, width: usize, height: usize) -> Self {
        assert!(row + height <= self.height && col + width <= self.width);
        Self::from_fn(width, height, |r, c| self.get(row + r, col + c))
    }

    /// Loads a PNG or PBM/PGM/PPM raster, binarizing on load.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let unreadable = |e: &dyn fmt::Display| DatasetError::UnreadableImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let img = image::open(path).map_err(|e| unreadable(&e))?;
        let luma = img.to_luma8();
        let (w, h) = luma.dimensions();
        Self::from_luma(w as usize, h as usize, luma.as_raw())
            .ok_or_else(|| unreadable(&"zero-sized image"))
    }

    /// Writes a plain-text PBM (P1); `1` is foreground.
    pub fn write_pbm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "P1")?;
        writeln!(out, "{} {}", self.width, self.height)?;
        for r in 0..self.height {
            let line: Vec<&str> = (0..self.width)
                .map(|c| if self.get(r, c) { "1" } else { "0" })
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn save_pbm(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_pbm(std::io::BufWriter::new(file))
    }
}

impl fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryImage {}x{}", self.width, self.height)?;
        for r in 0..self.height {
            let row: String = (0..self.width)
                .map(|c| if self.get(r, c) { '#' } else { '.' })
                .collect();
            writeln!(f, "  {row}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_parse_hash_as_foreground() {
        let img = BinaryImage::from_rows(&["#.", ".#", "##"]);
        assert_eq!((img.width(), img.height()), (2, 3));
        assert!(img.get(0, 0) && !img.get(0, 1) && img.get(2, 1));
        assert_eq!(img.foreground_count(), 4);
    }

    #[test]
    fn luma_threshold_is_half_range() {
        let img = BinaryImage::from_luma(4, 1, &[0, 127, 128, 255]).unwrap();
        assert_eq!(img.pixels(), &[true, true, false, false]);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(BinaryImage::from_pixels(0, 3, vec![]).is_none());
        assert!(BinaryImage::from_pixels(2, 2, vec![true; 3]).is_none());
    }

    #[test]
    fn pbm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = BinaryImage::from_fn(7, 5, |r, c| (r * 3 + c) % 4 == 0);
        let path = dir.path().join("x.pbm");
        img.save_pbm(&path).unwrap();
        assert_eq!(BinaryImage::load(&path).unwrap(), img);
    }

    #[test]
    fn png_grayscale_is_binarized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let raw = image::GrayImage::from_raw(3, 1, vec![10, 200, 90]).unwrap();
        raw.save(&path).unwrap();
        let img = BinaryImage::load(&path).unwrap();
        assert_eq!(img.pixels(), &[true, false, true]);
    }
}

//! Sliding-window gradient-orientation features.
//!
//! An image is cropped to its foreground, rescaled to a fixed height, and
//! differentiated with a `[-1 0 1]` mask in x and y. A window `w` columns
//! wide slides left to right; each window is cut into `h` horizontal cells
//! and every cell contributes a histogram over `bins` orientation bins. The
//! cell histograms, stacked top to bottom, form one frame.

mod cache;

use crate::dataset::BinaryImage;

pub use self::cache::{read_sequence, write_sequence, CacheError, CACHE_MAGIC, CACHE_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeatureError {
    #[error("image has no foreground pixels")]
    EmptyImage,
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(&'static str),
}

/// How a pixel contributes to its orientation bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightMode {
    /// Each pixel with a nonzero gradient adds one.
    Unit,
    /// Each pixel adds its gradient magnitude (HOG-style).
    Magnitude,
}

impl WeightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::Unit => "unit",
            WeightMode::Magnitude => "magnitude",
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit" | "gradient" => Ok(WeightMode::Unit),
            "magnitude" | "hog" => Ok(WeightMode::Magnitude),
            other => Err(format!("unknown weight mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureConfig {
    /// Window width in pixels.
    pub window_width: usize,
    /// Cells per window, stacked vertically.
    pub cells: usize,
    pub bins: usize,
    pub weight_mode: WeightMode,
    /// Columns advanced per frame. `stride == window_width` gives disjoint strips.
    pub stride: usize,
    pub standard_height: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_width: 8,
            cells: 8,
            bins: 5,
            weight_mode: WeightMode::Unit,
            stride: 1,
            standard_height: 64,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.window_width == 0 {
            return Err(FeatureError::InvalidConfig("window width must be >= 1"));
        }
        if self.cells == 0 {
            return Err(FeatureError::InvalidConfig("cell count must be >= 1"));
        }
        if self.bins < 2 {
            return Err(FeatureError::InvalidConfig("bin count must be >= 2"));
        }
        if self.stride == 0 {
            return Err(FeatureError::InvalidConfig("stride must be >= 1"));
        }
        if self.standard_height < self.cells {
            return Err(FeatureError::InvalidConfig(
                "standard height must be >= cell count",
            ));
        }
        Ok(())
    }

    pub fn frame_dim(&self) -> usize {
        self.bins * self.cells
    }

    /// Number of frames produced for a normalized image `width` pixels wide.
    pub fn frame_count(&self, width: usize) -> usize {
        if width >= self.window_width {
            (width - self.window_width) / self.stride + 1
        } else {
            1
        }
    }

    /// Row index → cell index. Cells are `standard_height / cells` rows tall;
    /// the last cell absorbs the remainder.
    #[inline]
    pub fn cell_of_row(&self, row: usize) -> usize {
        let band = self.standard_height / self.cells;
        (row / band).min(self.cells - 1)
    }
}

/// Time-ordered feature frames, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    dim: usize,
    data: Vec<f32>,
    /// Width in pixels of the normalized image the frames came from.
    pub source_width: usize,
}

impl FeatureSequence {
    pub fn new(dim: usize, data: Vec<f32>, source_width: usize) -> Self {
        assert!(dim > 0, "frame dimension must be positive");
        assert_eq!(data.len() % dim, 0, "data length must be a multiple of dim");
        FeatureSequence {
            dim,
            data,
            source_width,
        }
    }

    pub fn from_frames(frames: &[Vec<f32>]) -> Self {
        let dim = frames.first().map_or(1, Vec::len);
        assert!(frames.iter().all(|f| f.len() == dim), "ragged frames");
        let data = frames.iter().flatten().copied().collect();
        Self::new(dim, data, frames.len())
    }

    pub fn from_frames_f64(frames: &[Vec<f64>]) -> Self {
        let f: Vec<Vec<f32>> = frames
            .iter()
            .map(|v| v.iter().map(|&x| x as f32).collect())
            .collect();
        Self::from_frames(&f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Frames `start..end` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> FeatureSequence {
        FeatureSequence::new(
            self.dim,
            self.data[start * self.dim..end * self.dim].to_vec(),
            end - start,
        )
    }
}

/// Minimal bounding box of the foreground.
pub fn crop_to_foreground(image: &BinaryImage) -> Result<BinaryImage, FeatureError> {
    foreground_bounds(image)
        .map(|(top, left, bottom, right)| {
            image.sub_image(top, left, right - left + 1, bottom - top + 1)
        })
        .ok_or(FeatureError::EmptyImage)
}

/// `(top, left, bottom, right)` inclusive bounds of the foreground.
pub fn foreground_bounds(image: &BinaryImage) -> Option<(usize, usize, usize, usize)> {
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for r in 0..image.height() {
        for c in 0..image.width() {
            if image.get(r, c) {
                bounds = Some(match bounds {
                    None => (r, c, r, c),
                    Some((t, l, b, rt)) => (t.min(r), l.min(c), b.max(r), rt.max(c)),
                });
            }
        }
    }
    bounds
}

/// Output width after rescaling an image of `width`×`height` to
/// `standard_height` rows, preserving aspect ratio.
pub fn normalized_width(width: usize, height: usize, standard_height: usize) -> usize {
    // round(width * standard_height / height), at least 1
    let num = 2 * width * standard_height + height;
    (num / (2 * height)).max(1)
}

/// Nearest-neighbour rescale to `standard_height` rows. Each output pixel
/// samples the input pixel whose cell contains the output pixel's centre.
pub fn normalize_height(image: &BinaryImage, standard_height: usize) -> BinaryImage {
    let (w, h) = (image.width(), image.height());
    if h == standard_height {
        return image.clone();
    }
    let out_w = normalized_width(w, h, standard_height);
    let src_rows: Vec<usize> = (0..standard_height)
        .map(|r| ((2 * r + 1) * h / (2 * standard_height)).min(h - 1))
        .collect();
    let src_cols: Vec<usize> = (0..out_w)
        .map(|c| ((2 * c + 1) * w / (2 * out_w)).min(w - 1))
        .collect();
    BinaryImage::from_fn(out_w, standard_height, |r, c| {
        image.get(src_rows[r], src_cols[c])
    })
}

/// Per-pixel central differences with replicate padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<i8>,
    pub gy: Vec<i8>,
}

impl GradientField {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> (i8, i8) {
        let i = row * self.width + col;
        (self.gx[i], self.gy[i])
    }
}

/// `gx = I(r, c+1) − I(r, c−1)`, `gy = I(r+1, c) − I(r−1, c)` with
/// foreground = 1 and borders replicated.
pub fn gradient_field(image: &BinaryImage) -> GradientField {
    let (w, h) = (image.width(), image.height());
    let px = |r: usize, c: usize| image.get(r, c) as i8;
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for r in 0..h {
        let (up, down) = (r.saturating_sub(1), (r + 1).min(h - 1));
        for c in 0..w {
            let (left, right) = (c.saturating_sub(1), (c + 1).min(w - 1));
            gx.push(px(r, right) - px(r, left));
            gy.push(px(down, c) - px(up, c));
        }
    }
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
    }
}

/// Orientation bin of a gradient, or `None` for a zero gradient.
///
/// The angle `atan2(gy, gx)` is mapped to `[0°, 360°)` and bin `k` covers
/// `[k·360/bins, (k+1)·360/bins)`.
pub fn orientation_bin(gx: i32, gy: i32, bins: usize) -> Option<usize> {
    if gx == 0 && gy == 0 {
        return None;
    }
    let mut theta = (gy as f64).atan2(gx as f64).to_degrees();
    if theta < 0.0 {
        theta += 360.0;
    }
    let width = 360.0 / bins as f64;
    Some(((theta / width).floor() as usize).min(bins - 1))
}

/// Runs crop → height normalization → gradients → windowed cell histograms.
pub fn extract_features(
    image: &BinaryImage,
    cfg: &FeatureConfig,
) -> Result<FeatureSequence, FeatureError> {
    cfg.validate()?;
    let cropped = crop_to_foreground(image)?;
    let norm = normalize_height(&cropped, cfg.standard_height);
    Ok(histogram_frames(&gradient_field(&norm), cfg))
}

/// Windowed histograms over a precomputed gradient field whose height is
/// `cfg.standard_height`.
pub fn histogram_frames(field: &GradientField, cfg: &FeatureConfig) -> FeatureSequence {
    let (w, h) = (field.width, field.height);
    let bins = cfg.bins;
    let dim = cfg.frame_dim();

    // Gradient components are in {-1, 0, 1}: look the bin up once per pair.
    let mut bin_of = [[None; 3]; 3];
    for (i, gx) in (-1..=1).enumerate() {
        for (j, gy) in (-1..=1).enumerate() {
            bin_of[i][j] = orientation_bin(gx, gy, bins);
        }
    }

    // Per column: counts of axis-aligned (|g| = 1) and diagonal (|g| = √2)
    // contributions per (cell, bin). Integer counts make window sums exact.
    let mut axis = vec![0u32; w * dim];
    let mut diag = vec![0u32; w * dim];
    for r in 0..h {
        let cell = cfg.cell_of_row(r);
        for c in 0..w {
            let (gx, gy) = field.at(r, c);
            if let Some(b) = bin_of[(gx + 1) as usize][(gy + 1) as usize] {
                let slot = c * dim + cell * bins + b;
                if gx != 0 && gy != 0 {
                    diag[slot] += 1;
                } else {
                    axis[slot] += 1;
                }
            }
        }
    }

    let n_frames = cfg.frame_count(w);
    let mut data = Vec::with_capacity(n_frames * dim);
    let mut win_axis = vec![0u32; dim];
    let mut win_diag = vec![0u32; dim];
    for k in 0..n_frames {
        win_axis.iter_mut().for_each(|v| *v = 0);
        win_diag.iter_mut().for_each(|v| *v = 0);
        let start = k * cfg.stride;
        let end = (start + cfg.window_width).min(w);
        for c in start..end {
            for i in 0..dim {
                win_axis[i] += axis[c * dim + i];
                win_diag[i] += diag[c * dim + i];
            }
        }
        for i in 0..dim {
            let v = match cfg.weight_mode {
                WeightMode::Unit => (win_axis[i] + win_diag[i]) as f64,
                WeightMode::Magnitude => {
                    win_axis[i] as f64 + win_diag[i] as f64 * std::f64::consts::SQRT_2
                }
            };
            data.push(v as f32);
        }
    }
    FeatureSequence::new(dim, data, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_all_background_is_empty() {
        assert_eq!(
            crop_to_foreground(&BinaryImage::blank(10, 10)),
            Err(FeatureError::EmptyImage)
        );
    }

    #[test]
    fn crop_single_pixel() {
        let mut img = BinaryImage::blank(9, 6);
        img.set(4, 7, true);
        let out = crop_to_foreground(&img).unwrap();
        assert_eq!((out.width(), out.height()), (1, 1));
        assert!(out.get(0, 0));
    }

    #[test]
    fn crop_touching_borders_is_identity() {
        let img = BinaryImage::from_rows(&["#..", "...", "..#"]);
        assert_eq!(crop_to_foreground(&img).unwrap(), img);
    }

    #[test]
    fn normalize_identity_and_aspect() {
        let img = BinaryImage::from_fn(13, 64, |r, c| (r * c) % 5 == 1);
        assert_eq!(normalize_height(&img, 64), img);
        let square = BinaryImage::from_fn(128, 128, |r, c| r > c);
        let out = normalize_height(&square, 64);
        assert_eq!((out.width(), out.height()), (64, 64));
        let thin = BinaryImage::from_fn(1, 200, |_, _| true);
        assert_eq!(normalize_height(&thin, 64).width(), 1);
    }

    #[test]
    fn gradient_constant_field_is_zero() {
        let img = BinaryImage::from_fn(6, 5, |_, _| true);
        let g = gradient_field(&img);
        assert!(g.gx.iter().chain(&g.gy).all(|&v| v == 0));
    }

    #[test]
    fn gradient_of_vertical_bar() {
        // bar occupies columns 3..6 of a 9-wide image
        let img = BinaryImage::from_fn(9, 4, |_, c| (3..6).contains(&c));
        let g = gradient_field(&img);
        let row: Vec<i8> = (0..9).map(|c| g.at(1, c).0).collect();
        assert_eq!(row, vec![0, 0, 1, 1, 0, -1, -1, 0, 0]);
        assert!(g.gy.iter().all(|&v| v == 0));
    }

    #[test]
    fn gradient_of_single_pixel() {
        let mut img = BinaryImage::blank(5, 5);
        img.set(2, 2, true);
        let g = gradient_field(&img);
        for r in 0..5 {
            for c in 0..5 {
                let expected = match (r, c) {
                    (2, 1) => (1, 0),
                    (2, 3) => (-1, 0),
                    (1, 2) => (0, 1),
                    (3, 2) => (0, -1),
                    _ => (0, 0),
                };
                assert_eq!(g.at(r, c), expected, "at ({r},{c})");
            }
        }
    }

    #[test]
    fn orientation_bins_axis_cases() {
        assert_eq!(orientation_bin(1, 0, 5), Some(0));
        assert_eq!(orientation_bin(0, 1, 5), Some(1));
        assert_eq!(orientation_bin(-1, 0, 5), Some(2));
        assert_eq!(orientation_bin(0, -1, 5), Some(3));
        assert_eq!(orientation_bin(1, -1, 5), Some(4));
        assert_eq!(orientation_bin(0, 0, 5), None);
        // 90° sits exactly on the 4-bin edge and belongs to the higher bin
        assert_eq!(orientation_bin(0, 1, 4), Some(1));
    }

    #[test]
    fn frame_dimension_and_count() {
        let img = BinaryImage::from_fn(30, 40, |r, c| (r / 3 + c / 4) % 2 == 0);
        let cfg = FeatureConfig::default();
        let seq = extract_features(&img, &cfg).unwrap();
        assert_eq!(seq.dim(), 40);
        let w = normalized_width(30, 40, 64);
        assert_eq!(seq.len(), w - 8 + 1);
    }

    #[test]
    fn all_foreground_gives_zero_frames() {
        let img = BinaryImage::from_fn(20, 20, |_, _| true);
        let seq = extract_features(&img, &FeatureConfig::default()).unwrap();
        assert!(seq.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn narrow_image_yields_one_frame() {
        let img = BinaryImage::from_fn(2, 64, |_, _| true);
        let seq = extract_features(&img, &FeatureConfig::default()).unwrap();
        assert_eq!(seq.len(), 1);
    }

    #[test]
    fn disjoint_strips() {
        let img = BinaryImage::from_fn(20, 64, |r, c| (r + c) % 7 == 0);
        let cfg = FeatureConfig {
            stride: 8,
            ..FeatureConfig::default()
        };
        assert_eq!(extract_features(&img, &cfg).unwrap().len(), 2);
    }

    #[test]
    fn invalid_configs() {
        let base = FeatureConfig::default();
        for cfg in [
            FeatureConfig {
                window_width: 0,
                ..base
            },
            FeatureConfig { cells: 0, ..base },
            FeatureConfig { bins: 1, ..base },
            FeatureConfig { stride: 0, ..base },
            FeatureConfig {
                standard_height: 4,
                ..base
            },
        ] {
            assert!(matches!(
                cfg.validate(),
                Err(FeatureError::InvalidConfig(_))
            ));
        }
    }
}

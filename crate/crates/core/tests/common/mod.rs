//! Shared helpers for the integration tests: random models and a per-pixel
//! feature reference written without any of the library's shortcuts.

#![allow(dead_code)]

use hwr_core::dataset::BinaryImage;
use hwr_core::features::{FeatureConfig, FeatureSequence, WeightMode};
use hwr_core::hmm::{ClassHmm, DiagonalGaussian, GaussianMixture, HmmState};
use rand::Rng;

pub fn random_class(
    rng: &mut impl Rng,
    id: &str,
    n_states: usize,
    dim: usize,
    g: usize,
) -> ClassHmm {
    let states = (0..n_states)
        .map(|_| {
            let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            // force an exact unit sum
            let head: f64 = weights[..g - 1].iter().sum();
            weights[g - 1] = 1.0 - head;
            let comps = (0..g)
                .map(|_| {
                    DiagonalGaussian::new(
                        (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                        (0..dim).map(|_| rng.random_range(0.3..2.0)).collect(),
                    )
                })
                .collect();
            let mix = GaussianMixture::new(weights, comps).expect("weights sum to one");
            HmmState::new(mix, rng.random_range(0.05..0.95)).unwrap()
        })
        .collect();
    ClassHmm::new(id, states).unwrap()
}

pub fn random_sequence(rng: &mut impl Rng, dim: usize, len: usize) -> FeatureSequence {
    let data = (0..dim * len)
        .map(|_| rng.random_range(-3.0f32..3.0))
        .collect();
    FeatureSequence::new(dim, data, len)
}

pub fn random_bitmap(rng: &mut impl Rng, max_w: usize, max_h: usize) -> BinaryImage {
    let w = rng.random_range(1..=max_w);
    let h = rng.random_range(1..=max_h);
    let density = rng.random_range(0.1..0.9);
    let bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(density)).collect();
    let mut img = BinaryImage::from_pixels(w, h, bits).unwrap();
    if img.foreground_count() == 0 {
        img.set(h / 2, w / 2, true);
    }
    img
}

/// Features computed pixel by pixel: bounding box by scanning, nearest
/// neighbour by centre sampling, gradients with explicit clamping, angle
/// from `atan2`, and window sums taken directly over the window's pixels.
pub fn reference_features(image: &BinaryImage, cfg: &FeatureConfig) -> Vec<Vec<f32>> {
    let mut top = usize::MAX;
    let mut bottom = 0;
    let mut left = usize::MAX;
    let mut right = 0;
    for r in 0..image.height() {
        for c in 0..image.width() {
            if image.get(r, c) {
                top = top.min(r);
                bottom = bottom.max(r);
                left = left.min(c);
                right = right.max(c);
            }
        }
    }
    let ch = bottom - top + 1;
    let cw = right - left + 1;
    let hh = cfg.standard_height;
    let ww = ((cw as f64 * hh as f64 / ch as f64).round() as usize).max(1);
    // output pixel centre (r + 0.5) maps to input coordinate (r + 0.5)·ch/hh
    let sample = |r: usize, c: usize| -> f64 {
        let sr = (((r as f64 + 0.5) * ch as f64 / hh as f64).floor() as usize).min(ch - 1);
        let sc = (((c as f64 + 0.5) * cw as f64 / ww as f64).floor() as usize).min(cw - 1);
        if image.get(top + sr, left + sc) {
            1.0
        } else {
            0.0
        }
    };
    let at = |r: i64, c: i64| {
        sample(
            r.clamp(0, hh as i64 - 1) as usize,
            c.clamp(0, ww as i64 - 1) as usize,
        )
    };

    let band = hh / cfg.cells;
    let n_frames = if ww >= cfg.window_width {
        (ww - cfg.window_width) / cfg.stride + 1
    } else {
        1
    };
    let mut frames = Vec::new();
    for k in 0..n_frames {
        let mut hist = vec![0.0f64; cfg.cells * cfg.bins];
        let start = k * cfg.stride;
        for c in start..(start + cfg.window_width).min(ww) {
            for r in 0..hh {
                let (ri, ci) = (r as i64, c as i64);
                let gx = at(ri, ci + 1) - at(ri, ci - 1);
                let gy = at(ri + 1, ci) - at(ri - 1, ci);
                if gx == 0.0 && gy == 0.0 {
                    continue;
                }
                let mut deg = gy.atan2(gx).to_degrees();
                if deg < 0.0 {
                    deg += 360.0;
                }
                let bin = ((deg / (360.0 / cfg.bins as f64)).floor() as usize).min(cfg.bins - 1);
                let cell = (r / band).min(cfg.cells - 1);
                hist[cell * cfg.bins + bin] += match cfg.weight_mode {
                    WeightMode::Unit => 1.0,
                    WeightMode::Magnitude => (gx * gx + gy * gy).sqrt(),
                };
            }
        }
        frames.push(hist.into_iter().map(|v| v as f32).collect());
    }
    frames
}

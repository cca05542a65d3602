//! Independent references and synthetic data.
//!
//! Nothing here shares code with the dynamic programs in [`crate::hmm`]:
//! path scores are summed explicitly, densities are evaluated in linear
//! space, and the synthetic glyphs carry their true boundaries by
//! construction.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{
    write_dataset, BinaryImage, ClassCategory, Dataset, DatasetError, DecompositionSchema, Sample,
};
use crate::features::{FeatureConfig, FeatureSequence};
use crate::hmm::{CompositeHmm, GaussianMixture};

/// Largest number of paths [`enumerate_paths`] will visit.
pub const MAX_PATHS: u128 = 1_000_000;
/// Sampling stops after this many frames even if the exit was never taken.
pub const MAX_SAMPLED_FRAMES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("{0} legal paths exceed the enumeration limit")]
    TooLarge(u128),
    #[error("frame dimension mismatch")]
    DimensionMismatch,
}

/// Number of monotone paths through `n_states` states in `n_frames` frames.
pub fn path_count(n_states: usize, n_frames: usize) -> u128 {
    if n_states == 0 || n_frames < n_states {
        return 0;
    }
    // C(T - 1, N - 1)
    let (n, k) = ((n_frames - 1) as u128, (n_states - 1) as u128);
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Linear-space mixture density, then its logarithm.
pub fn naive_log_density(mixture: &GaussianMixture, frame: &[f32]) -> f64 {
    let mut total = 0.0;
    for (w, c) in mixture.weights().iter().zip(mixture.components()) {
        let mut p = *w;
        for ((&x, m), v) in frame.iter().zip(c.mean()).zip(c.variance()) {
            let d = x as f64 - m;
            p *= (-d * d / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        }
        total += p;
    }
    total.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnumeration {
    /// `ln Σ_paths p(path, O)`.
    pub log_sum: f64,
    /// `max_paths ln p(path, O)`.
    pub log_max: f64,
    /// Lexicographically smallest path attaining `log_max`.
    pub argmax: Vec<usize>,
    pub n_paths: u128,
}

/// Scores every legal state path explicitly.
pub fn enumerate_paths(
    model: &CompositeHmm<'_>,
    obs: &FeatureSequence,
) -> Result<PathEnumeration, OracleError> {
    if obs.dim() != model.dim() {
        return Err(OracleError::DimensionMismatch);
    }
    let states: Vec<_> = model.parts().iter().flat_map(|p| p.states.iter()).collect();
    let (n, t_len) = (states.len(), obs.len());
    let count = path_count(n, t_len);
    if count > MAX_PATHS {
        return Err(OracleError::TooLarge(count));
    }
    let density: Vec<Vec<f64>> = (0..t_len)
        .map(|t| {
            states
                .iter()
                .map(|s| naive_log_density(&s.mixture, obs.frame(t)))
                .collect()
        })
        .collect();

    let mut scores = Vec::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = Vec::with_capacity(t_len);
    // Depth-first, trying "stay" before "advance", visits paths in
    // lexicographic order.
    fn walk(
        t: usize,
        path: &mut Vec<usize>,
        n: usize,
        t_len: usize,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if t == t_len {
            if path.last() == Some(&(n - 1)) {
                visit(path);
            }
            return;
        }
        let options: Vec<usize> = match path.last() {
            None => vec![0],
            Some(&j) if j + 1 < n => vec![j, j + 1],
            Some(&j) => vec![j],
        };
        for j in options {
            // remaining frames must cover the remaining states
            if n - 1 - j > t_len - 1 - t {
                continue;
            }
            path.push(j);
            walk(t + 1, path, n, t_len, visit);
            path.pop();
        }
    }
    let mut visit = |p: &[usize]| {
        let mut score = 0.0;
        for (t, &j) in p.iter().enumerate() {
            score += density[t][j];
            if t + 1 < p.len() {
                score += if p[t + 1] == j {
                    states[j].self_loop().ln()
                } else {
                    states[j].next().ln()
                };
            }
        }
        score += states[n - 1].next().ln();
        scores.push(score);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, p.to_vec()));
        }
    };
    if count > 0 {
        walk(0, &mut path, n, t_len, &mut visit);
    }
    let (log_max, argmax) = best.unwrap_or((f64::NEG_INFINITY, Vec::new()));
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = if max == f64::NEG_INFINITY {
        max
    } else {
        max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
    };
    Ok(PathEnumeration {
        log_sum,
        log_max,
        argmax,
        n_paths: count,
    })
}

/// Per-frame state posteriors by explicit path summation: `out[t][j]`.
pub fn enumerate_posteriors(
    model: &CompositeHmm<'_>,
    obs: &FeatureSequence,
) -> Result<Vec<Vec<f64>>, OracleError> {
    let states: Vec<_> = model.parts().iter().flat_map(|p| p.states.iter()).collect();
    let n = states.len();
    let total = enumerate_paths(model, obs)?;
    let mut post = vec![vec![0.0; n]; obs.len()];
    // Re-enumerate with a simple odometer over advance positions.
    let t_len = obs.len();
    let mut advance_at: Vec<usize> = (1..n).collect();
    if n > t_len {
        return Ok(post);
    }
    loop {
        let mut path = Vec::with_capacity(t_len);
        let mut j = 0;
        let mut k = 0;
        for t in 0..t_len {
            if k < advance_at.len() && advance_at[k] == t {
                j += 1;
                k += 1;
            }
            path.push(j);
        }
        let mut score = 0.0;
        for t in 0..t_len {
            score += naive_log_density(&states[path[t]].mixture, obs.frame(t));
            if t + 1 < t_len {
                score += if path[t + 1] == path[t] {
                    states[path[t]].self_loop().ln()
                } else {
                    states[path[t]].next().ln()
                };
            }
        }
        score += states[n - 1].next().ln();
        let w = (score - total.log_sum).exp();
        for (t, &s) in path.iter().enumerate() {
            post[t][s] += w;
        }
        // next combination of n-1 advance frames from 1..t_len
        let m = advance_at.len();
        let mut i = m;
        loop {
            if i == 0 {
                return Ok(post);
            }
            i -= 1;
            if advance_at[i] < t_len - (m - i) {
                advance_at[i] += 1;
                for l in i + 1..m {
                    advance_at[l] = advance_at[l - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Ancestral sample: emit from the current state, then stay with the
/// self-loop probability or advance; leaving the last state ends the
/// sequence. Returns the frames and the 0-based flat state of each frame.
pub fn sample_sequence(model: &CompositeHmm<'_>, seed: u64) -> (FeatureSequence, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<_> = model.parts().iter().flat_map(|p| p.states.iter()).collect();
    let dim = model.dim();
    let mut data = Vec::new();
    let mut path = Vec::new();
    let mut j = 0;
    while path.len() < MAX_SAMPLED_FRAMES {
        let mix = &states[j].mixture;
        let g = if mix.len() == 1 {
            0
        } else {
            WeightedIndex::new(mix.weights())
                .expect("valid weights")
                .sample(&mut rng)
        };
        let comp = &mix.components()[g];
        for d in 0..dim {
            let normal = Normal::new(comp.mean()[d], comp.variance()[d].sqrt()).expect("finite");
            data.push(normal.sample(&mut rng) as f32);
        }
        path.push(j);
        if rng.random::<f64>() >= states[j].self_loop() {
            j += 1;
            if j == states.len() {
                break;
            }
        }
    }
    let len = path.len();
    (FeatureSequence::new(dim, data, len), path)
}

/// Stroke primitives, 32 pixels tall with ink touching the left and right
/// edges. Each has a different mix of stroke orientations so that no pair
/// is a concatenation of others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Primitive {
    /// Solid full-height bar.
    VerticalBar,
    /// Thin bar at mid-height.
    HorizontalBar,
    /// Square outline.
    Ring,
    /// Left stroke with arms at the top, middle and bottom.
    Comb,
    /// Diagonal stroke rising to the right.
    Slash,
}

pub const PRIMITIVE_HEIGHT: usize = 32;
const STROKE: usize = 4;

impl Primitive {
    pub const ALL: [Primitive; 5] = [
        Primitive::VerticalBar,
        Primitive::HorizontalBar,
        Primitive::Ring,
        Primitive::Comb,
        Primitive::Slash,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Primitive::VerticalBar => "vbar",
            Primitive::HorizontalBar => "hbar",
            Primitive::Ring => "ring",
            Primitive::Comb => "comb",
            Primitive::Slash => "slash",
        }
    }

    pub fn width(self) -> usize {
        match self {
            Primitive::VerticalBar => 8,
            Primitive::Comb => 20,
            Primitive::HorizontalBar | Primitive::Ring | Primitive::Slash => 24,
        }
    }

    pub fn stamp(self) -> Stamp {
        let (w, h) = (self.width(), PRIMITIVE_HEIGHT);
        let left = |c: usize| c < STROKE;
        let right = |c: usize| c >= w - STROKE;
        let top = |r: usize| r < STROKE;
        let bottom = |r: usize| r >= h - STROKE;
        let middle = |r: usize| (h / 2 - STROKE / 2..h / 2 + STROKE / 2).contains(&r);
        let image = match self {
            Primitive::VerticalBar => BinaryImage::from_fn(w, h, |_, _| true),
            Primitive::HorizontalBar => BinaryImage::from_fn(w, h, |r, _| middle(r)),
            Primitive::Ring => {
                BinaryImage::from_fn(w, h, |r, c| left(c) || right(c) || top(r) || bottom(r))
            }
            Primitive::Comb => {
                BinaryImage::from_fn(w, h, |r, c| left(c) || top(r) || middle(r) || bottom(r))
            }
            Primitive::Slash => BinaryImage::from_fn(w, h, |r, c| {
                // centre line from (h-1, 0) to (0, w-1)
                let centre = (h - 1 - r) as f64 * (w - STROKE) as f64 / (h - 1) as f64;
                let c = c as f64;
                c >= centre && c < centre + STROKE as f64
            }),
        };
        Stamp {
            id: self.id().to_string(),
            image,
        }
    }
}

/// A named bitmap pasted into synthetic glyphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub id: String,
    pub image: BinaryImage,
}

#[derive(Debug, Clone)]
pub struct SyntheticGlyphSpec {
    pub stamps: Vec<Stamp>,
    /// Stamp ids, left to right.
    pub composition: Vec<String>,
    /// Horizontal gap between consecutive stamps; negative values overlap.
    pub jitter: RangeInclusive<i32>,
    pub seed: u64,
}

/// Pastes the composition's stamps left to right and returns the glyph with
/// the column at which each stamp after the first begins.
pub fn compose_glyph(spec: &SyntheticGlyphSpec) -> (BinaryImage, Vec<usize>) {
    let by_id: BTreeMap<&str, &Stamp> = spec.stamps.iter().map(|s| (s.id.as_str(), s)).collect();
    let parts: Vec<&Stamp> = spec
        .composition
        .iter()
        .map(|id| {
            *by_id
                .get(id.as_str())
                .unwrap_or_else(|| panic!("unknown stamp {id}"))
        })
        .collect();
    assert!(!parts.is_empty(), "empty composition");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut offsets = vec![0i64];
    for k in 1..parts.len() {
        let gap = rng.random_range(spec.jitter.clone()) as i64;
        let prev = offsets[k - 1] + parts[k - 1].image.width() as i64 + gap;
        offsets.push(prev.max(0));
    }
    let width = parts
        .iter()
        .zip(&offsets)
        .map(|(p, &o)| o as usize + p.image.width())
        .max()
        .unwrap()
        .max(1);
    let height = parts.iter().map(|p| p.image.height()).max().unwrap();
    let mut img = BinaryImage::blank(width, height);
    for (p, &o) in parts.iter().zip(&offsets) {
        for r in 0..p.image.height() {
            for c in 0..p.image.width() {
                if p.image.get(r, c) {
                    img.set(r, o as usize + c, true);
                }
            }
        }
    }
    let boundaries = offsets[1..].iter().map(|&o| o as usize).collect();
    (img, boundaries)
}

/// Frame index whose window is centred on a pixel boundary of the original
/// (uncropped) glyph, given the glyph's foreground bounding box.
pub fn truth_frame_boundary(
    pixel_boundary: usize,
    crop_left: usize,
    crop_height: usize,
    cfg: &FeatureConfig,
) -> usize {
    let scale = cfg.standard_height as f64 / crop_height as f64;
    let normalized = (pixel_boundary as f64 - crop_left as f64) * scale;
    let centre_offset = cfg.window_width as f64 / 2.0;
    ((normalized - centre_offset) / cfg.stride as f64)
        .round()
        .max(0.0) as usize
}

/// Synthetic corpus in the dataset layout: three base shapes that may carry
/// one of two right-joining modifier shapes, giving 3 + 3·2 characters.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub schema: DecompositionSchema,
    /// `(character_id, writer_index) → boundary columns`.
    pub truth: BTreeMap<(String, usize), Vec<usize>>,
}

pub const SYNTHETIC_BASES: [Primitive; 3] =
    [Primitive::VerticalBar, Primitive::Comb, Primitive::Ring];
pub const SYNTHETIC_MODIFIERS: [Primitive; 2] = [Primitive::HorizontalBar, Primitive::Slash];

pub fn synthetic_corpus(
    samples_per_character: usize,
    jitter: RangeInclusive<i32>,
    seed: u64,
) -> SyntheticCorpus {
    let stamps: Vec<Stamp> = Primitive::ALL.iter().map(|p| p.stamp()).collect();
    let mut schema_text = String::new();
    for b in SYNTHETIC_BASES {
        schema_text.push_str(&format!("C\t{}\t{}\n", b.id(), ClassCategory::Base));
    }
    for m in SYNTHETIC_MODIFIERS {
        schema_text.push_str(&format!("C\t{}\t{}\n", m.id(), ClassCategory::Modifier));
    }
    let mut characters: Vec<Vec<String>> = Vec::new();
    for b in SYNTHETIC_BASES {
        characters.push(vec![b.id().to_string()]);
        for m in SYNTHETIC_MODIFIERS {
            characters.push(vec![b.id().to_string(), m.id().to_string()]);
        }
    }
    let mut groups = Vec::new();
    let mut truth = BTreeMap::new();
    for (ci, comp) in characters.iter().enumerate() {
        let char_id = comp.join("+");
        schema_text.push_str(&format!("E\t{char_id}\t{}\n", comp.join(",")));
        let samples = (0..samples_per_character)
            .map(|i| {
                let spec = SyntheticGlyphSpec {
                    stamps: stamps.clone(),
                    composition: comp.clone(),
                    jitter: jitter.clone(),
                    seed: seed
                        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                        .wrapping_add((ci * 10_007 + i) as u64),
                };
                let (image, bounds) = compose_glyph(&spec);
                truth.insert((char_id.clone(), i), bounds);
                Sample {
                    image,
                    character_id: char_id.clone(),
                    writer_index: i,
                }
            })
            .collect();
        groups.push((char_id, samples));
    }
    SyntheticCorpus {
        dataset: Dataset {
            samples_per_character,
            groups,
        },
        schema: DecompositionSchema::parse(&schema_text).expect("synthetic schema is well formed"),
        truth,
    }
}

/// Writes the corpus images and manifest, `schema.tsv`, and `truth.tsv`
/// (`character_id<TAB>writer_index<TAB>boundary columns`).
pub fn write_synthetic_corpus(root: &Path, corpus: &SyntheticCorpus) -> Result<(), DatasetError> {
    std::fs::create_dir_all(root).map_err(|e| DatasetError::Io {
        path: root.to_path_buf(),
        source: e,
    })?;
    write_dataset(root, &corpus.dataset)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e| DatasetError::Io { path, source: e }
    };
    let schema_path = root.join("schema.tsv");
    std::fs::write(&schema_path, corpus.schema.to_tsv()).map_err(io(&schema_path))?;
    let truth_path = root.join("truth.tsv");
    let mut f = std::fs::File::create(&truth_path).map_err(io(&truth_path))?;
    for ((id, idx), bounds) in &corpus.truth {
        let cols: Vec<String> = bounds.iter().map(usize::to_string).collect();
        writeln!(f, "{id}\t{idx}\t{}", cols.join(",")).map_err(io(&truth_path))?;
    }
    Ok(())
}

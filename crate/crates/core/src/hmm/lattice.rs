//! Log-space dynamic programs over the left-to-right lattice.
//!
//! Emitting states are numbered `0..N` across all parts of a composite. A
//! path starts in state 0 at frame 0, at each later frame either stays or
//! advances by one, ends in state `N - 1` at frame `T - 1`, and finally
//! leaves through the exit junction. Its score is the sum of the log
//! transition probabilities (exit included) and the log emission densities.

use super::gmm::log_add;
use super::model::CompositeHmm;
use super::HmmError;
use crate::features::FeatureSequence;

/// Transition structure and emission scores for one (model, sequence) pair.
#[derive(Debug, Clone)]
pub struct Lattice {
    n_states: usize,
    n_frames: usize,
    log_self: Vec<f64>,
    log_next: Vec<f64>,
    /// Owning part of each flat state.
    part_of: Vec<usize>,
    /// `emission[t * n_states + j]`.
    emission: Vec<f64>,
}

impl Lattice {
    pub fn new(model: &CompositeHmm<'_>, obs: &FeatureSequence) -> Result<Self, HmmError> {
        check_dims(model, obs)?;
        let n = model.n_emitting();
        let t_len = obs.len();
        let states: Vec<_> = model.states().collect();
        let mut emission = vec![0.0; t_len * n];
        for t in 0..t_len {
            let frame = obs.frame(t);
            for (j, s) in states.iter().enumerate() {
                emission[t * n + j] = s.mixture.log_density_unchecked(frame);
            }
        }
        Ok(Self::from_emissions(model, t_len, emission))
    }

    /// Builds a lattice from per-part emission matrices computed elsewhere.
    /// `per_part[p]` holds `T × S_p` scores, row-major by frame.
    pub fn from_part_emissions(
        model: &CompositeHmm<'_>,
        n_frames: usize,
        per_part: &[&[f64]],
    ) -> Self {
        let n = model.n_emitting();
        let mut emission = Vec::with_capacity(n_frames * n);
        for t in 0..n_frames {
            for (p, part) in model.parts().iter().enumerate() {
                let s = part.n_states();
                emission.extend_from_slice(&per_part[p][t * s..(t + 1) * s]);
            }
        }
        Self::from_emissions(model, n_frames, emission)
    }

    fn from_emissions(model: &CompositeHmm<'_>, n_frames: usize, emission: Vec<f64>) -> Self {
        let mut log_self = Vec::new();
        let mut log_next = Vec::new();
        let mut part_of = Vec::new();
        for (p, part) in model.parts().iter().enumerate() {
            for s in &part.states {
                log_self.push(s.self_loop().ln());
                log_next.push(s.next().ln());
                part_of.push(p);
            }
        }
        Lattice {
            n_states: log_self.len(),
            n_frames,
            log_self,
            log_next,
            part_of,
            emission,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[inline]
    pub fn emission(&self, t: usize, j: usize) -> f64 {
        self.emission[t * self.n_states + j]
    }

    pub fn log_self(&self, j: usize) -> f64 {
        self.log_self[j]
    }

    pub fn log_next(&self, j: usize) -> f64 {
        self.log_next[j]
    }

    /// Forward variables `alpha[t * N + j]` and the total log-likelihood.
    pub fn forward(&self) -> (Vec<f64>, f64) {
        let (n, t_len) = (self.n_states, self.n_frames);
        let mut alpha = vec![f64::NEG_INFINITY; t_len * n];
        if t_len < n {
            return (alpha, f64::NEG_INFINITY);
        }
        alpha[0] = self.emission(0, 0);
        for t in 1..t_len {
            let (prev, cur) = alpha.split_at_mut(t * n);
            let prev = &prev[(t - 1) * n..];
            // state j is reachable at frame t iff j <= t and the remaining
            // frames can still cover the remaining states
            let lo = (n + t).saturating_sub(t_len);
            let hi = t.min(n - 1);
            for j in lo..=hi {
                let stay = prev[j] + self.log_self[j];
                let adv = if j > 0 {
                    prev[j - 1] + self.log_next[j - 1]
                } else {
                    f64::NEG_INFINITY
                };
                cur[j] = log_add(stay, adv) + self.emission(t, j);
            }
        }
        let total = alpha[(t_len - 1) * n + n - 1] + self.log_next[n - 1];
        (alpha, total)
    }

    /// Backward variables `beta[t * N + j]` and the total log-likelihood.
    pub fn backward(&self) -> (Vec<f64>, f64) {
        let (n, t_len) = (self.n_states, self.n_frames);
        let mut beta = vec![f64::NEG_INFINITY; t_len * n];
        if t_len < n {
            return (beta, f64::NEG_INFINITY);
        }
        beta[(t_len - 1) * n + n - 1] = self.log_next[n - 1];
        for t in (0..t_len - 1).rev() {
            let (cur, next) = beta.split_at_mut((t + 1) * n);
            let cur = &mut cur[t * n..];
            let lo = (n + t).saturating_sub(t_len);
            let hi = t.min(n - 1);
            for j in lo..=hi {
                let stay = self.log_self[j] + self.emission(t + 1, j) + next[j];
                let adv = if j + 1 < n {
                    self.log_next[j] + self.emission(t + 1, j + 1) + next[j + 1]
                } else {
                    f64::NEG_INFINITY
                };
                cur[j] = log_add(stay, adv);
            }
        }
        let total = self.emission(0, 0) + beta[0];
        (beta, total)
    }

    /// Best path. On exact score ties the backtrace prefers the lower
    /// predecessor state, which yields the lexicographically smallest of the
    /// optimal state sequences.
    pub fn viterbi(&self) -> Result<Alignment, HmmError> {
        let (n, t_len) = (self.n_states, self.n_frames);
        if t_len < n {
            return Err(HmmError::ImpossiblePath {
                frames: t_len,
                states: n,
            });
        }
        let mut delta = vec![f64::NEG_INFINITY; t_len * n];
        let mut advanced = vec![false; t_len * n];
        delta[0] = self.emission(0, 0);
        for t in 1..t_len {
            let lo = (n + t).saturating_sub(t_len);
            let hi = t.min(n - 1);
            for j in lo..=hi {
                let stay = delta[(t - 1) * n + j] + self.log_self[j];
                let adv = if j > 0 {
                    delta[(t - 1) * n + j - 1] + self.log_next[j - 1]
                } else {
                    f64::NEG_INFINITY
                };
                let (best, took_adv) = if adv >= stay && adv > f64::NEG_INFINITY {
                    (adv, true)
                } else {
                    (stay, false)
                };
                delta[t * n + j] = best + self.emission(t, j);
                advanced[t * n + j] = took_adv;
            }
        }
        let score = delta[(t_len - 1) * n + n - 1] + self.log_next[n - 1];
        if score == f64::NEG_INFINITY || score.is_nan() {
            return Err(HmmError::ImpossiblePath {
                frames: t_len,
                states: n,
            });
        }
        let mut states = vec![0usize; t_len];
        let mut j = n - 1;
        for t in (0..t_len).rev() {
            states[t] = j;
            if t > 0 && advanced[t * n + j] {
                j -= 1;
            }
        }
        let boundaries = (1..t_len)
            .filter(|&t| self.part_of[states[t]] != self.part_of[states[t - 1]])
            .collect();
        Ok(Alignment {
            log_likelihood: score,
            states,
            boundaries,
        })
    }
}

/// Result of Viterbi decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Best single-path log-likelihood λ.
    pub log_likelihood: f64,
    /// Flat emitting-state index (0-based) for every frame.
    pub states: Vec<usize>,
    /// For each junction between consecutive parts, the index of the first
    /// frame assigned to the later part. Strictly increasing, in `1..T`.
    pub boundaries: Vec<usize>,
}

fn check_dims(model: &CompositeHmm<'_>, obs: &FeatureSequence) -> Result<(), HmmError> {
    if obs.is_empty() {
        return Err(HmmError::EmptySequence);
    }
    if obs.dim() != model.dim() {
        return Err(HmmError::DimensionMismatch {
            expected: model.dim(),
            found: obs.dim(),
        });
    }
    Ok(())
}

/// Total log-likelihood `ln p(O | model)`, or `-inf` when no legal path exists.
pub fn forward(model: &CompositeHmm<'_>, obs: &FeatureSequence) -> Result<f64, HmmError> {
    Ok(Lattice::new(model, obs)?.forward().1)
}

/// Backward variables (`T × N`, row-major) and the total log-likelihood.
pub fn backward(
    model: &CompositeHmm<'_>,
    obs: &FeatureSequence,
) -> Result<(Vec<f64>, f64), HmmError> {
    Ok(Lattice::new(model, obs)?.backward())
}

pub fn viterbi(model: &CompositeHmm<'_>, obs: &FeatureSequence) -> Result<Alignment, HmmError> {
    Lattice::new(model, obs)?.viterbi()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::gmm::{DiagonalGaussian, GaussianMixture};
    use crate::hmm::model::{ClassHmm, HmmState};
    use approx::assert_relative_eq;

    fn state(mean: f64, self_loop: f64) -> HmmState {
        let g = DiagonalGaussian::new(vec![mean], vec![0.25]);
        HmmState::new(GaussianMixture::single(g), self_loop).unwrap()
    }

    fn seq(xs: &[f32]) -> FeatureSequence {
        FeatureSequence::new(1, xs.to_vec(), xs.len())
    }

    #[test]
    fn single_state_scores_the_only_path() {
        let m = ClassHmm::new("a", vec![state(0.0, 0.7)]).unwrap();
        let obs = seq(&[0.1, -0.3, 0.4, 0.0]);
        let emit: f64 = obs
            .frames()
            .map(|f| m.states[0].mixture.log_density(f).unwrap())
            .sum();
        let expected = emit + 3.0 * 0.7f64.ln() + 0.3f64.ln();
        let c = m.as_composite();
        assert_relative_eq!(forward(&c, &obs).unwrap(), expected, epsilon = 1e-12);
        let (_, back) = backward(&c, &obs).unwrap();
        assert_relative_eq!(back, expected, epsilon = 1e-12);
        let v = viterbi(&c, &obs).unwrap();
        assert_eq!(v.states, vec![0; 4]);
        assert_relative_eq!(v.log_likelihood, expected, epsilon = 1e-12);
        assert!(v.boundaries.is_empty());
    }

    #[test]
    fn too_short_is_impossible() {
        let m =
            ClassHmm::new("a", vec![state(0.0, 0.5), state(1.0, 0.5), state(2.0, 0.5)]).unwrap();
        let obs = seq(&[0.0, 1.0]);
        let c = m.as_composite();
        assert_eq!(forward(&c, &obs).unwrap(), f64::NEG_INFINITY);
        assert_eq!(backward(&c, &obs).unwrap().1, f64::NEG_INFINITY);
        assert!(matches!(
            viterbi(&c, &obs),
            Err(HmmError::ImpossiblePath {
                frames: 2,
                states: 3
            })
        ));
    }

    #[test]
    fn composite_boundary_lands_on_junction() {
        let a = ClassHmm::new("a", vec![state(0.0, 0.5), state(1.0, 0.5)]).unwrap();
        let b = ClassHmm::new("b", vec![state(2.0, 0.5), state(3.0, 0.5)]).unwrap();
        let c = CompositeHmm::new(vec![&a, &b]).unwrap();
        let v = viterbi(&c, &seq(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(v.states, vec![0, 1, 2, 3]);
        assert_eq!(v.boundaries, vec![2]);
    }

    #[test]
    fn dimension_and_empty_checks() {
        let m = ClassHmm::new("a", vec![state(0.0, 0.5)]).unwrap();
        let bad = FeatureSequence::new(2, vec![0.0; 4], 2);
        assert!(matches!(
            forward(&m.as_composite(), &bad),
            Err(HmmError::DimensionMismatch {
                expected: 1,
                found: 2
            })
        ));
        let empty = FeatureSequence::new(1, vec![], 0);
        assert!(matches!(
            forward(&m.as_composite(), &empty),
            Err(HmmError::EmptySequence)
        ));
    }
}

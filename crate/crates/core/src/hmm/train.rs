//! Baum-Welch training over concatenated class models.
//!
//! Every training sequence is labeled only with its ordered class list; the
//! class models are chained per label and the E-step distributes each frame
//! over all alignments, so segment boundaries are never supplied.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info, warn};
use rayon::prelude::*;

use super::gmm::{DiagonalGaussian, GaussianMixture};
use super::lattice::Lattice;
use super::model::{ClassHmm, CompositeHmm, HmmState, ModelSet};
use super::HmmError;
use crate::features::FeatureSequence;

/// Relative split offset applied to each mean when a component is doubled.
pub const SPLIT_PERTURBATION: f64 = 0.2;
/// Smallest self-loop probability assigned at flat start.
pub const MIN_INITIAL_SELF_LOOP: f64 = 0.1;
/// Components whose occupancy falls below this keep their previous
/// mean and variance.
const MIN_COMPONENT_OCCUPANCY: f64 = 1e-10;

/// Mixture sizes 1, 2, 4, … up to `target_mixtures`, each re-estimated
/// `iterations_per_level` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingSchedule {
    pub target_mixtures: usize,
    pub iterations_per_level: usize,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            target_mixtures: 4,
            iterations_per_level: 2,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<(), HmmError> {
        if self.target_mixtures == 0 || !self.target_mixtures.is_power_of_two() {
            return Err(HmmError::InvalidSchedule(format!(
                "target mixture size {} is not reachable by doubling from 1",
                self.target_mixtures
            )));
        }
        if self.iterations_per_level == 0 {
            return Err(HmmError::InvalidSchedule(
                "at least one iteration per level is required".into(),
            ));
        }
        Ok(())
    }

    pub fn levels(&self) -> Vec<usize> {
        std::iter::successors(Some(1usize), |g| Some(g * 2))
            .take_while(|&g| g <= self.target_mixtures)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Emitting states per class model.
    pub n_states: usize,
    pub schedule: TrainingSchedule,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor_scale: f64,
    /// Absolute lower bound on every floored variance.
    pub min_variance: f64,
    /// Leave a mixture level early when the relative log-likelihood gain of
    /// a sweep falls below this.
    pub early_stop: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_states: 10,
            schedule: TrainingSchedule::default(),
            variance_floor_scale: 1e-2,
            min_variance: 1e-3,
            early_stop: None,
        }
    }
}

/// A training sequence and its ordered class labels.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSequence<'a> {
    pub obs: &'a FeatureSequence,
    pub classes: &'a [String],
}

/// Per-dimension variance floor: `scale × global variance`, at least `min_variance`.
pub fn variance_floor<'a>(
    sequences: impl IntoIterator<Item = &'a FeatureSequence>,
    scale: f64,
    min_variance: f64,
) -> Vec<f64> {
    let mut dim = 0;
    let mut n = 0.0;
    let mut sum: Vec<f64> = Vec::new();
    let mut sum_sq: Vec<f64> = Vec::new();
    for seq in sequences {
        if dim == 0 {
            dim = seq.dim();
            sum = vec![0.0; dim];
            sum_sq = vec![0.0; dim];
        }
        for frame in seq.frames() {
            n += 1.0;
            for (d, &x) in frame.iter().enumerate() {
                let x = x as f64;
                sum[d] += x;
                sum_sq[d] += x * x;
            }
        }
    }
    (0..dim)
        .map(|d| {
            let mean = sum[d] / n;
            let var = (sum_sq[d] / n - mean * mean).max(0.0);
            (scale * var).max(min_variance)
        })
        .collect()
}

/// Pooled first and second moments.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    weight: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Moments {
            weight: 0.0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        }
    }

    fn add(&mut self, frame: &[f32], w: f64) {
        self.weight += w;
        for ((s, q), &x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(frame) {
            let x = x as f64;
            *s += w * x;
            *q += w * x * x;
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.weight += other.weight;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }

    fn gaussian(&self, floor: &[f64]) -> DiagonalGaussian {
        let mean: Vec<f64> = self.sum.iter().map(|s| s / self.weight).collect();
        let variance = self
            .sum_sq
            .iter()
            .zip(&mean)
            .zip(floor)
            .map(|((q, m), f)| (q / self.weight - m * m).max(*f))
            .collect();
        DiagonalGaussian::new(mean, variance)
    }
}

/// Flat-start statistics for one class: per-state moments from uniform
/// segmentation, plus occurrence lengths for the self-loop heuristic.
#[derive(Debug, Clone)]
struct FlatPool {
    states: Vec<Moments>,
    frames: usize,
    occurrences: usize,
}

impl FlatPool {
    fn new(n_states: usize, dim: usize) -> Self {
        FlatPool {
            states: vec![Moments::new(dim); n_states],
            frames: 0,
            occurrences: 0,
        }
    }

    fn into_model(self, class_id: &str, floor: &[f64]) -> Result<ClassHmm, HmmError> {
        if self.occurrences == 0 || self.states.iter().any(|m| m.weight == 0.0) {
            return Err(HmmError::NoUsableSequences(class_id.to_string()));
        }
        let s = self.states.len() as f64;
        let mean_len = self.frames as f64 / self.occurrences as f64;
        let self_loop = ((mean_len - s) / mean_len).max(MIN_INITIAL_SELF_LOOP);
        let states = self
            .states
            .iter()
            .map(|m| HmmState::new(GaussianMixture::single(m.gaussian(floor)), self_loop))
            .collect::<Result<Vec<_>, _>>()?;
        ClassHmm::new(class_id, states)
    }
}

/// Uniform segmentation of one labeled sequence into its parts' states.
fn pool_uniform(
    pools: &mut BTreeMap<String, FlatPool>,
    labeled: &LabeledSequence<'_>,
    n_states: usize,
) {
    let t_len = labeled.obs.len();
    let total = n_states * labeled.classes.len();
    for class in labeled.classes {
        pools
            .entry(class.clone())
            .or_insert_with(|| FlatPool::new(n_states, labeled.obs.dim()))
            .occurrences += 1;
    }
    for t in 0..t_len {
        let seg = t * total / t_len;
        let (part, state) = (seg / n_states, seg % n_states);
        let pool = pools.get_mut(&labeled.classes[part]).expect("pool exists");
        pool.states[state].add(labeled.obs.frame(t), 1.0);
        pool.frames += 1;
    }
}

/// Single-class flat start: each sequence is cut into `n_states` equal
/// contiguous segments and state `s` takes the pooled mean and variance of
/// every sequence's segment `s`. Sequences shorter than `n_states` are skipped.
pub fn flat_start(
    class_id: &str,
    sequences: &[&FeatureSequence],
    n_states: usize,
    variance_floor: &[f64],
) -> Result<ClassHmm, HmmError> {
    let label = [class_id.to_string()];
    let mut pools = BTreeMap::new();
    let mut skipped = 0;
    for seq in sequences {
        if seq.len() < n_states {
            skipped += 1;
            continue;
        }
        let labeled = LabeledSequence {
            obs: seq,
            classes: &label,
        };
        pool_uniform(&mut pools, &labeled, n_states);
    }
    if skipped > 0 {
        warn!(
            "flat start of {class_id}: skipped {skipped} sequences shorter than {n_states} frames"
        );
    }
    pools
        .remove(class_id)
        .ok_or_else(|| HmmError::NoUsableSequences(class_id.to_string()))?
        .into_model(class_id, variance_floor)
}

/// Sufficient statistics for one emitting state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateStats {
    pub occupancy: f64,
    pub self_count: f64,
    pub next_count: f64,
    components: Vec<Moments>,
}

impl StateStats {
    fn new(n_components: usize, dim: usize) -> Self {
        StateStats {
            occupancy: 0.0,
            self_count: 0.0,
            next_count: 0.0,
            components: vec![Moments::new(dim); n_components],
        }
    }

    pub fn component_occupancy(&self) -> Vec<f64> {
        self.components.iter().map(|m| m.weight).collect()
    }

    /// Weighted sum of frames attributed to component `g`.
    pub fn component_sum(&self, g: usize) -> &[f64] {
        &self.components[g].sum
    }

    pub fn component_sum_sq(&self, g: usize) -> &[f64] {
        &self.components[g].sum_sq
    }

    fn merge(&mut self, other: &StateStats) {
        self.occupancy += other.occupancy;
        self.self_count += other.self_count;
        self.next_count += other.next_count;
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.merge(b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub states: Vec<StateStats>,
}

impl ClassStats {
    fn for_model(model: &ClassHmm) -> Self {
        ClassStats {
            states: model
                .states
                .iter()
                .map(|s| StateStats::new(s.mixture.len(), model.dim()))
                .collect(),
        }
    }

    pub fn occupancy(&self) -> f64 {
        self.states.iter().map(|s| s.occupancy).sum()
    }

    fn merge(&mut self, other: &ClassStats) {
        assert_eq!(
            self.states.len(),
            other.states.len(),
            "state count mismatch"
        );
        for (a, b) in self.states.iter_mut().zip(&other.states) {
            a.merge(b);
        }
    }
}

/// Baum-Welch sufficient statistics, keyed by class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulators {
    pub classes: BTreeMap<String, ClassStats>,
    pub log_likelihood: f64,
    /// Sequences that contributed statistics.
    pub sequences: usize,
    /// Sequences with no legal alignment.
    pub skipped: usize,
}

impl Accumulators {
    pub fn merge(&mut self, other: &Accumulators) {
        for (id, stats) in &other.classes {
            match self.classes.get_mut(id) {
                Some(mine) => mine.merge(stats),
                None => {
                    self.classes.insert(id.clone(), stats.clone());
                }
            }
        }
        self.log_likelihood += other.log_likelihood;
        self.sequences += other.sequences;
        self.skipped += other.skipped;
    }
}

/// E-step for one sequence against a composite model. A sequence with no
/// legal alignment yields empty statistics with `skipped == 1`.
pub fn accumulate(
    model: &CompositeHmm<'_>,
    obs: &FeatureSequence,
) -> Result<Accumulators, HmmError> {
    let lattice = Lattice::new(model, obs)?;
    let (alpha, total) = lattice.forward();
    if total == f64::NEG_INFINITY || !total.is_finite() {
        return Ok(Accumulators {
            skipped: 1,
            ..Accumulators::default()
        });
    }
    let (beta, _) = lattice.backward();
    let n = lattice.n_states();
    let t_len = lattice.n_frames();
    let index = model.state_index();
    let mut stats: Vec<ClassStats> = model
        .parts()
        .iter()
        .map(|m| ClassStats::for_model(m))
        .collect();
    let mut joint = Vec::new();

    for t in 0..t_len {
        let frame = obs.frame(t);
        for j in 0..n {
            let log_gamma = alpha[t * n + j] + beta[t * n + j] - total;
            if log_gamma == f64::NEG_INFINITY {
                continue;
            }
            let gamma = log_gamma.exp();
            let (p, s) = index[j];
            let part = model.parts()[p];
            let st = &mut stats[p].states[s];
            st.occupancy += gamma;

            let mixture = &part.states[s].mixture;
            mixture.component_log_joint(frame, &mut joint);
            let emit = lattice.emission(t, j);
            for (g, lj) in joint.iter().enumerate() {
                let post = gamma * (lj - emit).exp();
                if post > 0.0 {
                    st.components[g].add(frame, post);
                }
            }

            if t + 1 < t_len {
                let a = alpha[t * n + j] - total;
                let stay =
                    a + lattice.log_self(j) + lattice.emission(t + 1, j) + beta[(t + 1) * n + j];
                st.self_count += stay.exp();
                if j + 1 < n {
                    let adv = a
                        + lattice.log_next(j)
                        + lattice.emission(t + 1, j + 1)
                        + beta[(t + 1) * n + j + 1];
                    st.next_count += adv.exp();
                }
            } else if j == n - 1 {
                // leaving through the exit junction
                st.next_count += gamma;
            }
        }
    }

    let mut acc = Accumulators {
        log_likelihood: total,
        sequences: 1,
        ..Accumulators::default()
    };
    for (p, s) in stats.into_iter().enumerate() {
        let id = &model.parts()[p].class_id;
        let single = Accumulators {
            classes: BTreeMap::from([(id.clone(), s)]),
            ..Accumulators::default()
        };
        acc.merge(&single);
    }
    Ok(acc)
}

/// M-step. Classes without occupancy keep their parameters and are returned.
pub fn reestimate(
    models: &mut ModelSet,
    accs: &Accumulators,
    variance_floor: &[f64],
) -> BTreeSet<String> {
    let mut starved = BTreeSet::new();
    for model in models.iter_mut() {
        let stats = match accs.classes.get(&model.class_id) {
            Some(s) if s.occupancy() > 0.0 => s,
            _ => {
                starved.insert(model.class_id.clone());
                continue;
            }
        };
        for (state, st) in model.states.iter_mut().zip(&stats.states) {
            if st.occupancy <= 0.0 {
                continue;
            }
            let old = state.mixture.components();
            let weights: Vec<f64> = st
                .components
                .iter()
                .map(|m| m.weight / st.occupancy)
                .collect();
            let total: f64 = weights.iter().sum();
            let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let components = st
                .components
                .iter()
                .zip(old)
                .map(|(m, prev)| {
                    if m.weight > MIN_COMPONENT_OCCUPANCY {
                        m.gaussian(variance_floor)
                    } else {
                        prev.clone()
                    }
                })
                .collect();
            state.mixture = GaussianMixture::from_parts(weights, components);
            let out = st.self_count + st.next_count;
            if out > 0.0 {
                state.set_self_loop((st.self_count / out).clamp(0.0, 1.0));
            }
        }
    }
    starved
}

/// Doubles every mixture: each component becomes two with half the weight
/// and means offset by ±0.2 standard deviations per dimension.
pub fn split_mixtures(model: &ClassHmm) -> ClassHmm {
    let mut out = model.clone();
    for state in &mut out.states {
        let mut weights = Vec::with_capacity(state.mixture.len() * 2);
        let mut comps = Vec::with_capacity(state.mixture.len() * 2);
        for (w, c) in state
            .mixture
            .weights()
            .iter()
            .zip(state.mixture.components())
        {
            for sign in [1.0, -1.0] {
                let mean = c
                    .mean()
                    .iter()
                    .zip(c.variance())
                    .map(|(m, v)| m + sign * SPLIT_PERTURBATION * v.sqrt())
                    .collect();
                weights.push(w / 2.0);
                comps.push(DiagonalGaussian::new(mean, c.variance().to_vec()));
            }
        }
        state.mixture = GaussianMixture::from_parts(weights, comps);
    }
    out
}

/// One re-estimation sweep's record.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub mixtures: usize,
    pub sweep: usize,
    /// Total log-likelihood of the training set under the models entering the sweep.
    pub log_likelihood: f64,
    pub used: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub models: ModelSet,
    pub trace: Vec<SweepRecord>,
    pub starved: BTreeSet<String>,
    pub variance_floor: Vec<f64>,
}

/// Embedded Baum-Welch training with mixture doubling.
pub fn embedded_train(
    class_ids: &[String],
    labeled: &[LabeledSequence<'_>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, HmmError> {
    embedded_train_with(class_ids, labeled, cfg, |_, _| {})
}

/// As [`embedded_train`], calling `on_level(G, models)` when each mixture
/// level finishes.
pub fn embedded_train_with(
    class_ids: &[String],
    labeled: &[LabeledSequence<'_>],
    cfg: &TrainConfig,
    mut on_level: impl FnMut(usize, &ModelSet),
) -> Result<TrainOutcome, HmmError> {
    cfg.schedule.validate()?;
    if cfg.n_states == 0 {
        return Err(HmmError::InvalidModel("n_states must be >= 1".into()));
    }
    let known: BTreeSet<&str> = class_ids.iter().map(String::as_str).collect();
    for l in labeled {
        if l.classes.is_empty() {
            return Err(HmmError::InvalidModel(
                "sequence with an empty label".into(),
            ));
        }
        if let Some(bad) = l.classes.iter().find(|c| !known.contains(c.as_str())) {
            return Err(HmmError::UnknownClass(bad.clone()));
        }
    }
    let dim = labeled
        .first()
        .map(|l| l.obs.dim())
        .ok_or_else(|| HmmError::NoUsableSequences("<all>".into()))?;
    if let Some(l) = labeled.iter().find(|l| l.obs.dim() != dim) {
        return Err(HmmError::DimensionMismatch {
            expected: dim,
            found: l.obs.dim(),
        });
    }

    let usable: Vec<&LabeledSequence<'_>> = labeled
        .iter()
        .filter(|l| l.obs.len() >= cfg.n_states * l.classes.len())
        .collect();
    let short = labeled.len() - usable.len();
    if short > 0 {
        warn!(
            "{short} training sequences are shorter than their composite model and were excluded"
        );
    }
    let floor = variance_floor(
        usable.iter().map(|l| l.obs),
        cfg.variance_floor_scale,
        cfg.min_variance,
    );

    let mut pools = BTreeMap::new();
    for l in &usable {
        pool_uniform(&mut pools, l, cfg.n_states);
    }
    let mut models = ModelSet::new();
    for id in class_ids {
        let pool = pools
            .remove(id)
            .ok_or_else(|| HmmError::NoUsableSequences(id.clone()))?;
        models.insert(pool.into_model(id, &floor)?);
    }

    let mut trace = Vec::new();
    let mut starved = BTreeSet::new();
    for (level_idx, g) in cfg.schedule.levels().into_iter().enumerate() {
        if level_idx > 0 {
            models = models.iter().map(split_mixtures).collect();
        }
        let mut prev_ll: Option<f64> = None;
        for sweep in 0..cfg.schedule.iterations_per_level {
            let acc = e_step(&models, &usable)?;
            debug!(
                "G={g} sweep {sweep}: log-likelihood {:.6} over {} sequences ({} skipped)",
                acc.log_likelihood, acc.sequences, acc.skipped
            );
            trace.push(SweepRecord {
                mixtures: g,
                sweep,
                log_likelihood: acc.log_likelihood,
                used: acc.sequences,
                skipped: acc.skipped,
            });
            if let (Some(tol), Some(prev)) = (cfg.early_stop, prev_ll) {
                let gain = (acc.log_likelihood - prev) / prev.abs().max(1e-300);
                if gain < tol {
                    info!("G={g}: relative gain {gain:.2e} below {tol:.0e}, leaving level");
                    break;
                }
            }
            prev_ll = Some(acc.log_likelihood);
            starved.extend(reestimate(&mut models, &acc, &floor));
        }
        on_level(g, &models);
    }
    if !starved.is_empty() {
        warn!(
            "{} classes received no occupancy in some sweep",
            starved.len()
        );
    }
    Ok(TrainOutcome {
        models,
        trace,
        starved,
        variance_floor: floor,
    })
}

/// Parallel E-step; per-sequence statistics are merged in input order so the
/// result does not depend on scheduling.
fn e_step(models: &ModelSet, labeled: &[&LabeledSequence<'_>]) -> Result<Accumulators, HmmError> {
    let parts: Vec<Accumulators> = labeled
        .par_iter()
        .map(|l| {
            let composite = models.composite(l.classes)?;
            accumulate(&composite, l.obs)
        })
        .collect::<Result<_, _>>()?;
    let mut total = Accumulators::default();
    for a in &parts {
        total.merge(a);
    }
    Ok(total)
}

//! Experiment protocol: cross-validated grid search over window width,
//! cells per window, states per model and mixture size; the monolithic
//! versus decomposed comparison; learning curves; and the report files.
//!
//! Every run is a pure function of its configuration. Jobs run in parallel
//! but results are gathered in grid order, and wall-clock time is only
//! written when asked for, so two runs with the same seed produce identical
//! CSV files.

mod bundle;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::dataset::{
    load_dataset, make_splits, Dataset, DatasetError, DecompositionSchema, InventoryRules,
    Manifest, SplitPlan, SplitSizes, MANIFEST_FILE,
};
use crate::features::{
    extract_features, read_sequence, write_sequence, CacheError, FeatureConfig, FeatureError,
    FeatureSequence,
};
use crate::hmm::{
    embedded_train_with, HmmError, LabeledSequence, ModelSet, TrainConfig, TrainingSchedule,
};
use crate::recognizer::{Lexicon, RecognitionResult, RecognizeError, Recognizer};

pub use self::bundle::{load_bundle, save_bundle, Bundle, BUNDLE_HEADER};
pub use self::report::{
    confusion_csv, learning_curve_csv, learning_curve_svg, metrics_csv, MetricRow, METRICS_HEADER,
};

/// Accuracy of the three systems in the published comparison table, in percent.
pub const REFERENCE_DCT_NN: f64 = 33.3;
pub const REFERENCE_MONOLITHIC: f64 = 39.79;
pub const REFERENCE_DECOMPOSED: f64 = 49.22;
/// Published best validation accuracy at S=10, G=4, w=8, h=8.
pub const REFERENCE_VALIDATION: f64 = 61.22;
/// Published test accuracy with six extra samples per character.
pub const REFERENCE_SUPPLEMENTED: f64 = 65.34;

/// Label assigned to samples the recognizer could not align at all.
pub const IMPOSSIBLE_LABEL: &str = "<impossible>";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("features of {character} sample {writer}: {source}")]
    Features {
        character: String,
        writer: usize,
        source: FeatureError,
    },
    #[error("feature cache {path}: {source}")]
    Cache { path: PathBuf, source: CacheError },
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Recognize(#[from] RecognizeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("no predictions to evaluate")]
    EmptyPredictionSet,
    #[error("bundle line {line}: {message}")]
    Bundle { line: usize, message: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.to_path_buf();
    move |source| HarnessError::Io { path, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// One model per character.
    Monolithic,
    /// Shared class models chained per the decomposition schema.
    Decomposed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Monolithic => "monolithic",
            Mode::Decomposed => "decomposed",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monolithic" => Ok(Mode::Monolithic),
            "decomposed" => Ok(Mode::Decomposed),
            other => Err(format!("unknown mode `{other}` (monolithic or decomposed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    pub schema_path: Option<PathBuf>,
    /// Inventory the schema must satisfy; `None` accepts any well-formed schema.
    pub inventory: Option<InventoryRules>,
    /// Extra samples per character, appended after the regular training
    /// samples in the learning curve.
    pub supplementary_root: Option<PathBuf>,
    /// Bins, weighting, stride and height. Window width and cells come from the grids.
    pub base_features: FeatureConfig,
    pub window_widths: Vec<usize>,
    pub cell_counts: Vec<usize>,
    pub state_counts: Vec<usize>,
    pub mixture_counts: Vec<usize>,
    pub iterations_per_level: usize,
    pub split: SplitSizes,
    pub n_folds: usize,
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Cache extracted features under `out_dir/cache`.
    pub cache_features: bool,
    /// Fill the `seconds` column; this makes metric files run-dependent.
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(dataset_root: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset_root: dataset_root.into(),
            schema_path: None,
            inventory: Some(InventoryRules::kannada()),
            supplementary_root: None,
            base_features: FeatureConfig::default(),
            window_widths: vec![8],
            cell_counts: vec![8],
            state_counts: vec![10],
            mixture_counts: vec![4],
            iterations_per_level: 2,
            split: SplitSizes::standard(),
            n_folds: 4,
            mode: Mode::Decomposed,
            seed: 0,
            out_dir: out_dir.into(),
            cache_features: true,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        for (name, grid) in [
            ("window width", &self.window_widths),
            ("cell count", &self.cell_counts),
            ("state count", &self.state_counts),
            ("mixture count", &self.mixture_counts),
        ] {
            if grid.is_empty() {
                return bad(&format!("{name} grid is empty"));
            }
            if grid.contains(&0) {
                return bad(&format!("{name} grid contains 0"));
            }
        }
        if let Some(g) = self.mixture_counts.iter().find(|g| !g.is_power_of_two()) {
            return bad(&format!("mixture count {g} is not a power of two"));
        }
        if self.iterations_per_level == 0 {
            return bad("iterations per level must be >= 1");
        }
        if self.split.train == 0 {
            return bad("training split is empty");
        }
        for p in self.grid() {
            self.features(p.w, p.h)
                .validate()
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    pub fn features(&self, window_width: usize, cells: usize) -> FeatureConfig {
        FeatureConfig {
            window_width,
            cells,
            ..self.base_features
        }
    }

    fn sorted(grid: &[usize]) -> Vec<usize> {
        let set: BTreeSet<usize> = grid.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Every grid point in ascending (w, h, S, G) order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &w in &Self::sorted(&self.window_widths) {
            for &h in &Self::sorted(&self.cell_counts) {
                for &s in &Self::sorted(&self.state_counts) {
                    for &g in &Self::sorted(&self.mixture_counts) {
                        out.push(GridPoint { w, h, s, g });
                    }
                }
            }
        }
        out
    }

    /// The smallest value of every grid, used where a single point is needed.
    pub fn first_point(&self) -> GridPoint {
        self.grid()[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPoint {
    pub w: usize,
    pub h: usize,
    pub s: usize,
    pub g: usize,
}

/// Loaded samples with the optional schema and supplementary samples.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dataset: Dataset,
    pub schema: Option<DecompositionSchema>,
    pub supplementary: Option<Dataset>,
}

fn load_root(root: &Path) -> Result<Dataset, HarnessError> {
    let manifest = Manifest::load(&root.join(MANIFEST_FILE))?;
    Ok(load_dataset(root, &manifest)?)
}

pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus, HarnessError> {
    let dataset = load_root(&cfg.dataset_root)?;
    let schema = match &cfg.schema_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let schema = DecompositionSchema::parse(&text)?;
            if let Some(rules) = &cfg.inventory {
                schema.check_inventory(rules)?;
            }
            Some(schema)
        }
        None => None,
    };
    let supplementary = cfg
        .supplementary_root
        .as_deref()
        .map(load_root)
        .transpose()?;
    Ok(Corpus {
        dataset,
        schema,
        supplementary,
    })
}

/// Class labels of every character in the dataset. Decomposed mode uses the
/// schema where it has an entry and a whole-character model otherwise.
pub fn labels_for(
    corpus: &Corpus,
    mode: Mode,
) -> Result<BTreeMap<String, Vec<String>>, HarnessError> {
    let schema = match (mode, &corpus.schema) {
        (Mode::Monolithic, _) => None,
        (Mode::Decomposed, Some(s)) => Some(s),
        (Mode::Decomposed, None) => {
            return Err(HarnessError::InvalidConfig(
                "decomposed mode needs a schema".into(),
            ))
        }
    };
    let mut fallback = 0;
    let labels: BTreeMap<String, Vec<String>> = corpus
        .dataset
        .character_ids()
        .map(|id| {
            let classes = match schema.and_then(|s| s.decompose(id)) {
                Some(c) => c.to_vec(),
                None => {
                    fallback += usize::from(schema.is_some());
                    vec![id.to_string()]
                }
            };
            (id.to_string(), classes)
        })
        .collect();
    if fallback > 0 {
        info!("{fallback} characters without a schema entry get whole-character models");
    }
    Ok(labels)
}

/// Feature sequences indexed `[group][ordinal]`, parallel to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub config: FeatureConfig,
    pub sequences: Vec<Vec<FeatureSequence>>,
}

fn cache_dir(root: &Path, cfg: &FeatureConfig) -> PathBuf {
    root.join(format!(
        "w{}-h{}-b{}-s{}-H{}-{}",
        cfg.window_width,
        cfg.cells,
        cfg.bins,
        cfg.stride,
        cfg.standard_height,
        cfg.weight_mode.as_str()
    ))
}

fn cached_sequence(
    path: &Path,
    cfg: &FeatureConfig,
    compute: impl FnOnce() -> Result<FeatureSequence, HarnessError>,
) -> Result<FeatureSequence, HarnessError> {
    if let Ok(file) = std::fs::File::open(path) {
        match read_sequence(std::io::BufReader::new(file), Some(cfg)) {
            Ok((_, seq)) => return Ok(seq),
            Err(e) => warn!("ignoring unreadable cache entry {}: {e}", path.display()),
        }
    }
    let seq = compute()?;
    // Write then rename so an interrupted run never leaves a torn entry.
    let tmp = path.with_extension("tmp");
    let mut buf = Vec::new();
    write_sequence(&mut buf, cfg, &seq).map_err(|source| HarnessError::Cache {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(&tmp, &buf).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(seq)
}

/// Extracts features for every sample, reading and filling `cache_root` when given.
pub fn extract_table(
    dataset: &Dataset,
    cfg: &FeatureConfig,
    cache_root: Option<&Path>,
) -> Result<FeatureTable, HarnessError> {
    cfg.validate()
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let dir = cache_root.map(|r| cache_dir(r, cfg));
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let jobs: Vec<(usize, usize)> = dataset
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, (_, s))| (0..s.len()).map(move |i| (g, i)))
        .collect();
    let flat = jobs
        .par_iter()
        .map(|&(g, i)| {
            let sample = &dataset.groups[g].1[i];
            let compute = || {
                extract_features(&sample.image, cfg).map_err(|source| HarnessError::Features {
                    character: sample.character_id.clone(),
                    writer: sample.writer_index,
                    source,
                })
            };
            match &dir {
                Some(d) => cached_sequence(&d.join(format!("{g:04}-{i:03}.hwrf")), cfg, compute),
                None => compute(),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut it = flat.into_iter();
    let sequences = dataset
        .groups
        .iter()
        .map(|(_, s)| it.by_ref().take(s.len()).collect())
        .collect();
    Ok(FeatureTable {
        config: *cfg,
        sequences,
    })
}

/// Which samples of each character to train or evaluate on.
#[derive(Debug, Clone, Copy)]
pub struct Selection<'a> {
    pub table: &'a FeatureTable,
    pub ordinals: &'a [usize],
}

/// Trains with the mixture-doubling schedule up to the largest of
/// `mixture_levels`, returning the models at each requested level.
pub fn fit(
    labels: &BTreeMap<String, Vec<String>>,
    character_ids: &[String],
    train: &[Selection<'_>],
    n_states: usize,
    mixture_levels: &[usize],
    iterations_per_level: usize,
) -> Result<Vec<(usize, ModelSet)>, HarnessError> {
    let target = mixture_levels.iter().copied().max().unwrap_or(1);
    let cfg = TrainConfig {
        n_states,
        schedule: TrainingSchedule {
            target_mixtures: target,
            iterations_per_level,
        },
        ..TrainConfig::default()
    };
    let mut labeled = Vec::new();
    for sel in train {
        for (g, id) in character_ids.iter().enumerate() {
            for &o in sel.ordinals {
                if let Some(obs) = sel.table.sequences[g].get(o) {
                    labeled.push(LabeledSequence {
                        obs,
                        classes: &labels[id],
                    });
                }
            }
        }
    }
    let classes: BTreeSet<&String> = labels.values().flatten().collect();
    let classes: Vec<String> = classes.into_iter().cloned().collect();
    let wanted: BTreeSet<usize> = mixture_levels.iter().copied().collect();
    let mut snapshots = Vec::new();
    embedded_train_with(&classes, &labeled, &cfg, |g, models| {
        if wanted.contains(&g) {
            snapshots.push((g, models.clone()));
        }
    })?;
    Ok(snapshots)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub truth: String,
    pub outcome: Result<RecognitionResult, RecognizeError>,
}

impl Prediction {
    pub fn predicted(&self) -> &str {
        match &self.outcome {
            Ok(r) => &r.character_id,
            Err(_) => IMPOSSIBLE_LABEL,
        }
    }
}

/// Recognizes every selected sample, in character then ordinal order.
pub fn predict(
    models: &ModelSet,
    lexicon: &Lexicon,
    character_ids: &[String],
    sel: Selection<'_>,
) -> Result<Vec<Prediction>, HarnessError> {
    let rec = Recognizer::new(models, lexicon)?;
    let jobs: Vec<(usize, usize)> = (0..character_ids.len())
        .flat_map(|g| sel.ordinals.iter().map(move |&o| (g, o)))
        .filter(|&(g, o)| o < sel.table.sequences[g].len())
        .collect();
    jobs.par_iter()
        .map(|&(g, o)| {
            let outcome = match rec.recognize(&sel.table.sequences[g][o], 1) {
                Ok(r) => Ok(r),
                Err(e @ RecognizeError::AllImpossible { .. }) => Err(e),
                Err(e) => return Err(HarnessError::from(e)),
            };
            Ok(Prediction {
                truth: character_ids[g].clone(),
                outcome,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub split: SplitTag,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `character → (correct, total)`.
    pub per_character: BTreeMap<String, (usize, usize)>,
    /// `(truth, predicted) → count`, including correct pairs, so each
    /// truth's row sums to its sample count.
    pub confusion: BTreeMap<(String, String), usize>,
    pub seconds: Option<f64>,
}

impl Metrics {
    /// Off-diagonal confusion pairs.
    pub fn errors(&self) -> impl Iterator<Item = (&str, &str, usize)> {
        self.confusion
            .iter()
            .filter(|((t, p), _)| t != p)
            .map(|((t, p), &n)| (t.as_str(), p.as_str(), n))
    }
}

/// Exact-match accuracy; unalignable samples count as wrong.
pub fn evaluate(predictions: &[Prediction], split: SplitTag) -> Result<Metrics, HarnessError> {
    if predictions.is_empty() {
        return Err(HarnessError::EmptyPredictionSet);
    }
    let mut per_character: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut confusion = BTreeMap::new();
    let mut correct = 0;
    for p in predictions {
        let hit = p.outcome.as_ref().is_ok_and(|r| r.character_id == p.truth);
        correct += usize::from(hit);
        let e = per_character.entry(p.truth.clone()).or_default();
        e.0 += usize::from(hit);
        e.1 += 1;
        *confusion
            .entry((p.truth.clone(), p.predicted().to_string()))
            .or_insert(0) += 1;
    }
    Ok(Metrics {
        split,
        total: predictions.len(),
        correct,
        accuracy: correct as f64 / predictions.len() as f64,
        per_character,
        confusion,
        seconds: None,
    })
}

fn character_ids(dataset: &Dataset) -> Vec<String> {
    dataset.character_ids().map(str::to_string).collect()
}

fn plans(
    cfg: &ExperimentConfig,
    sizes: SplitSizes,
    n_folds: usize,
    dataset: &Dataset,
) -> Result<Vec<SplitPlan>, HarnessError> {
    let plans = make_splits(dataset.samples_per_character, sizes, n_folds, cfg.seed)?;
    for p in &plans {
        p.assert_disjoint();
    }
    Ok(plans)
}

fn cache_root(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.cache_features.then(|| cfg.out_dir.join("cache"))
}

fn tables(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    grid: &[GridPoint],
) -> Result<BTreeMap<(usize, usize), FeatureTable>, HarnessError> {
    let cache = cache_root(cfg);
    let mut out = BTreeMap::new();
    for p in grid {
        if let std::collections::btree_map::Entry::Vacant(e) = out.entry((p.w, p.h)) {
            let fc = cfg.features(p.w, p.h);
            info!("extracting features w={} h={}", p.w, p.h);
            e.insert(extract_table(dataset, &fc, cache.as_deref())?);
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Validation rows for every fold and grid point, then the final train and test rows.
    pub rows: Vec<MetricRow>,
    /// Mean validation accuracy per grid point.
    pub validation: BTreeMap<GridPoint, f64>,
    pub selected: GridPoint,
    pub train: Metrics,
    pub test: Metrics,
    pub models: ModelSet,
    pub lexicon: Lexicon,
}

/// Picks the highest mean validation accuracy; ties go to fewer states,
/// then fewer mixtures, then the earlier grid point.
pub fn select_point(validation: &BTreeMap<GridPoint, f64>) -> Option<GridPoint> {
    let mut points: Vec<(&GridPoint, &f64)> = validation.iter().collect();
    points.sort_by(|a, b| {
        b.1.total_cmp(a.1)
            .then(a.0.s.cmp(&b.0.s))
            .then(a.0.g.cmp(&b.0.g))
            .then(a.0.cmp(b.0))
    });
    points.first().map(|(p, _)| **p)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let corpus = load_corpus(cfg)?;
    run_experiment_on(cfg, &corpus)
}

pub fn run_experiment_on(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let dataset = &corpus.dataset;
    let grid = cfg.grid();
    let plans = plans(cfg, cfg.split, cfg.n_folds, dataset)?;
    if cfg.split.validation == 0 && grid.len() > 1 {
        return Err(HarnessError::InvalidConfig(
            "a grid search needs a validation split".into(),
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let labels = labels_for(corpus, cfg.mode)?;
    let lexicon = Lexicon::new(labels.clone());
    let ids = character_ids(dataset);
    let tables = tables(cfg, dataset, &grid)?;
    let levels: Vec<usize> = ExperimentConfig::sorted(&cfg.mixture_counts);

    // One job per fold and (w, h, S); each job yields every requested G.
    let mut jobs = Vec::new();
    if cfg.split.validation > 0 {
        for plan in &plans {
            for p in grid.iter().filter(|p| p.g == levels[0]) {
                jobs.push((plan, p.w, p.h, p.s));
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|&(plan, w, h, s)| {
            let start = Instant::now();
            let table = &tables[&(w, h)];
            let train = [Selection {
                table,
                ordinals: &plan.train,
            }];
            let snapshots = fit(&labels, &ids, &train, s, &levels, cfg.iterations_per_level)?;
            let mut rows = Vec::new();
            for (g, models) in snapshots {
                let preds = predict(
                    &models,
                    &lexicon,
                    &ids,
                    Selection {
                        table,
                        ordinals: &plan.validation,
                    },
                )?;
                let m = evaluate(&preds, SplitTag::Validation)?;
                rows.push(MetricRow {
                    fold: plan.fold_index.to_string(),
                    mode: cfg.mode,
                    point: GridPoint { w, h, s, g },
                    split: SplitTag::Validation,
                    accuracy: m.accuracy,
                    seconds: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut rows: Vec<MetricRow> = results.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.fold.cmp(&b.fold).then(a.point.cmp(&b.point)));

    let mut sums: BTreeMap<GridPoint, (f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = sums.entry(r.point).or_default();
        e.0 += r.accuracy;
        e.1 += 1;
    }
    let validation: BTreeMap<GridPoint, f64> = sums
        .into_iter()
        .map(|(p, (s, n))| (p, s / n as f64))
        .collect();
    let selected = select_point(&validation).unwrap_or(grid[0]);
    info!(
        "selected w={} h={} S={} G={}",
        selected.w, selected.h, selected.s, selected.g
    );

    let start = Instant::now();
    let table = &tables[&(selected.w, selected.h)];
    let plan = &plans[0];
    let train_sel = Selection {
        table,
        ordinals: &plan.train,
    };
    let (_, models) = fit(
        &labels,
        &ids,
        &[train_sel],
        selected.s,
        &[selected.g],
        cfg.iterations_per_level,
    )?
    .pop()
    .expect("one snapshot per requested level");
    let train_preds = predict(&models, &lexicon, &ids, train_sel)?;
    let test_preds = predict(
        &models,
        &lexicon,
        &ids,
        Selection {
            table,
            ordinals: &plan.test,
        },
    )?;
    let seconds = cfg.record_timing.then(|| start.elapsed().as_secs_f64());
    let mut train = evaluate(&train_preds, SplitTag::Train)?;
    let mut test = evaluate(&test_preds, SplitTag::Test)?;
    train.seconds = seconds;
    test.seconds = seconds;
    for m in [&train, &test] {
        rows.push(MetricRow {
            fold: "final".into(),
            mode: cfg.mode,
            point: selected,
            split: m.split,
            accuracy: m.accuracy,
            seconds: m.seconds,
        });
    }

    let out = &cfg.out_dir;
    write_file(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    write_file(
        &out.join("confusion.csv"),
        &confusion_csv(&[("final", &test)]),
    )?;
    save_bundle(
        &out.join("model.bundle"),
        &Bundle {
            features: cfg.features(selected.w, selected.h),
            lexicon: lexicon.clone(),
            models: models.clone(),
        },
    )?;
    write_file(
        &out.join("summary.txt"),
        &report::experiment_summary(cfg, &validation, selected, &train, &test),
    )?;
    Ok(ExperimentReport {
        rows,
        validation,
        selected,
        train,
        test,
        models,
        lexicon,
    })
}

/// Trains one recognizer at the first grid point on fold 0's training
/// samples and writes it to `out_dir/model.bundle`.
pub fn train_bundle(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<Bundle, HarnessError> {
    cfg.validate()?;
    let point = cfg.first_point();
    let dataset = &corpus.dataset;
    let plan = plans(cfg, cfg.split, 1, dataset)?.remove(0);
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let table = &tables(cfg, dataset, &[point])?[&(point.w, point.h)];
    let labels = labels_for(corpus, cfg.mode)?;
    let ids = character_ids(dataset);
    let (_, models) = fit(
        &labels,
        &ids,
        &[Selection {
            table,
            ordinals: &plan.train,
        }],
        point.s,
        &[point.g],
        cfg.iterations_per_level,
    )?
    .pop()
    .expect("one snapshot");
    let bundle = Bundle {
        features: table.config,
        lexicon: Lexicon::new(labels),
        models,
    };
    save_bundle(&cfg.out_dir.join("model.bundle"), &bundle)?;
    Ok(bundle)
}

/// Scores a saved recognizer on the test samples of the configured split
/// and writes `metrics.csv` and `confusion.csv`.
pub fn evaluate_bundle(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    bundle: &Bundle,
) -> Result<Metrics, HarnessError> {
    let dataset = &corpus.dataset;
    let plan = plans(cfg, cfg.split, 1, dataset)?.remove(0);
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let start = Instant::now();
    let table = extract_table(dataset, &bundle.features, cache_root(cfg).as_deref())?;
    let ids = character_ids(dataset);
    let preds = predict(
        &bundle.models,
        &bundle.lexicon,
        &ids,
        Selection {
            table: &table,
            ordinals: &plan.test,
        },
    )?;
    let mut m = evaluate(&preds, SplitTag::Test)?;
    m.seconds = cfg.record_timing.then(|| start.elapsed().as_secs_f64());
    let first = bundle.models.iter().next();
    let row = MetricRow {
        fold: "final".into(),
        mode: cfg.mode,
        point: GridPoint {
            w: bundle.features.window_width,
            h: bundle.features.cells,
            s: first.map_or(0, |c| c.n_states()),
            g: first.map_or(0, |c| c.n_mixtures()),
        },
        split: SplitTag::Test,
        accuracy: m.accuracy,
        seconds: m.seconds,
    };
    write_file(&cfg.out_dir.join("metrics.csv"), &metrics_csv(&[row]))?;
    write_file(
        &cfg.out_dir.join("confusion.csv"),
        &confusion_csv(&[("final", &m)]),
    )?;
    Ok(m)
}

/// Extracts (and caches) features for every (w, h) in the grid.
pub fn extract_grid(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
) -> Result<Vec<FeatureTable>, HarnessError> {
    cfg.validate()?;
    Ok(tables(cfg, &corpus.dataset, &cfg.grid())?
        .into_values()
        .collect())
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub point: GridPoint,
    pub monolithic: Metrics,
    pub decomposed: Metrics,
}

impl Comparison {
    /// Decomposed minus monolithic test accuracy, in points.
    pub fn gap(&self) -> f64 {
        100.0 * (self.decomposed.accuracy - self.monolithic.accuracy)
    }
}

pub fn compare_modes(cfg: &ExperimentConfig) -> Result<Comparison, HarnessError> {
    let corpus = load_corpus(cfg)?;
    compare_modes_on(cfg, &corpus)
}

/// Trains both modes on the same training samples and features, and
/// evaluates both on the same test samples. Uses the first point of each grid.
pub fn compare_modes_on(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
) -> Result<Comparison, HarnessError> {
    cfg.validate()?;
    let point = cfg.first_point();
    if cfg.grid().len() > 1 {
        warn!("compare-modes uses only the first grid point");
    }
    let dataset = &corpus.dataset;
    let plan = plans(cfg, cfg.split, 1, dataset)?.remove(0);
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let table = &tables(cfg, dataset, &[point])?[&(point.w, point.h)];
    let ids = character_ids(dataset);
    let mut rows = Vec::new();
    let mut results = BTreeMap::new();
    for mode in [Mode::Monolithic, Mode::Decomposed] {
        let start = Instant::now();
        let labels = labels_for(corpus, mode)?;
        let lexicon = Lexicon::new(labels.clone());
        let train_sel = Selection {
            table,
            ordinals: &plan.train,
        };
        let (_, models) = fit(
            &labels,
            &ids,
            &[train_sel],
            point.s,
            &[point.g],
            cfg.iterations_per_level,
        )?
        .pop()
        .expect("one snapshot");
        let train = evaluate(
            &predict(&models, &lexicon, &ids, train_sel)?,
            SplitTag::Train,
        )?;
        let mut test = evaluate(
            &predict(
                &models,
                &lexicon,
                &ids,
                Selection {
                    table,
                    ordinals: &plan.test,
                },
            )?,
            SplitTag::Test,
        )?;
        test.seconds = cfg.record_timing.then(|| start.elapsed().as_secs_f64());
        for m in [&train, &test] {
            rows.push(MetricRow {
                fold: "0".into(),
                mode,
                point,
                split: m.split,
                accuracy: m.accuracy,
                seconds: test.seconds,
            });
        }
        results.insert(mode, test);
    }
    let cmp = Comparison {
        point,
        monolithic: results.remove(&Mode::Monolithic).expect("ran"),
        decomposed: results.remove(&Mode::Decomposed).expect("ran"),
    };
    if cmp.gap() < 0.0 {
        warn!(
            "decomposed mode trails monolithic mode by {:.2} points",
            -cmp.gap()
        );
    } else {
        info!(
            "decomposed mode leads monolithic mode by {:.2} points",
            cmp.gap()
        );
    }
    let out = &cfg.out_dir;
    write_file(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    write_file(
        &out.join("confusion.csv"),
        &confusion_csv(&[
            ("monolithic", &cmp.monolithic),
            ("decomposed", &cmp.decomposed),
        ]),
    )?;
    write_file(
        &out.join("comparison.txt"),
        &report::comparison_table(cfg, &cmp, corpus),
    )?;
    Ok(cmp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurvePoint {
    pub n_train: usize,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: f64,
}

pub fn learning_curve(
    cfg: &ExperimentConfig,
    n_train_values: &[usize],
) -> Result<Vec<LearningCurvePoint>, HarnessError> {
    let corpus = load_corpus(cfg)?;
    learning_curve_on(cfg, &corpus, n_train_values)
}

/// Retrains from scratch for each training size. Smaller training sets are
/// prefixes of larger ones. With supplementary samples, one more point
/// trains on the largest set plus every supplementary sample.
pub fn learning_curve_on(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    n_train_values: &[usize],
) -> Result<Vec<LearningCurvePoint>, HarnessError> {
    cfg.validate()?;
    let sizes: Vec<usize> = ExperimentConfig::sorted(n_train_values);
    let max_n = *sizes
        .last()
        .ok_or_else(|| HarnessError::InvalidConfig("no training sizes".into()))?;
    if sizes[0] == 0 {
        return Err(HarnessError::InvalidConfig("training size 0".into()));
    }
    let dataset = &corpus.dataset;
    let split = SplitSizes::new(max_n, cfg.split.validation, cfg.split.test);
    let plan = plans(cfg, split, 1, dataset)?.remove(0);
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let point = cfg.first_point();
    let table = &tables(cfg, dataset, &[point])?[&(point.w, point.h)];
    let labels = labels_for(corpus, cfg.mode)?;
    let lexicon = Lexicon::new(labels.clone());
    let ids = character_ids(dataset);

    let supp_table = match &corpus.supplementary {
        Some(supp) => Some(aligned_supplement(
            dataset,
            supp,
            &cfg.features(point.w, point.h),
        )?),
        None => None,
    };
    let supp_ordinals: Vec<usize> = supp_table
        .as_ref()
        .map(|t| (0..t.sequences.iter().map(Vec::len).max().unwrap_or(0)).collect())
        .unwrap_or_default();

    let mut runs: Vec<(usize, bool)> = sizes.iter().map(|&n| (n, false)).collect();
    if !supp_ordinals.is_empty() {
        runs.push((max_n + supp_ordinals.len(), true));
    }
    let eval = |models: &ModelSet, ordinals: &[usize], tag| {
        evaluate(
            &predict(models, &lexicon, &ids, Selection { table, ordinals })?,
            tag,
        )
    };
    let mut points = Vec::new();
    for (n, with_supp) in runs {
        let base = &plan.train[..n.min(max_n)];
        let mut train = vec![Selection {
            table,
            ordinals: base,
        }];
        if with_supp {
            train.push(Selection {
                table: supp_table.as_ref().expect("present"),
                ordinals: &supp_ordinals,
            });
        }
        info!("learning curve: training on {n} samples per character");
        let (_, models) = fit(
            &labels,
            &ids,
            &train,
            point.s,
            &[point.g],
            cfg.iterations_per_level,
        )?
        .pop()
        .expect("one snapshot");
        let mut train_preds = Vec::new();
        for sel in &train {
            train_preds.extend(predict(&models, &lexicon, &ids, *sel)?);
        }
        let train_accuracy = evaluate(&train_preds, SplitTag::Train)?.accuracy;
        let validation_accuracy = if plan.validation.is_empty() {
            None
        } else {
            Some(eval(&models, &plan.validation, SplitTag::Validation)?.accuracy)
        };
        let test_accuracy = eval(&models, &plan.test, SplitTag::Test)?.accuracy;
        points.push(LearningCurvePoint {
            n_train: n,
            train_accuracy,
            validation_accuracy,
            test_accuracy,
        });
    }
    let out = &cfg.out_dir;
    write_file(
        &out.join("learning_curve.csv"),
        &learning_curve_csv(&points),
    )?;
    write_file(
        &out.join("learning_curve.svg"),
        &learning_curve_svg(&points),
    )?;
    write_file(
        &out.join("summary.txt"),
        &report::curve_summary(cfg, point, &points, !supp_ordinals.is_empty()),
    )?;
    Ok(points)
}

/// Features of the supplementary samples, grouped in the main dataset's
/// character order. Characters without supplementary samples get none.
fn aligned_supplement(
    dataset: &Dataset,
    supp: &Dataset,
    cfg: &FeatureConfig,
) -> Result<FeatureTable, HarnessError> {
    let extracted = extract_table(supp, cfg, None)?;
    let mut by_id: BTreeMap<&str, &Vec<FeatureSequence>> = BTreeMap::new();
    for ((id, _), seqs) in supp.groups.iter().zip(&extracted.sequences) {
        by_id.insert(id.as_str(), seqs);
    }
    let unknown = supp
        .character_ids()
        .filter(|id| !dataset.character_ids().any(|d| d == *id))
        .count();
    if unknown > 0 {
        warn!("{unknown} supplementary characters are not in the dataset and were ignored");
    }
    Ok(FeatureTable {
        config: *cfg,
        sequences: dataset
            .character_ids()
            .map(|id| by_id.get(id).map(|v| (*v).clone()).unwrap_or_default())
            .collect(),
    })
}

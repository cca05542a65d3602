//! Lexicon decoding: every lexicon entry is scored with Viterbi over its
//! chained class models, and the best-scoring entry wins. The prior over
//! characters is uniform, so it is left out of the scores.

use std::collections::{BTreeMap, HashMap};

use crate::dataset::DecompositionSchema;
use crate::features::FeatureSequence;
use crate::hmm::{Alignment, ClassHmm, HmmError, Lattice, ModelSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecognizeError {
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("no lexicon entry can align {frames} frames")]
    AllImpossible { frames: usize },
    #[error("lexicon entry {character} uses class {class}, which has no model")]
    UnknownClass { character: String, class: String },
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

/// Recognizable characters and their class sequences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Self {
        Lexicon { entries }
    }

    pub fn from_schema(schema: &DecompositionSchema) -> Self {
        Self::new(schema.entries().clone())
    }

    pub fn insert(&mut self, character: impl Into<String>, classes: Vec<String>) {
        self.entries.insert(character.into(), classes);
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<String>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sub-lexicon of the entries accepted by `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(&str) -> bool) -> Lexicon {
        Lexicon::new(
            self.entries
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionResult {
    pub character_id: String,
    /// Viterbi log-likelihood λ of the winner.
    pub log_likelihood: f64,
    /// First frame of each class after the first in the winning entry.
    pub boundaries: Vec<usize>,
    /// Best entries by descending λ, ties by ascending character id.
    /// Unalignable entries are omitted.
    pub n_best: Vec<(String, f64)>,
}

/// Decoder over a trained model set and a lexicon.
#[derive(Debug, Clone, Copy)]
pub struct Recognizer<'a> {
    models: &'a ModelSet,
    lexicon: &'a Lexicon,
}

impl<'a> Recognizer<'a> {
    pub fn new(models: &'a ModelSet, lexicon: &'a Lexicon) -> Result<Self, RecognizeError> {
        if lexicon.is_empty() {
            return Err(RecognizeError::EmptyLexicon);
        }
        for (ch, classes) in lexicon.entries() {
            if classes.is_empty() {
                return Err(RecognizeError::UnknownClass {
                    character: ch.clone(),
                    class: String::new(),
                });
            }
            if let Some(c) = classes.iter().find(|c| models.get(c).is_none()) {
                return Err(RecognizeError::UnknownClass {
                    character: ch.clone(),
                    class: c.clone(),
                });
            }
        }
        Ok(Recognizer { models, lexicon })
    }

    pub fn lexicon(&self) -> &Lexicon {
        self.lexicon
    }

    fn decode_all(
        &self,
        obs: &FeatureSequence,
    ) -> Result<Vec<(&'a str, Option<Alignment>)>, RecognizeError> {
        let dim = self.models.iter().next().map_or(obs.dim(), ClassHmm::dim);
        if obs.dim() != dim {
            return Err(HmmError::DimensionMismatch {
                expected: dim,
                found: obs.dim(),
            }
            .into());
        }
        if obs.is_empty() {
            return Err(HmmError::EmptySequence.into());
        }
        // Each class's emission scores are shared by every entry using it.
        let mut emissions: HashMap<&str, Vec<f64>> = HashMap::new();
        for classes in self.lexicon.entries().values() {
            for c in classes {
                if !emissions.contains_key(c.as_str()) {
                    let model = self.models.get(c).expect("checked in new");
                    emissions.insert(c.as_str(), class_emissions(model, obs));
                }
            }
        }
        let mut out = Vec::with_capacity(self.lexicon.len());
        for (ch, classes) in self.lexicon.entries() {
            let composite = self.models.composite(classes)?;
            let per_part: Vec<&[f64]> = classes
                .iter()
                .map(|c| emissions[c.as_str()].as_slice())
                .collect();
            let lattice = Lattice::from_part_emissions(&composite, obs.len(), &per_part);
            let alignment = match lattice.viterbi() {
                Ok(a) => Some(a),
                Err(HmmError::ImpossiblePath { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            out.push((ch.as_str(), alignment));
        }
        Ok(out)
    }

    /// Viterbi score of every entry; unalignable entries score `-inf`.
    pub fn score_all(
        &self,
        obs: &FeatureSequence,
    ) -> Result<BTreeMap<String, f64>, RecognizeError> {
        Ok(self
            .decode_all(obs)?
            .into_iter()
            .map(|(ch, a)| {
                (
                    ch.to_string(),
                    a.map_or(f64::NEG_INFINITY, |a| a.log_likelihood),
                )
            })
            .collect())
    }

    /// Best entry with its segmentation and the top `n_best` alternatives.
    pub fn recognize(
        &self,
        obs: &FeatureSequence,
        n_best: usize,
    ) -> Result<RecognitionResult, RecognizeError> {
        let mut scored: Vec<(&str, Alignment)> = self
            .decode_all(obs)?
            .into_iter()
            .filter_map(|(ch, a)| a.map(|a| (ch, a)))
            .collect();
        if scored.is_empty() {
            return Err(RecognizeError::AllImpossible { frames: obs.len() });
        }
        scored.sort_by(|a, b| {
            b.1.log_likelihood
                .total_cmp(&a.1.log_likelihood)
                .then_with(|| a.0.cmp(b.0))
        });
        let n_best = scored
            .iter()
            .take(n_best.max(1))
            .map(|(ch, a)| (ch.to_string(), a.log_likelihood))
            .collect();
        let (winner, alignment) = scored.swap_remove(0);
        Ok(RecognitionResult {
            character_id: winner.to_string(),
            log_likelihood: alignment.log_likelihood,
            boundaries: alignment.boundaries,
            n_best,
        })
    }
}

/// `T × S` emission log-densities of one class, row-major by frame.
fn class_emissions(model: &ClassHmm, obs: &FeatureSequence) -> Vec<f64> {
    let mut out = Vec::with_capacity(obs.len() * model.n_states());
    for frame in obs.frames() {
        for st in &model.states {
            out.push(st.mixture.log_density_unchecked(frame));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{viterbi, DiagonalGaussian, GaussianMixture, HmmState};

    fn class(id: &str, means: &[f64]) -> ClassHmm {
        let states = means
            .iter()
            .map(|&m| {
                let g = DiagonalGaussian::new(vec![m], vec![0.1]);
                HmmState::new(GaussianMixture::single(g), 0.5).unwrap()
            })
            .collect();
        ClassHmm::new(id, states).unwrap()
    }

    fn setup() -> (ModelSet, Lexicon) {
        let models: ModelSet = [class("a", &[0.0, 0.0]), class("b", &[5.0, 5.0])]
            .into_iter()
            .collect();
        let mut lex = Lexicon::default();
        lex.insert("A", vec!["a".into()]);
        lex.insert("B", vec!["b".into()]);
        lex.insert("AB", vec!["a".into(), "b".into()]);
        (models, lex)
    }

    fn seq(xs: &[f32]) -> FeatureSequence {
        FeatureSequence::new(1, xs.to_vec(), xs.len())
    }

    #[test]
    fn picks_concatenation_with_boundary() {
        let (models, lex) = setup();
        let r = Recognizer::new(&models, &lex).unwrap();
        let out = r
            .recognize(&seq(&[0.0, 0.1, 0.0, 5.0, 4.9, 5.1]), 3)
            .unwrap();
        assert_eq!(out.character_id, "AB");
        assert_eq!(out.boundaries, vec![3]);
        assert_eq!(out.n_best.len(), 3);
        assert!(out.n_best.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn singleton_lexicon_matches_viterbi() {
        let (models, _) = setup();
        let mut lex = Lexicon::default();
        lex.insert("A", vec!["a".into()]);
        let r = Recognizer::new(&models, &lex).unwrap();
        let obs = seq(&[0.2, -0.1, 0.3]);
        let out = r.recognize(&obs, 1).unwrap();
        let direct = viterbi(&models.get("a").unwrap().as_composite(), &obs).unwrap();
        assert_eq!(out.character_id, "A");
        assert_eq!(out.log_likelihood, direct.log_likelihood);
        assert_eq!(r.score_all(&obs).unwrap()["A"], direct.log_likelihood);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let (models, _) = setup();
        let mut lex = Lexicon::default();
        lex.insert("z", vec!["a".into()]);
        lex.insert("m", vec!["a".into()]);
        let r = Recognizer::new(&models, &lex).unwrap();
        let out = r.recognize(&seq(&[0.0, 0.0]), 2).unwrap();
        assert_eq!(out.character_id, "m");
        assert_eq!(out.n_best[1].0, "z");
    }

    #[test]
    fn short_input_ranks_impossible_entries_out() {
        let (models, lex) = setup();
        let r = Recognizer::new(&models, &lex).unwrap();
        let scores = r.score_all(&seq(&[0.0, 0.0])).unwrap();
        assert_eq!(scores["AB"], f64::NEG_INFINITY);
        let out = r.recognize(&seq(&[0.0, 0.0]), 5).unwrap();
        assert_eq!(out.n_best.len(), 2);
        assert!(matches!(
            r.recognize(&seq(&[0.0]), 1),
            Err(RecognizeError::AllImpossible { frames: 1 })
        ));
    }

    #[test]
    fn construction_errors() {
        let (models, _) = setup();
        let empty = Lexicon::default();
        assert!(matches!(
            Recognizer::new(&models, &empty),
            Err(RecognizeError::EmptyLexicon)
        ));
        let mut lex = Lexicon::default();
        lex.insert("C", vec!["c".into()]);
        assert!(matches!(
            Recognizer::new(&models, &lex),
            Err(RecognizeError::UnknownClass { .. })
        ));
    }

    #[test]
    fn adding_entries_leaves_scores_alone() {
        let (models, lex) = setup();
        let obs = seq(&[0.0, 0.3, 4.0, 5.0, 5.0]);
        let small = lex.restrict(|c| c != "AB");
        let full = Recognizer::new(&models, &lex)
            .unwrap()
            .score_all(&obs)
            .unwrap();
        let part = Recognizer::new(&models, &small)
            .unwrap()
            .score_all(&obs)
            .unwrap();
        for (k, v) in &part {
            assert_eq!(full[k], *v);
        }
    }
}

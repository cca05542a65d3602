//! Offline recognition of isolated handwritten characters of an
//! agglutinative script.
//!
//! A character image becomes a left-to-right sequence of gradient-orientation
//! histogram frames ([`features`]). Each character is modeled as a chain of
//! simpler class HMMs ([`hmm`]) following a decomposition schema
//! ([`dataset`]); the class models are trained with embedded Baum-Welch from
//! character labels alone, and decoding picks the lexicon entry with the best
//! Viterbi score, whose backtrace also yields the class boundaries
//! ([`recognizer`]). [`harness`] runs the experiment protocol and
//! [`oracle`] holds brute-force references and synthetic data.

pub mod dataset;
pub mod features;
pub mod harness;
pub mod hmm;
pub mod oracle;
pub mod recognizer;

pub use dataset::{BinaryImage, DecompositionSchema, Sample, SplitPlan, SplitSizes};
pub use features::{extract_features, FeatureConfig, FeatureSequence, WeightMode};
pub use hmm::{ClassHmm, CompositeHmm, GaussianMixture, ModelSet, TrainConfig, TrainingSchedule};
pub use recognizer::{Lexicon, RecognitionResult, Recognizer};

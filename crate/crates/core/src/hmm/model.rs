use std::collections::BTreeMap;

use super::gmm::GaussianMixture;
use super::HmmError;

/// One emitting state: its output mixture and its self-loop probability.
/// The complementary probability leaves the state, either to the next state
/// or, from the last state, through the exit junction.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmState {
    pub mixture: GaussianMixture,
    self_loop: f64,
}

impl HmmState {
    pub fn new(mixture: GaussianMixture, self_loop: f64) -> Result<Self, HmmError> {
        if !(0.0..=1.0).contains(&self_loop) {
            return Err(HmmError::InvalidModel(format!(
                "self-loop probability {self_loop} outside [0, 1]"
            )));
        }
        Ok(HmmState { mixture, self_loop })
    }

    pub fn self_loop(&self) -> f64 {
        self.self_loop
    }

    pub fn next(&self) -> f64 {
        1.0 - self.self_loop
    }

    pub(crate) fn set_self_loop(&mut self, p: f64) {
        debug_assert!((0.0..=1.0).contains(&p));
        self.self_loop = p;
    }
}

/// Left-to-right HMM for one class: states only loop or advance by one.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHmm {
    pub class_id: String,
    pub states: Vec<HmmState>,
}

impl ClassHmm {
    pub fn new(class_id: impl Into<String>, states: Vec<HmmState>) -> Result<Self, HmmError> {
        let class_id = class_id.into();
        if states.is_empty() {
            return Err(HmmError::InvalidModel(format!(
                "class {class_id} has no states"
            )));
        }
        let dim = states[0].mixture.dim();
        if states.iter().any(|s| s.mixture.dim() != dim) {
            return Err(HmmError::InvalidModel(format!(
                "class {class_id}: states differ in frame dimension"
            )));
        }
        if class_id.is_empty() || class_id.chars().any(char::is_whitespace) {
            return Err(HmmError::InvalidModel(format!(
                "invalid class id `{class_id}`"
            )));
        }
        Ok(ClassHmm { class_id, states })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].mixture.dim()
    }

    /// Largest mixture size across states.
    pub fn n_mixtures(&self) -> usize {
        self.states
            .iter()
            .map(|s| s.mixture.len())
            .max()
            .unwrap_or(0)
    }

    pub fn as_composite(&self) -> CompositeHmm<'_> {
        CompositeHmm { parts: vec![self] }
    }
}

/// Class models chained left to right: the exit of part `i` feeds the entry
/// of part `i + 1`.
#[derive(Debug, Clone)]
pub struct CompositeHmm<'a> {
    parts: Vec<&'a ClassHmm>,
}

impl<'a> CompositeHmm<'a> {
    pub fn new(parts: Vec<&'a ClassHmm>) -> Result<Self, HmmError> {
        let first = parts
            .first()
            .ok_or_else(|| HmmError::InvalidModel("composite has no parts".into()))?;
        if parts.iter().any(|p| p.dim() != first.dim()) {
            return Err(HmmError::InvalidModel(
                "composite parts differ in dimension".into(),
            ));
        }
        Ok(CompositeHmm { parts })
    }

    pub fn parts(&self) -> &[&'a ClassHmm] {
        &self.parts
    }

    pub fn n_emitting(&self) -> usize {
        self.parts.iter().map(|p| p.n_states()).sum()
    }

    pub fn dim(&self) -> usize {
        self.parts[0].dim()
    }

    /// `(part index, state within part)` for every emitting state in order.
    pub fn state_index(&self) -> Vec<(usize, usize)> {
        self.parts
            .iter()
            .enumerate()
            .flat_map(|(p, m)| (0..m.n_states()).map(move |s| (p, s)))
            .collect()
    }

    pub(crate) fn states(&self) -> impl Iterator<Item = &'a HmmState> + '_ {
        self.parts.iter().flat_map(|p| p.states.iter())
    }
}

/// Class models keyed by class id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSet {
    models: BTreeMap<String, ClassHmm>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: ClassHmm) -> Option<ClassHmm> {
        self.models.insert(model.class_id.clone(), model)
    }

    pub fn get(&self, class_id: &str) -> Option<&ClassHmm> {
        self.models.get(class_id)
    }

    pub fn get_mut(&mut self, class_id: &str) -> Option<&mut ClassHmm> {
        self.models.get_mut(class_id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassHmm> {
        self.models.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ClassHmm> {
        self.models.values_mut()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    /// Chains the named classes into a composite model.
    pub fn composite<S: AsRef<str>>(&self, class_ids: &[S]) -> Result<CompositeHmm<'_>, HmmError> {
        let parts = class_ids
            .iter()
            .map(|id| {
                self.get(id.as_ref())
                    .ok_or_else(|| HmmError::UnknownClass(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        CompositeHmm::new(parts)
    }
}

impl FromIterator<ClassHmm> for ModelSet {
    fn from_iter<I: IntoIterator<Item = ClassHmm>>(iter: I) -> Self {
        let mut set = ModelSet::new();
        for m in iter {
            set.insert(m);
        }
        set
    }
}

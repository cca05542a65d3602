//! Character → class-sequence decomposition.
//!
//! The schema is a tab-separated text file with three record kinds:
//!
//! ```text
//! # comment
//! C  <class_id>  <vowel|base|modifier|numeral>
//! E  <character_id>  <class_id>[,<class_id>]
//! X  <character_id>
//! ```
//!
//! An entry is either a single vowel, base or numeral class, or a base class
//! followed by one modifier (modifiers attach on the right).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassCategory {
    Vowel,
    Base,
    Modifier,
    Numeral,
}

impl ClassCategory {
    pub const ALL: [ClassCategory; 4] = [
        ClassCategory::Vowel,
        ClassCategory::Base,
        ClassCategory::Modifier,
        ClassCategory::Numeral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassCategory::Vowel => "vowel",
            ClassCategory::Base => "base",
            ClassCategory::Modifier => "modifier",
            ClassCategory::Numeral => "numeral",
        }
    }
}

impl fmt::Display for ClassCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vowel" => Ok(ClassCategory::Vowel),
            "base" => Ok(ClassCategory::Base),
            "modifier" => Ok(ClassCategory::Modifier),
            "numeral" => Ok(ClassCategory::Numeral),
            other => Err(format!("unknown class category `{other}`")),
        }
    }
}

/// Inventory sizes a schema must match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InventoryRules {
    pub vowels: usize,
    pub bases: usize,
    pub modifiers: usize,
    pub numerals: usize,
    pub entries: usize,
    /// Size of the full character set, entries plus exclusions.
    pub dataset_characters: usize,
}

impl InventoryRules {
    /// 13 vowels, 34 consonants × 8 base forms, 5 modifiers, 10 numerals;
    /// 569 of the 657 dataset characters are covered.
    pub fn kannada() -> Self {
        InventoryRules {
            vowels: 13,
            bases: 34 * 8,
            modifiers: 5,
            numerals: 10,
            entries: 569,
            dataset_characters: 657,
        }
    }

    pub fn total_classes(&self) -> usize {
        self.vowels + self.bases + self.modifiers + self.numerals
    }

    fn expected(&self, category: ClassCategory) -> usize {
        match category {
            ClassCategory::Vowel => self.vowels,
            ClassCategory::Base => self.bases,
            ClassCategory::Modifier => self.modifiers,
            ClassCategory::Numeral => self.numerals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionSchema {
    classes: BTreeMap<String, ClassCategory>,
    entries: BTreeMap<String, Vec<String>>,
    excluded: BTreeSet<String>,
}

impl DecompositionSchema {
    /// Parses schema text and checks the structural invariants (sequence
    /// shape, dangling references, duplicates). Inventory counts are not
    /// checked here; see [`DecompositionSchema::check_inventory`].
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut classes = BTreeMap::new();
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut excluded = BTreeSet::new();
        // Entries are checked after all classes are known.
        let mut raw_entries = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| DatasetError::SchemaSyntax {
                line: line_no,
                message: msg.to_string(),
            };
            match fields.as_slice() {
                ["C", id, cat] => {
                    let cat: ClassCategory = cat.parse().map_err(|m: String| bad(&m))?;
                    check_identifier(id).map_err(|m| bad(&m))?;
                    if classes.insert(id.to_string(), cat).is_some() {
                        return Err(DatasetError::DuplicateClass(id.to_string()));
                    }
                }
                ["E", id, seq] => {
                    check_identifier(id).map_err(|m| bad(&m))?;
                    let parts: Vec<String> = seq.split(',').map(|s| s.trim().to_string()).collect();
                    if parts.iter().any(|p| p.is_empty()) {
                        return Err(bad("empty class reference"));
                    }
                    raw_entries.push((id.to_string(), parts));
                }
                ["X", id] => {
                    check_identifier(id).map_err(|m| bad(&m))?;
                    if !excluded.insert(id.to_string()) {
                        return Err(DatasetError::DuplicateEntry(id.to_string()));
                    }
                }
                _ => return Err(bad("expected `C`, `E` or `X` record")),
            }
        }

        for (id, parts) in raw_entries {
            if entries.contains_key(&id) || excluded.contains(&id) {
                return Err(DatasetError::DuplicateEntry(id));
            }
            let mut cats = Vec::with_capacity(parts.len());
            for p in &parts {
                match classes.get(p) {
                    Some(c) => cats.push(*c),
                    None => {
                        return Err(DatasetError::DanglingClassRef {
                            character: id,
                            class: p.clone(),
                        })
                    }
                }
            }
            let shape_ok = matches!(
                cats.as_slice(),
                [ClassCategory::Vowel | ClassCategory::Base | ClassCategory::Numeral]
                    | [ClassCategory::Base, ClassCategory::Modifier]
            );
            if !shape_ok {
                return Err(DatasetError::BadSequenceShape(id));
            }
            entries.insert(id, parts);
        }

        Ok(DecompositionSchema {
            classes,
            entries,
            excluded,
        })
    }

    /// Checks category counts, entry count and total coverage against `rules`.
    pub fn check_inventory(&self, rules: &InventoryRules) -> Result<(), DatasetError> {
        for cat in ClassCategory::ALL {
            let found = self.classes.values().filter(|&&c| c == cat).count();
            let expected = rules.expected(cat);
            if found != expected {
                return Err(DatasetError::BadClassCount {
                    category: cat,
                    expected,
                    found,
                });
            }
        }
        if self.entries.len() != rules.entries {
            return Err(DatasetError::BadEntryCount {
                expected: rules.entries,
                found: self.entries.len(),
            });
        }
        let covered = self.entries.len() + self.excluded.len();
        if covered != rules.dataset_characters {
            return Err(DatasetError::BadCoverage {
                expected: rules.dataset_characters,
                found: covered,
            });
        }
        Ok(())
    }

    /// Builds a schema in which every character is its own class, tagged `base`.
    pub fn monolithic<I, S>(characters: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut classes = BTreeMap::new();
        let mut entries = BTreeMap::new();
        for ch in characters {
            let ch = ch.into();
            classes.insert(ch.clone(), ClassCategory::Base);
            entries.insert(ch.clone(), vec![ch]);
        }
        DecompositionSchema {
            classes,
            entries,
            excluded: BTreeSet::new(),
        }
    }

    pub fn classes(&self) -> &BTreeMap<String, ClassCategory> {
        &self.classes
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<String>> {
        &self.entries
    }

    pub fn excluded(&self) -> &BTreeSet<String> {
        &self.excluded
    }

    pub fn decompose(&self, character: &str) -> Option<&[String]> {
        self.entries.get(character).map(Vec::as_slice)
    }

    pub fn category_count(&self, category: ClassCategory) -> usize {
        self.classes.values().filter(|&&c| c == category).count()
    }

    /// Serializes back to the TSV format, sorted by identifier.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, cat) in &self.classes {
            out.push_str(&format!("C\t{id}\t{cat}\n"));
        }
        for (id, seq) in &self.entries {
            out.push_str(&format!("E\t{id}\t{}\n", seq.join(",")));
        }
        for id in &self.excluded {
            out.push_str(&format!("X\t{id}\n"));
        }
        out
    }
}

fn check_identifier(id: &str) -> Result<(), String> {
    if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == ',') {
        Err(format!("invalid identifier `{id}`"))
    } else {
        Ok(())
    }
}

/// Reads a schema file and validates it against the Kannada inventory.
pub fn validate_schema(path: &Path) -> Result<DecompositionSchema, DatasetError> {
    validate_schema_with(path, &InventoryRules::kannada())
}

pub fn validate_schema_with(
    path: &Path,
    rules: &InventoryRules,
) -> Result<DecompositionSchema, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let schema = DecompositionSchema::parse(&text)?;
    schema.check_inventory(rules)?;
    Ok(schema)
}

//! Character-image datasets: loading, the class-decomposition schema, and
//! train/validation/test splitting.

mod image;
mod schema;
mod split;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use self::image::BinaryImage;
pub use self::schema::{
    validate_schema, validate_schema_with, ClassCategory, DecompositionSchema, InventoryRules,
};
pub use self::split::{make_splits, SplitPlan, SplitSizes};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset directory missing or empty: {0}")]
    MissingDirectory(PathBuf),
    #[error("cannot read image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },
    #[error("character {character}: expected {expected} samples, found {found}")]
    CountMismatch {
        character: String,
        expected: usize,
        found: usize,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    ManifestSyntax { line: usize, message: String },
    #[error("schema line {line}: {message}")]
    SchemaSyntax { line: usize, message: String },
    #[error("{category} classes: expected {expected}, found {found}")]
    BadClassCount {
        category: ClassCategory,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} schema entries, found {found}")]
    BadEntryCount { expected: usize, found: usize },
    #[error("entries plus exclusions cover {found} characters, expected {expected}")]
    BadCoverage { expected: usize, found: usize },
    #[error("character {character} references unknown class {class}")]
    DanglingClassRef { character: String, class: String },
    #[error("duplicate schema entry for {0}")]
    DuplicateEntry(String),
    #[error("duplicate class {0}")]
    DuplicateClass(String),
    #[error("character {0}: sequence must be one vowel/base/numeral, or base then modifier")]
    BadSequenceShape(String),
    #[error("infeasible split plan: {0}")]
    InfeasiblePlan(String),
}

/// One labeled character image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub image: BinaryImage,
    pub character_id: String,
    /// Position of the sample within its character directory.
    pub writer_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    /// Portable bitmap/graymap/pixmap.
    Pnm,
}

impl ImageFormat {
    fn matches(self, path: &Path) -> bool {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        matches!(
            (self, ext.as_deref()),
            (ImageFormat::Png, Some("png"))
                | (ImageFormat::Pnm, Some("pbm" | "pgm" | "ppm" | "pnm"))
        )
    }

    fn as_str(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Pnm => "pnm",
        }
    }
}

/// Dataset descriptor, stored as `manifest.tsv` at the dataset root:
///
/// ```text
/// samples_per_character  25
/// image_format  png
/// character  <character_id>  <directory>
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub samples_per_character: usize,
    pub image_format: ImageFormat,
    /// `(character_id, directory relative to root)` in dataset order.
    pub characters: Vec<(String, String)>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut samples = None;
        let mut format = None;
        let mut characters = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |m: &str| DatasetError::ManifestSyntax {
                line: idx + 1,
                message: m.to_string(),
            };
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                ["samples_per_character", n] => {
                    samples = Some(n.parse().map_err(|_| bad("bad sample count"))?)
                }
                ["image_format", "png"] => format = Some(ImageFormat::Png),
                ["image_format", "pnm" | "pbm" | "pgm"] => format = Some(ImageFormat::Pnm),
                ["image_format", _] => return Err(bad("image_format must be png or pnm")),
                ["character", id, dir] => characters.push((id.to_string(), dir.to_string())),
                _ => return Err(bad("unrecognized manifest record")),
            }
        }
        let missing = |what: &str| DatasetError::ManifestSyntax {
            line: 0,
            message: format!("missing {what}"),
        };
        Ok(Manifest {
            samples_per_character: samples.ok_or_else(|| missing("samples_per_character"))?,
            image_format: format.ok_or_else(|| missing("image_format"))?,
            characters,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "samples_per_character\t{}\nimage_format\t{}\n",
            self.samples_per_character,
            self.image_format.as_str()
        );
        for (id, dir) in &self.characters {
            out.push_str(&format!("character\t{id}\t{dir}\n"));
        }
        out
    }

    /// Builds a manifest from the sorted subdirectories of `root`, using each
    /// directory name as the character identifier.
    pub fn discover(
        root: &Path,
        image_format: ImageFormat,
        samples_per_character: usize,
    ) -> Result<Self, DatasetError> {
        let entries = std::fs::read_dir(root)
            .map_err(|_| DatasetError::MissingDirectory(root.to_path_buf()))?;
        let mut dirs: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(DatasetError::MissingDirectory(root.to_path_buf()));
        }
        Ok(Manifest {
            samples_per_character,
            image_format,
            characters: dirs.into_iter().map(|d| (d.clone(), d)).collect(),
        })
    }
}

/// Samples grouped by character, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples_per_character: usize,
    pub groups: Vec<(String, Vec<Sample>)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.groups.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn character_ids(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|(id, _)| id.as_str())
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.groups.iter().flat_map(|(_, s)| s.iter())
    }

    /// Keeps only characters accepted by `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.groups.retain(|(id, _)| keep(id));
    }
}

/// Loads every character directory named in `manifest`. Image files are
/// ordered by file name; the position becomes the sample's writer index.
pub fn load_dataset(root: &Path, manifest: &Manifest) -> Result<Dataset, DatasetError> {
    let non_empty = std::fs::read_dir(root)
        .map(|mut it| it.next().is_some())
        .unwrap_or(false);
    if !non_empty || manifest.characters.is_empty() {
        return Err(DatasetError::MissingDirectory(root.to_path_buf()));
    }
    let groups = manifest
        .characters
        .par_iter()
        .map(|(id, dir)| {
            let dir_path = root.join(dir);
            let listing = std::fs::read_dir(&dir_path)
                .map_err(|_| DatasetError::MissingDirectory(dir_path.clone()))?;
            let mut files: Vec<PathBuf> = listing
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.is_file() && manifest.image_format.matches(p))
                .collect();
            files.sort();
            if files.len() != manifest.samples_per_character {
                return Err(DatasetError::CountMismatch {
                    character: id.clone(),
                    expected: manifest.samples_per_character,
                    found: files.len(),
                });
            }
            let samples = files
                .iter()
                .enumerate()
                .map(|(i, path)| {
                    Ok(Sample {
                        image: BinaryImage::load(path)?,
                        character_id: id.clone(),
                        writer_index: i,
                    })
                })
                .collect::<Result<Vec<_>, DatasetError>>()?;
            Ok((id.clone(), samples))
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok(Dataset {
        samples_per_character: manifest.samples_per_character,
        groups,
    })
}

/// Writes `dataset` to `root` in the layout [`load_dataset`] reads, as PBM files.
pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<Manifest, DatasetError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e| DatasetError::Io { path, source: e }
    };
    let mut characters = Vec::new();
    for (id, samples) in &dataset.groups {
        let dir = root.join(id);
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        for s in samples {
            let path = dir.join(format!("{:03}.pbm", s.writer_index));
            s.image.save_pbm(&path).map_err(io(&path))?;
        }
        characters.push((id.clone(), id.clone()));
    }
    let manifest = Manifest {
        samples_per_character: dataset.samples_per_character,
        image_format: ImageFormat::Pnm,
        characters,
    };
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_text()).map_err(io(&path))?;
    Ok(manifest)
}

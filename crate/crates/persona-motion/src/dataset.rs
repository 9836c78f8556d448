//! Clip annotations and dataset manifests.
//!
//! A clip is annotated `Content_Style_Number` — motion category, style
//! subject, and a 1-based take number printed with at least two digits
//! (`Walk_Trump_05`). A manifest is a JSON array of
//! `{"name", "pose_path", "frames"}` entries; pose paths are resolved
//! relative to the manifest's directory. Validation never throws on bad
//! data — it returns a report listing every problem it found.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{load_pose, PoseIoError};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("annotation {name:?} must have exactly 3 fields separated by '_', found {found}")]
    FieldCount { name: String, found: usize },
    #[error("annotation {name:?}: {field} field must be nonempty ASCII alphanumeric")]
    BadField { name: String, field: &'static str },
    #[error("annotation {name:?}: number field {value:?} must be a positive integer")]
    BadNumber { name: String, value: String },
}

#[derive(Debug, Error)]
pub enum ManifestIoError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
}

/// Parsed `Content_Style_Number` clip annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub content: String,
    pub style: String,
    pub number: u32,
}

impl Annotation {
    pub fn parse(name: &str) -> Result<Self, AnnotationError> {
        let fields: Vec<&str> = name.split('_').collect();
        if fields.len() != 3 {
            return Err(AnnotationError::FieldCount {
                name: name.to_string(),
                found: fields.len(),
            });
        }
        let check = |value: &str, field: &'static str| -> Result<(), AnnotationError> {
            if value.is_empty() || !value.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(AnnotationError::BadField {
                    name: name.to_string(),
                    field,
                });
            }
            Ok(())
        };
        check(fields[0], "content")?;
        check(fields[1], "style")?;
        let number: u32 = fields[2].parse().map_err(|_| AnnotationError::BadNumber {
            name: name.to_string(),
            value: fields[2].to_string(),
        })?;
        if number == 0 {
            return Err(AnnotationError::BadNumber {
                name: name.to_string(),
                value: fields[2].to_string(),
            });
        }
        Ok(Annotation {
            content: fields[0].to_string(),
            style: fields[1].to_string(),
            number,
        })
    }
}

impl fmt::Display for Annotation {
    /// Canonical form: number zero-padded to at least two digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{:02}", self.content, self.style, self.number)
    }
}

/// One manifest row. `frames` is the declared clip length; validation
/// checks it against the pose file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub pose_path: String,
    pub frames: usize,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, ManifestIoError> {
    if !path.exists() {
        return Err(ManifestIoError::NotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ManifestIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ManifestIoError::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Expected aggregate counts; `None` skips that check.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpectedCounts {
    pub styles: Option<usize>,
    pub contents: Option<usize>,
    pub total_frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvalidAnnotation {
    pub index: usize,
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DuplicateName {
    pub name: String,
    pub first_index: usize,
    pub second_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingFile {
    pub index: usize,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnreadableFile {
    pub index: usize,
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameMismatch {
    pub index: usize,
    pub name: String,
    pub declared: usize,
    pub actual: usize,
}

/// Everything `validate_manifest` found. `valid` is true iff every problem
/// list is empty.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub entries: usize,
    pub styles: usize,
    pub contents: usize,
    pub total_frames: usize,
    pub invalid_annotations: Vec<InvalidAnnotation>,
    pub duplicates: Vec<DuplicateName>,
    pub missing_files: Vec<MissingFile>,
    pub unreadable_files: Vec<UnreadableFile>,
    pub frame_mismatches: Vec<FrameMismatch>,
    pub expectation_failures: Vec<String>,
    pub valid: bool,
}

/// Resolves a manifest-relative pose path (absolute paths pass through).
pub fn resolve_pose_path(base_dir: &Path, pose_path: &str) -> PathBuf {
    base_dir.join(pose_path)
}

/// Checks annotations, duplicate names, pose files, declared frame counts,
/// and optional aggregate expectations. Collects problems instead of
/// failing on the first one.
pub fn validate_manifest(
    entries: &[ManifestEntry],
    base_dir: &Path,
    expected: &ExpectedCounts,
) -> ValidationReport {
    let mut invalid_annotations = Vec::new();
    let mut duplicates = Vec::new();
    let mut missing_files = Vec::new();
    let mut unreadable_files = Vec::new();
    let mut frame_mismatches = Vec::new();

    let mut styles = std::collections::BTreeSet::new();
    let mut contents = std::collections::BTreeSet::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total_frames = 0usize;

    for (index, entry) in entries.iter().enumerate() {
        total_frames += entry.frames;
        match Annotation::parse(&entry.name) {
            Ok(ann) => {
                styles.insert(ann.style);
                contents.insert(ann.content);
            }
            Err(e) => invalid_annotations.push(InvalidAnnotation {
                index,
                name: entry.name.clone(),
                error: e.to_string(),
            }),
        }
        if let Some(&first_index) = seen.get(entry.name.as_str()) {
            duplicates.push(DuplicateName {
                name: entry.name.clone(),
                first_index,
                second_index: index,
            });
        } else {
            seen.insert(&entry.name, index);
        }
        let path = resolve_pose_path(base_dir, &entry.pose_path);
        match load_pose(&path) {
            Err(PoseIoError::NotFound(p)) => missing_files.push(MissingFile { index, path: p }),
            Err(e) => unreadable_files.push(UnreadableFile {
                index,
                path: path.display().to_string(),
                error: e.to_string(),
            }),
            Ok(pose) => {
                if pose.frame_count() != entry.frames {
                    frame_mismatches.push(FrameMismatch {
                        index,
                        name: entry.name.clone(),
                        declared: entry.frames,
                        actual: pose.frame_count(),
                    });
                }
            }
        }
    }

    let mut expectation_failures = Vec::new();
    let mut expect = |label: &str, want: Option<usize>, got: usize| {
        if let Some(want) = want {
            if want != got {
                expectation_failures.push(format!("expected {} {}, found {}", want, label, got));
            }
        }
    };
    expect("styles", expected.styles, styles.len());
    expect("contents", expected.contents, contents.len());
    expect("total frames", expected.total_frames, total_frames);

    let valid = invalid_annotations.is_empty()
        && duplicates.is_empty()
        && missing_files.is_empty()
        && unreadable_files.is_empty()
        && frame_mismatches.is_empty()
        && expectation_failures.is_empty();
    ValidationReport {
        entries: entries.len(),
        styles: styles.len(),
        contents: contents.len(),
        total_frames,
        invalid_annotations,
        duplicates,
        missing_files,
        unreadable_files,
        frame_mismatches,
        expectation_failures,
        valid,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelCount {
    pub label: String,
    pub clips: usize,
    pub frames: usize,
}

/// Aggregate clip/frame counts, with per-label tables in lexicographic
/// order.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub clips: usize,
    pub total_frames: usize,
    pub styles: usize,
    pub contents: usize,
    pub per_content: Vec<LabelCount>,
    pub per_style: Vec<LabelCount>,
}

/// Summarizes a manifest; fails on the first unparseable annotation.
pub fn summarize(entries: &[ManifestEntry]) -> Result<DatasetSummary, AnnotationError> {
    let mut per_content: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut per_style: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut total_frames = 0usize;
    for entry in entries {
        let ann = Annotation::parse(&entry.name)?;
        let c = per_content.entry(ann.content).or_insert((0, 0));
        c.0 += 1;
        c.1 += entry.frames;
        let s = per_style.entry(ann.style).or_insert((0, 0));
        s.0 += 1;
        s.1 += entry.frames;
        total_frames += entry.frames;
    }
    let to_counts = |m: BTreeMap<String, (usize, usize)>| {
        m.into_iter()
            .map(|(label, (clips, frames))| LabelCount {
                label,
                clips,
                frames,
            })
            .collect::<Vec<_>>()
    };
    let per_content = to_counts(per_content);
    let per_style = to_counts(per_style);
    Ok(DatasetSummary {
        clips: entries.len(),
        total_frames,
        styles: per_style.len(),
        contents: per_content.len(),
        per_content,
        per_style,
    })
}

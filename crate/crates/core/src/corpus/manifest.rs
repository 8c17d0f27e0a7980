use std::fmt::Write as _;
use std::path::Path;

use super::Task;
use crate::error::CorpusError;

/// Which target of a parallel utterance was produced by a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoSource {
    VerbatimIsPseudo,
    SubtitleIsPseudo,
}

impl PseudoSource {
    fn as_str(self) -> &'static str {
        match self {
            PseudoSource::VerbatimIsPseudo => "pseudo=verbatim",
            PseudoSource::SubtitleIsPseudo => "pseudo=subtitle",
        }
    }
}

/// One manifest line: `id<TAB>feature_path<TAB>task<TAB>verbatim<TAB>subtitle`
/// with empty fields for absent targets. Pseudo-labeled manifests append a
/// sixth provenance column. Feature paths are relative to the manifest's
/// directory.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub id: String,
    pub feature_path: String,
    pub task: Task,
    pub verbatim: Option<String>,
    pub subtitle: Option<String>,
    pub pseudo: Option<PseudoSource>,
}

impl ManifestEntry {
    /// Spec invariant: targets present exactly as the task tag demands.
    pub fn validate(&self) -> Result<(), String> {
        let v = self.verbatim.as_deref().map_or(false, |s| !s.is_empty());
        let s = self.subtitle.as_deref().map_or(false, |s| !s.is_empty());
        let ok = match self.task {
            Task::Verbatim => v && !s,
            Task::Subtitled => s && !v,
            Task::Parallel => v && s,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("task {} inconsistent with targets (verbatim: {v}, subtitle: {s})", self.task.as_str()))
        }
    }
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for e in entries {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}{}",
            e.id,
            e.feature_path,
            e.task.as_str(),
            e.verbatim.as_deref().unwrap_or(""),
            e.subtitle.as_deref().unwrap_or(""),
            match e.pseudo {
                Some(p) => format!("\t{}", p.as_str()),
                None => String::new(),
            }
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 5 || fields.len() > 6 {
            return Err(CorpusError::MalformedManifest {
                line: i + 1,
                reason: format!("expected 5 or 6 tab-separated fields, got {}", fields.len()),
            });
        }
        let task = Task::parse(fields[2]).ok_or_else(|| CorpusError::MalformedManifest {
            line: i + 1,
            reason: format!("unknown task {:?}", fields[2]),
        })?;
        let opt = |s: &str| if s.is_empty() { None } else { Some(s.to_string()) };
        let pseudo = match fields.get(5) {
            None => None,
            Some(&"pseudo=verbatim") => Some(PseudoSource::VerbatimIsPseudo),
            Some(&"pseudo=subtitle") => Some(PseudoSource::SubtitleIsPseudo),
            Some(other) => {
                return Err(CorpusError::MalformedManifest {
                    line: i + 1,
                    reason: format!("unknown provenance column {other:?}"),
                })
            }
        };
        let entry = ManifestEntry {
            id: fields[0].to_string(),
            feature_path: fields[1].to_string(),
            task,
            verbatim: opt(fields[3]),
            subtitle: opt(fields[4]),
            pseudo,
        };
        entry.validate().map_err(|reason| CorpusError::MalformedManifest { line: i + 1, reason })?;
        entries.push(entry);
    }
    Ok(entries)
}

//! Dataset manifest.
//!
//! Text layout: `#` comments, an optional `basis = <dir>` line, the header
//! `utterance_id,audio,depth,landmarks,labels,split`, then one row per
//! utterance. `-` marks a missing modality. Relative paths are resolved
//! against the manifest's directory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const HEADER: &str = "utterance_id,audio,depth,landmarks,labels,split";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::format("manifest", format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub audio: PathBuf,
    pub depth: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    /// Directory holding the blendshape basis, needed for fitting.
    pub basis: Option<PathBuf>,
    pub entries: Vec<ManifestEntry>,
}

fn optional(cell: &str) -> Option<PathBuf> {
    (cell != "-" && !cell.is_empty()).then(|| PathBuf::from(cell))
}

fn cell(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("-".into(), |p| p.display().to_string())
}

impl Manifest {
    /// Parses without touching the filesystem; paths stay as written.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::format("manifest", m);
        let mut m = Manifest::default();
        let mut seen_header = false;
        let mut ids = HashSet::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            if !seen_header {
                if let Some((k, v)) = line.split_once('=') {
                    if k.trim() == "basis" {
                        m.basis = Some(PathBuf::from(v.trim()));
                        continue;
                    }
                }
                if line.replace(' ', "") != HEADER {
                    return Err(bad(format!("expected header {HEADER:?}, got {line:?}")));
                }
                seen_header = true;
                continue;
            }
            let c: Vec<&str> = line.split(',').map(str::trim).collect();
            if c.len() != 6 {
                return Err(bad(format!("expected 6 columns: {line:?}")));
            }
            if c[0].is_empty() || !ids.insert(c[0].to_string()) {
                return Err(bad(format!("empty or duplicate utterance id {:?}", c[0])));
            }
            m.entries.push(ManifestEntry {
                id: c[0].to_string(),
                audio: PathBuf::from(c[1]),
                depth: optional(c[2]),
                landmarks: optional(c[3]),
                labels: optional(c[4]),
                split: Split::parse(c[5])?,
            });
        }
        if !seen_header {
            return Err(bad("missing header".into()));
        }
        Ok(m)
    }

    pub fn to_text(&self, provenance: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(p) = provenance {
            writeln!(s, "# {p}").unwrap();
        }
        if let Some(b) = &self.basis {
            writeln!(s, "basis = {}", b.display()).unwrap();
        }
        writeln!(s, "{HEADER}").unwrap();
        for e in &self.entries {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                e.id,
                e.audio.display(),
                cell(&e.depth),
                cell(&e.landmarks),
                cell(&e.labels),
                e.split.as_str()
            )
            .unwrap();
        }
        s
    }

    /// Resolves relative paths against `dir`.
    pub fn resolved(mut self, dir: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(b) = &mut self.basis {
            fix(b);
        }
        for e in &mut self.entries {
            fix(&mut e.audio);
            for p in [&mut e.depth, &mut e.landmarks, &mut e.labels]
                .into_iter()
                .flatten()
            {
                fix(p);
            }
        }
        self
    }

    /// Reads, resolves paths and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let m = Self::parse(&text)?.resolved(dir);
        m.check_files()?;
        Ok(m)
    }

    pub fn check_files(&self) -> Result<()> {
        let missing = |p: &Path| {
            Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "referenced by manifest"),
            )
        };
        if let Some(b) = &self.basis {
            if !b.is_dir() {
                return Err(missing(b));
            }
        }
        for e in &self.entries {
            let all = [
                Some(&e.audio),
                e.depth.as_ref(),
                e.landmarks.as_ref(),
                e.labels.as_ref(),
            ];
            for p in all.into_iter().flatten() {
                if !p.is_file() {
                    return Err(missing(p).at_utterance(&e.id));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

//! Dataset manifests: one CSV row per sample with its tensor file, label and split.
//!
//! ```text
//! # optional comment lines
//! sample_id,tensor_path,label,split
//! s0000,tensors/s0000.atng,0,train
//! ```
//!
//! Relative tensor paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::parse_label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub tensor_path: PathBuf,
    pub label: u8,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative tensor paths resolve against.
    pub base_dir: PathBuf,
}

const HEADER: [&str; 4] = ["sample_id", "tensor_path", "label", "split"];

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.sample_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample_id {:?}", e.sample_id)));
            }
            if e.label > 1 {
                return Err(Error::Manifest(format!("label {} of {:?} is not binary", e.label, e.sample_id)));
            }
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.tensor_path.is_absolute() {
            entry.tensor_path.clone()
        } else {
            self.base_dir.join(&entry.tensor_path)
        }
    }

    /// Entries of one split, in manifest order. Errors when the split is empty.
    pub fn split(&self, split: Split) -> Result<Vec<&ManifestEntry>> {
        let picked: Vec<_> = self.entries.iter().filter(|e| e.split == split).collect();
        if picked.is_empty() {
            return Err(Error::Manifest(format!("split {split} has no entries")));
        }
        Ok(picked)
    }

    pub fn read_csv<R: Read>(input: R, base_dir: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = rdr.headers().map_err(|e| Error::Manifest(e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::Manifest(format!(
                "header must be {}",
                HEADER.join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Manifest(e.to_string()))?;
            let label = parse_label(&rec[2])
                .map_err(|e| Error::Manifest(format!("row {}: {e}", i + 1)))?;
            entries.push(ManifestEntry {
                sample_id: rec[0].to_string(),
                tensor_path: PathBuf::from(&rec[1]),
                label,
                split: rec[3].parse()?,
            });
        }
        Self::new(entries, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::read_csv(file, &base)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.sample_id.as_str(),
                &e.tensor_path.to_string_lossy(),
                &e.label.to_string(),
                &e.split.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file, comment).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "# model: bert-base-uncased\n\
                        sample_id,tensor_path,label,split\n\
                        a,t/a.atng,0,train\n\
                        b,/abs/b.atng,1,test\n";

    #[test]
    fn parses_and_resolves() {
        let m = Manifest::read_csv(TEXT.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/data/t/a.atng"));
        assert_eq!(m.resolve(&m.entries[1]), PathBuf::from("/abs/b.atng"));
        assert_eq!(m.split(Split::Train).unwrap().len(), 1);
        assert!(m.split(Split::Dev).is_err());
    }

    #[test]
    fn round_trip() {
        let m = Manifest::read_csv(TEXT.as_bytes(), Path::new("/data")).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, Some("note")).unwrap();
        assert!(buf.starts_with(b"# note\n"));
        assert_eq!(Manifest::read_csv(&buf[..], Path::new("/data")).unwrap(), m);
    }

    #[test]
    fn rejects_bad_rows() {
        let dup = "sample_id,tensor_path,label,split\na,x,0,train\na,y,1,train\n";
        assert!(Manifest::read_csv(dup.as_bytes(), Path::new(".")).is_err());
        let label = "sample_id,tensor_path,label,split\na,x,3,train\n";
        assert!(Manifest::read_csv(label.as_bytes(), Path::new(".")).is_err());
        let split = "sample_id,tensor_path,label,split\na,x,0,validation\n";
        assert!(Manifest::read_csv(split.as_bytes(), Path::new(".")).is_err());
        let header = "id,path,label,split\na,x,0,train\n";
        assert!(Manifest::read_csv(header.as_bytes(), Path::new(".")).is_err());
    }
}

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::Format(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub class_id: usize,
    /// Oracle SNR; `inf` when no noise was added.
    pub snr_db: f64,
    pub playback: bool,
    pub split: Split,
}

const HEADER: &str = "path\tclass_id\tsnr_db\tplayback\tsplit";

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for e in entries {
        let snr = if e.snr_db.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.3}", e.snr_db)
        };
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.path,
            e.class_id,
            snr,
            u8::from(e.playback),
            e.split
        ));
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (n == 0 && line == HEADER) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |what: &str| Error::Format(format!("manifest line {}: bad {what}", n + 1));
        if f.len() != 5 {
            return Err(bad("column count"));
        }
        out.push(ManifestEntry {
            path: f[0].to_string(),
            class_id: f[1].parse().map_err(|_| bad("class_id"))?,
            snr_db: f[2].parse().map_err(|_| bad("snr_db"))?,
            playback: match f[3] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("playback")),
            },
            split: f[4].parse()?,
        });
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

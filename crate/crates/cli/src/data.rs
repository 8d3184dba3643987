use std::path::{Path, PathBuf};

use ganvo_core::data::{Dataset, DatasetManifest};
use ganvo_core::training::SyntheticData;
use ganvo_core::{Error, Result};

/// Offset separating the synthetic sequences used for evaluation from the
/// training ones generated with the same seed.
pub const HELD_OUT_SEED_OFFSET: u64 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic,
    Dir(PathBuf),
}

impl DataSource {
    pub fn parse(arg: &str) -> Self {
        if arg == "synthetic" {
            DataSource::Synthetic
        } else {
            DataSource::Dir(PathBuf::from(arg))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

fn open_manifest(root: &Path) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Data(format!(
            "data directory {} does not exist",
            root.display()
        )));
    }
    if root.join(DatasetManifest::FILE_NAME).is_file() {
        DatasetManifest::open(root)
    } else {
        DatasetManifest::discover(root)
    }
}

/// Loads the requested sequences, or the split's sequences when none are
/// named. A directory without a test split evaluates every sequence.
pub fn load(
    source: &DataSource,
    split: Split,
    sequences: &[String],
    synthetic: &SyntheticData,
    seed: u64,
) -> Result<Dataset> {
    match source {
        DataSource::Synthetic => {
            let mut ds = synthetic.generate(seed)?;
            if !sequences.is_empty() {
                if let Some(missing) = sequences
                    .iter()
                    .find(|id| !ds.sequences.iter().any(|s| &s.id == *id))
                {
                    return Err(Error::Data(format!(
                        "no synthetic sequence {missing:?} (have {})",
                        ds.sequences
                            .iter()
                            .map(|s| s.id.as_str())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )));
                }
                ds.sequences.retain(|s| sequences.contains(&s.id));
            }
            Ok(ds)
        }
        DataSource::Dir(root) => {
            let manifest = open_manifest(root)?;
            let ids: Vec<String> = if !sequences.is_empty() {
                sequences.to_vec()
            } else {
                match split {
                    Split::Train if !manifest.train.is_empty() => manifest.train.clone(),
                    Split::Test if !manifest.test.is_empty() => manifest.test.clone(),
                    _ => manifest.all_ids().cloned().collect(),
                }
            };
            manifest.load_split(&ids)
        }
    }
}

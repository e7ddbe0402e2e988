//! Two-modality datasets: synthetic long-tailed generation, clip
//! preprocessing and feature-table files.

mod generate;
mod preprocess;
mod table;

pub use generate::{
    generate_synthetic, largest_remainder, render_sequence_pair, split_counts, zipf_class_sizes, GeneratorConfig,
    SyntheticWorld, SPLIT_PERCENT,
};
pub use preprocess::{
    preprocess_sequence, random_crop_clip, resize_keep_aspect, sample_clip, temporal_pool, Clip, CropWindow, Frame,
    FrameSequence, PreprocessConfig,
};
pub use table::{load_feature_table, read_manifest, write_feature_table, write_manifest, DatasetManifest};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Label;
use crate::model::Example;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Rgb,
    Depth,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Rgb, Modality::Depth];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }

    pub(crate) fn index(self) -> u64 {
        match self {
            Modality::Rgb => 0,
            Modality::Depth => 1,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sample: pooled features for both modalities, aligned by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord<T> {
    pub id: String,
    pub label: Label,
    pub split: Split,
    pub rgb: Vec<T>,
    pub depth: Vec<T>,
}

impl<T> SampleRecord<T> {
    pub fn features(&self, modality: Modality) -> &[T] {
        match modality {
            Modality::Rgb => &self.rgb,
            Modality::Depth => &self.depth,
        }
    }
}

/// Immutable dataset of pooled feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    num_classes: usize,
    feature_dim: usize,
    records: Vec<SampleRecord<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(num_classes: usize, feature_dim: usize, records: Vec<SampleRecord<T>>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Data(format!("dataset needs at least 2 classes, got {num_classes}")));
        }
        if feature_dim == 0 {
            return Err(Error::Data("feature width must be positive".into()));
        }
        let mut ids = HashSet::with_capacity(records.len());
        let mut in_train = vec![false; num_classes];
        for r in &records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id {}", r.id)));
            }
            if r.label.index() >= num_classes {
                return Err(Error::Data(format!("sample {} has label {} outside 0..{num_classes}", r.id, r.label.index())));
            }
            for m in Modality::ALL {
                let f = r.features(m);
                if f.len() != feature_dim {
                    return Err(Error::Shape(format!(
                        "sample {} {m} features have width {}, expected {feature_dim}",
                        r.id,
                        f.len()
                    )));
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("sample {} {m} features", r.id)));
                }
            }
            if r.split == Split::Train {
                in_train[r.label.index()] = true;
            }
        }
        if let Some(c) = in_train.iter().position(|&seen| !seen) {
            return Err(Error::Data(format!("class {c} has no training samples")));
        }
        Ok(Self {
            num_classes,
            feature_dim,
            records,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn records(&self) -> &[SampleRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Samples per class across all splits.
    pub fn class_counts(&self) -> Vec<usize> {
        self.class_counts_in(&Split::ALL)
    }

    pub fn class_counts_in(&self, splits: &[Split]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for r in self.records.iter().filter(|r| splits.contains(&r.split)) {
            counts[r.label.index()] += 1;
        }
        counts
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    /// Training views of one modality over the given splits, in dataset order.
    pub fn examples(&self, splits: &[Split], modality: Modality) -> Vec<Example<'_, T>> {
        self.records
            .iter()
            .filter(|r| splits.contains(&r.split))
            .map(|r| Example {
                id: &r.id,
                label: r.label,
                features: r.features(modality),
            })
            .collect()
    }
}

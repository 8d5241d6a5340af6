//! Per-image vectors to per-class embeddings.
//!
//! Pipeline order: threshold, image-stage normalization, aggregation,
//! class-stage normalization, group restriction. Images of a class are
//! aggregated in `image_id` order, so results do not depend on the order
//! of records in the input.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{ActivationRecord, ClassMap};
use crate::matrix::DistanceMatrix;
use crate::vector::{GroupSelection, LayerManifest, SparseActivationVector};

macro_rules! str_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), s
                    ))),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Arithmetic,
    Geometric,
    Harmonic,
}

str_enum!(Aggregation { Arithmetic => "arithmetic", Geometric => "geometric", Harmonic => "harmonic" });

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    #[default]
    Layer,
    Whole,
    None,
}

str_enum!(NormScope { Layer => "layer", Whole => "whole", None => "none" });

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormStage {
    Image,
    #[default]
    Class,
    None,
}

str_enum!(NormStage { Image => "image", Class => "class", None => "none" });

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

str_enum!(Metric { Cosine => "cosine", Euclidean => "euclidean" });

/// How class embeddings are built. The default is arithmetic mean,
/// per-layer normalization of the class vector, no threshold, all groups.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub aggregation: Aggregation,
    pub norm_scope: NormScope,
    pub norm_stage: NormStage,
    pub threshold: Option<f64>,
    pub groups: Option<Vec<String>>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.norm_scope == NormScope::None) != (self.norm_stage == NormStage::None) {
            return Err(Error::Config(format!(
                "normalization scope `{}` is incompatible with stage `{}` (both or neither must be `none`)",
                self.norm_scope, self.norm_stage
            )));
        }
        if let Some(t) = self.threshold {
            if t.is_nan() || t < 0.0 {
                return Err(Error::NegativeThreshold(t));
            }
        }
        Ok(())
    }

    fn normalize(&self, v: &SparseActivationVector) -> SparseActivationVector {
        match self.norm_scope {
            NormScope::Layer => v.normalize_by_layer(),
            NormScope::Whole => v.normalize_whole(),
            NormScope::None => v.clone(),
        }
    }

    /// Threshold and image-stage normalization for a single image.
    pub fn prepare_image(&self, v: &SparseActivationVector) -> Result<SparseActivationVector> {
        let v = match self.threshold {
            Some(t) => v.apply_threshold(t)?,
            None => v.clone(),
        };
        Ok(if self.norm_stage == NormStage::Image {
            self.normalize(&v)
        } else {
            v
        })
    }

    /// Class-stage normalization and group restriction for an aggregated vector.
    pub fn finish_class(
        &self,
        v: &SparseActivationVector,
        selection: Option<&GroupSelection>,
    ) -> SparseActivationVector {
        let v = if self.norm_stage == NormStage::Class {
            self.normalize(v)
        } else {
            v.clone()
        };
        match selection {
            Some(sel) => v.restrict(sel),
            None => v,
        }
    }
}

/// Per-feature mean over all images; absent features count as zero.
///
/// Geometric and harmonic means are zero for any feature missing from at
/// least one image. Features whose values agree across all images keep
/// that value exactly.
pub fn aggregate(images: &[SparseActivationVector], mode: Aggregation) -> Result<SparseActivationVector> {
    let first = images.first().ok_or(Error::EmptyAggregation)?;
    for other in &images[1..] {
        first.ensure_same_manifest(other)?;
    }
    if images.len() == 1 {
        return Ok(first.clone());
    }
    let n = images.len();
    let nf = n as f64;

    let mut entries: Vec<(usize, f64)> = images.iter().flat_map(|v| v.iter()).collect();
    // stable: values of one feature stay in image order
    entries.sort_by_key(|e| e.0);

    let mut out = Vec::new();
    let mut start = 0;
    while start < entries.len() {
        let idx = entries[start].0;
        let end = start + entries[start..].partition_point(|e| e.0 == idx);
        let values = entries[start..end].iter().map(|e| e.1);
        let count = end - start;
        let first_value = entries[start].1;
        let mean = if count == n && entries[start..end].iter().all(|e| e.1 == first_value) {
            first_value
        } else {
            match mode {
                Aggregation::Arithmetic => values.sum::<f64>() / nf,
                _ if count < n => 0.0,
                Aggregation::Geometric => (values.map(f64::ln).sum::<f64>() / nf).exp(),
                Aggregation::Harmonic => nf / values.map(|v| 1.0 / v).sum::<f64>(),
            }
        };
        if mean > 0.0 {
            out.push((idx, mean));
        }
        start = end;
    }
    SparseActivationVector::from_global_entries(first.manifest().clone(), out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassEmbedding {
    pub class_id: String,
    pub synset_id: String,
    pub vector: SparseActivationVector,
    pub image_count: usize,
}

/// Class embeddings sorted by class id.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassEmbeddings {
    items: Vec<ClassEmbedding>,
    index: HashMap<String, usize>,
}

impl ClassEmbeddings {
    pub fn new(mut items: Vec<ClassEmbedding>) -> Result<Self> {
        items.sort_by(|a, b| a.class_id.cmp(&b.class_id));
        if let Some(w) = items.windows(2).find(|w| w[0].class_id == w[1].class_id) {
            return Err(Error::Duplicate(w[0].class_id.clone()));
        }
        if let Some(e) = items.iter().find(|e| e.image_count == 0) {
            return Err(Error::Config(format!("class `{}` has no images", e.class_id)));
        }
        let index = items.iter().enumerate().map(|(i, e)| (e.class_id.clone(), i)).collect();
        Ok(ClassEmbeddings { items, index })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ClassEmbedding> {
        self.items.iter()
    }

    pub fn as_slice(&self) -> &[ClassEmbedding] {
        &self.items
    }

    pub fn get(&self, class_id: &str) -> Option<&ClassEmbedding> {
        self.index.get(class_id).map(|&i| &self.items[i])
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.items.iter().map(|e| e.class_id.clone()).collect()
    }

    /// Same classes with every vector restricted to the selected groups.
    pub fn restrict(&self, selection: &GroupSelection) -> ClassEmbeddings {
        let items = self
            .items
            .iter()
            .map(|e| ClassEmbedding {
                vector: e.vector.restrict(selection),
                ..e.clone()
            })
            .collect();
        ClassEmbeddings {
            items,
            index: self.index.clone(),
        }
    }

    pub fn distance_matrix(&self, metric: Metric) -> Result<DistanceMatrix> {
        build_distance_matrix(self, metric)
    }
}

impl<'a> IntoIterator for &'a ClassEmbeddings {
    type Item = &'a ClassEmbedding;
    type IntoIter = std::slice::Iter<'a, ClassEmbedding>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// Run the full class-embedding pipeline over a stream of image records.
pub fn build_class_embeddings<I>(
    records: I,
    config: &PipelineConfig,
    class_map: &ClassMap,
    manifest: &Arc<LayerManifest>,
) -> Result<ClassEmbeddings>
where
    I: IntoIterator<Item = Result<ActivationRecord>>,
{
    config.validate()?;
    let selection = config.groups.as_ref().map(|g| manifest.select_groups(g)).transpose()?;
    let reference = SparseActivationVector::zeros(manifest.clone());

    let mut by_class: BTreeMap<String, Vec<(String, SparseActivationVector)>> = BTreeMap::new();
    for record in records {
        let record = record?;
        if class_map.synset_of(&record.class_id).is_none() {
            return Err(Error::UnknownClass(record.class_id));
        }
        reference.ensure_same_manifest(&record.vector)?;
        let prepared = config.prepare_image(&record.vector)?;
        by_class
            .entry(record.class_id)
            .or_default()
            .push((record.image_id, prepared));
    }

    let items = by_class
        .into_par_iter()
        .map(|(class_id, mut images)| {
            images.sort_by(|a, b| a.0.cmp(&b.0));
            if let Some(w) = images.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Duplicate(w[0].0.clone()));
            }
            let image_count = images.len();
            let vectors: Vec<SparseActivationVector> = images.into_iter().map(|(_, v)| v).collect();
            let mean = aggregate(&vectors, config.aggregation)?;
            let vector = config.finish_class(&mean, selection.as_ref());
            let synset_id = class_map.synset_of(&class_id).expect("checked above").to_string();
            Ok(ClassEmbedding {
                class_id,
                synset_id,
                vector,
                image_count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ClassEmbeddings::new(items)
}

/// Pairwise class distances, rows and columns in class-id order.
/// Cosine distance is `1 - cosine similarity`.
pub fn build_distance_matrix(embeddings: &ClassEmbeddings, metric: Metric) -> Result<DistanceMatrix> {
    let items = embeddings.as_slice();
    if metric == Metric::Cosine {
        if let Some(e) = items.iter().find(|e| e.vector.is_zero()) {
            return Err(Error::ZeroEmbedding(e.class_id.clone()));
        }
    }
    let rows = (0..items.len())
        .into_par_iter()
        .map(|i| {
            items[i + 1..]
                .iter()
                .map(|other| pair_distance(&items[i].vector, &other.vector, metric))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    DistanceMatrix::from_upper_rows(embeddings.class_ids(), rows)
}

pub fn pair_distance(a: &SparseActivationVector, b: &SparseActivationVector, metric: Metric) -> Result<f64> {
    Ok(match metric {
        Metric::Cosine => (1.0 - a.cosine_similarity(b)?).max(0.0),
        Metric::Euclidean => a.euclidean_distance(b)?,
    })
}

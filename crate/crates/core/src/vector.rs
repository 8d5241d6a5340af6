//! Sparse, layer-segmented activation vectors.
//!
//! Every vector is tied to a [`LayerManifest`], the ordered list of layers
//! that fixes the coordinate system. Coordinates are addressed globally
//! (`layer offset + feature index`) and stored as a sorted index/value pair
//! list, so each layer segment is a contiguous run of entries. All binary
//! operations are linear two-pointer merges over the stored entries.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One activation layer: a convolution output belonging to a named group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer {
    pub id: String,
    pub group: String,
    pub dim: usize,
}

impl Layer {
    pub fn new(id: impl Into<String>, group: impl Into<String>, dim: usize) -> Self {
        Layer {
            id: id.into(),
            group: group.into(),
            dim,
        }
    }
}

/// Ordered description of the activation layers.
#[derive(Clone, Debug)]
pub struct LayerManifest {
    layers: Vec<Layer>,
    offsets: Vec<usize>,
    groups: Vec<String>,
    by_id: HashMap<String, usize>,
    fingerprint: String,
}

impl PartialEq for LayerManifest {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Eq for LayerManifest {}

impl LayerManifest {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidManifest("no layers".into()));
        }
        let mut by_id = HashMap::with_capacity(layers.len());
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut groups: Vec<String> = Vec::new();
        let mut total = 0usize;
        let mut hasher = Sha256::new();
        for (i, layer) in layers.iter().enumerate() {
            if layer.id.is_empty() || layer.group.is_empty() {
                return Err(Error::InvalidManifest(format!(
                    "layer {} has an empty id or group",
                    i + 1
                )));
            }
            if layer.dim == 0 {
                return Err(Error::InvalidManifest(format!(
                    "layer `{}` has non-positive dimension",
                    layer.id
                )));
            }
            if by_id.insert(layer.id.clone(), i).is_some() {
                return Err(Error::InvalidManifest(format!("duplicate layer id `{}`", layer.id)));
            }
            if !groups.contains(&layer.group) {
                groups.push(layer.group.clone());
            }
            offsets.push(total);
            total = total
                .checked_add(layer.dim)
                .filter(|t| *t <= u32::MAX as usize)
                .ok_or_else(|| Error::InvalidManifest("total dimension overflows u32".into()))?;
            hasher.update(format!("{}\t{}\t{}\n", layer.id, layer.group, layer.dim).as_bytes());
        }
        offsets.push(total);
        let digest = hasher.finalize();
        let fingerprint = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(LayerManifest {
            layers,
            offsets,
            groups,
            by_id,
            fingerprint,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().expect("manifest has offsets")
    }

    /// Group tags in order of first appearance.
    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn layer_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Global coordinate range of a layer.
    pub fn layer_range(&self, layer: usize) -> Range<usize> {
        self.offsets[layer]..self.offsets[layer + 1]
    }

    /// Layer containing a global coordinate.
    pub fn layer_of(&self, global: usize) -> usize {
        debug_assert!(global < self.total_dim());
        self.offsets.partition_point(|&o| o <= global) - 1
    }

    /// Short content digest, used to identify manifests in diagnostics.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Resolve a set of group tags into a layer selection.
    pub fn select_groups<I, S>(&self, groups: I) -> Result<GroupSelection>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut selected = BTreeSet::new();
        for g in groups {
            let g = g.as_ref();
            if !self.groups.iter().any(|known| known == g) {
                return Err(Error::UnknownGroup(g.to_string()));
            }
            selected.insert(g.to_string());
        }
        let layer_mask = self.layers.iter().map(|l| selected.contains(&l.group)).collect();
        Ok(GroupSelection {
            groups: selected,
            layer_mask,
        })
    }

    pub fn select_all(&self) -> GroupSelection {
        self.select_groups(self.groups.iter())
            .expect("own groups are always known")
    }
}

impl fmt::Display for LayerManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} layers, {} dims)",
            self.fingerprint,
            self.layers.len(),
            self.total_dim()
        )
    }
}

/// A subset of a manifest's layer groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSelection {
    groups: BTreeSet<String>,
    layer_mask: Vec<bool>,
}

impl GroupSelection {
    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(String::as_str)
    }

    pub fn contains_layer(&self, layer: usize) -> bool {
        self.layer_mask[layer]
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Non-negative sparse activations over a layer manifest.
///
/// Stored entries are strictly positive and sorted by global index.
#[derive(Clone, Debug)]
pub struct SparseActivationVector {
    manifest: Arc<LayerManifest>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl PartialEq for SparseActivationVector {
    fn eq(&self, other: &Self) -> bool {
        same_manifest(&self.manifest, &other.manifest) && self.indices == other.indices && self.values == other.values
    }
}

fn same_manifest(a: &Arc<LayerManifest>, b: &Arc<LayerManifest>) -> bool {
    Arc::ptr_eq(a, b) || (a.fingerprint == b.fingerprint && a.layers == b.layers)
}

fn check_value(value: f64, what: impl FnOnce() -> String) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::InvalidEntry(format!(
            "{}: value {value} is not a finite non-negative number",
            what()
        )));
    }
    Ok(())
}

impl SparseActivationVector {
    pub fn zeros(manifest: Arc<LayerManifest>) -> Self {
        SparseActivationVector {
            manifest,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from `(layer, feature, value)` triplets in any order.
    ///
    /// Zero values are dropped. Out-of-range coordinates, duplicates and
    /// negative or non-finite values are rejected.
    pub fn from_layer_entries<I>(manifest: Arc<LayerManifest>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut global = Vec::new();
        for (layer, feature, value) in entries {
            let Some(l) = manifest.layers.get(layer) else {
                return Err(Error::InvalidEntry(format!("layer index {layer} out of range")));
            };
            if feature >= l.dim {
                return Err(Error::InvalidEntry(format!(
                    "feature index {feature} out of range for layer `{}` (dim {})",
                    l.id, l.dim
                )));
            }
            global.push((manifest.offsets[layer] + feature, value));
        }
        Self::from_global_entries(manifest, global)
    }

    /// Build from `(global index, value)` pairs in any order.
    pub fn from_global_entries<I>(manifest: Arc<LayerManifest>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let total = manifest.total_dim();
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for (index, value) in entries {
            if index >= total {
                return Err(Error::InvalidEntry(format!(
                    "global index {index} out of range (total dim {total})"
                )));
            }
            check_value(value, || format!("index {index}"))?;
            if value > 0.0 {
                pairs.push((index as u32, value));
            }
        }
        pairs.sort_unstable_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidEntry(format!("duplicate index {}", w[0].0)));
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(SparseActivationVector {
            manifest,
            indices,
            values,
        })
    }

    /// Entries must already be sorted, unique and strictly positive.
    pub(crate) fn from_sorted_parts(manifest: Arc<LayerManifest>, indices: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(values.iter().all(|v| *v > 0.0 && v.is_finite()));
        SparseActivationVector {
            manifest,
            indices,
            values,
        }
    }

    pub fn manifest(&self) -> &Arc<LayerManifest> {
        &self.manifest
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    /// `(global index, value)` pairs in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    /// `(layer, feature, value)` triplets in index order.
    pub fn layer_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let mut layer = 0usize;
        self.iter().map(move |(g, v)| {
            while g >= self.manifest.offsets[layer + 1] {
                layer += 1;
            }
            (layer, g - self.manifest.offsets[layer], v)
        })
    }

    pub fn get(&self, global: usize) -> f64 {
        match self.indices.binary_search(&(global as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn ensure_same_manifest(&self, other: &Self) -> Result<()> {
        if same_manifest(&self.manifest, &other.manifest) {
            Ok(())
        } else {
            Err(Error::ManifestMismatch {
                left: self.manifest.to_string(),
                right: other.manifest.to_string(),
            })
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.ensure_same_manifest(other)?;
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(sum)
    }

    /// Cosine similarity; in `[0, 1]` since entries are non-negative.
    pub fn cosine_similarity(&self, other: &Self) -> Result<f64> {
        self.ensure_same_manifest(other)?;
        if self.is_zero() || other.is_zero() {
            return Err(Error::ZeroVector);
        }
        let dot = self.dot(other)?;
        // sqrt(x * x) == x exactly, so identical vectors give exactly 1
        let denom = (self.squared_norm() * other.squared_norm()).sqrt();
        Ok((dot / denom).clamp(0.0, 1.0))
    }

    /// Euclidean norm of the true (unclamped) difference.
    pub fn euclidean_distance(&self, other: &Self) -> Result<f64> {
        self.ensure_same_manifest(other)?;
        let (a, b) = (self, other);
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < a.indices.len() || j < b.indices.len() {
            let d = if j >= b.indices.len() || (i < a.indices.len() && a.indices[i] < b.indices[j]) {
                i += 1;
                a.values[i - 1]
            } else if i >= a.indices.len() || b.indices[j] < a.indices[i] {
                j += 1;
                b.values[j - 1]
            } else {
                i += 1;
                j += 1;
                a.values[i - 1] - b.values[j - 1]
            };
            sum += d * d;
        }
        Ok(sum.sqrt())
    }

    /// Clamped difference: `self - other` where `self > other`, else zero.
    pub fn subtract(&self, other: &Self) -> Result<Self> {
        self.ensure_same_manifest(other)?;
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.indices.len());
        let mut j = 0;
        for (&idx, &v) in self.indices.iter().zip(&self.values) {
            while j < other.indices.len() && other.indices[j] < idx {
                j += 1;
            }
            let sub = if j < other.indices.len() && other.indices[j] == idx {
                other.values[j]
            } else {
                0.0
            };
            if v > sub {
                indices.push(idx);
                values.push(v - sub);
            }
        }
        Ok(Self::from_sorted_parts(self.manifest.clone(), indices, values))
    }

    /// Drop entries strictly below `threshold`; values equal to it are kept.
    pub fn apply_threshold(&self, threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::NegativeThreshold(threshold));
        }
        let (indices, values) = self
            .indices
            .iter()
            .zip(&self.values)
            .filter(|(_, &v)| v >= threshold)
            .map(|(&i, &v)| (i, v))
            .unzip();
        Ok(Self::from_sorted_parts(self.manifest.clone(), indices, values))
    }

    /// Rescale every non-zero layer segment to unit L2 norm.
    pub fn normalize_by_layer(&self) -> Self {
        let mut values = self.values.clone();
        let mut start = 0;
        while start < self.indices.len() {
            let layer = self.manifest.layer_of(self.indices[start] as usize);
            let end_index = self.manifest.offsets[layer + 1] as u32;
            let end = start + self.indices[start..].partition_point(|&i| i < end_index);
            scale_to_unit(&mut values[start..end]);
            start = end;
        }
        self.with_values(values)
    }

    /// Rescale the whole vector to unit L2 norm.
    pub fn normalize_whole(&self) -> Self {
        let mut values = self.values.clone();
        scale_to_unit(&mut values);
        self.with_values(values)
    }

    /// Multiply every entry by a non-negative finite factor.
    pub fn scale(&self, factor: f64) -> Result<Self> {
        check_value(factor, || "scale factor".to_string())?;
        if factor == 0.0 {
            return Ok(Self::zeros(self.manifest.clone()));
        }
        let values: Vec<f64> = self.values.iter().map(|v| v * factor).collect();
        if values.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidEntry(format!(
                "scaling by {factor} leaves the representable range"
            )));
        }
        Ok(self.with_values(values))
    }

    /// Keep only the coordinates of layers in the selected groups.
    pub fn restrict(&self, selection: &GroupSelection) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (pos, &idx) in self.indices.iter().enumerate() {
            if selection.contains_layer(self.manifest.layer_of(idx as usize)) {
                indices.push(idx);
                values.push(self.values[pos]);
            }
        }
        Self::from_sorted_parts(self.manifest.clone(), indices, values)
    }

    /// Restrict to a set of group tags.
    pub fn restrict_to_groups<I, S>(&self, groups: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let selection = self.manifest.select_groups(groups)?;
        Ok(self.restrict(&selection))
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self::from_sorted_parts(self.manifest.clone(), self.indices.clone(), values)
    }
}

fn scale_to_unit(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(dims: &[usize]) -> Arc<LayerManifest> {
        let layers = dims
            .iter()
            .enumerate()
            .map(|(i, &d)| Layer::new(format!("l{i}"), format!("g{}", i / 2), d))
            .collect();
        Arc::new(LayerManifest::new(layers).unwrap())
    }

    fn vec_of(m: &Arc<LayerManifest>, entries: &[(usize, f64)]) -> SparseActivationVector {
        SparseActivationVector::from_global_entries(m.clone(), entries.iter().copied()).unwrap()
    }

    fn dense(v: &SparseActivationVector) -> Vec<f64> {
        let mut d = vec![0.0; v.manifest().total_dim()];
        for (i, x) in v.iter() {
            d[i] = x;
        }
        d
    }

    #[test]
    fn manifest_rejects_bad_layers() {
        assert!(LayerManifest::new(vec![]).is_err());
        assert!(LayerManifest::new(vec![Layer::new("a", "g", 0)]).is_err());
        let dup = vec![Layer::new("a", "g", 1), Layer::new("a", "h", 2)];
        assert!(matches!(LayerManifest::new(dup), Err(Error::InvalidManifest(m)) if m.contains("duplicate")));
    }

    #[test]
    fn manifest_offsets() {
        let m = manifest(&[3, 2, 4]);
        assert_eq!(m.total_dim(), 9);
        assert_eq!(m.layer_range(1), 3..5);
        assert_eq!(m.layer_of(0), 0);
        assert_eq!(m.layer_of(3), 1);
        assert_eq!(m.layer_of(8), 2);
        assert_eq!(m.groups(), &["g0".to_string(), "g1".to_string()]);
    }

    #[test]
    fn construction_validates_entries() {
        let m = manifest(&[2, 2]);
        assert!(SparseActivationVector::from_layer_entries(m.clone(), [(0, 2, 1.0)]).is_err());
        assert!(SparseActivationVector::from_layer_entries(m.clone(), [(2, 0, 1.0)]).is_err());
        assert!(SparseActivationVector::from_global_entries(m.clone(), [(0, -1.0)]).is_err());
        assert!(SparseActivationVector::from_global_entries(m.clone(), [(0, f64::NAN)]).is_err());
        assert!(SparseActivationVector::from_global_entries(m.clone(), [(1, 1.0), (1, 2.0)]).is_err());
        let v = SparseActivationVector::from_layer_entries(m, [(1, 1, 2.0), (0, 0, 0.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(v.iter().collect::<Vec<_>>(), vec![(1, 1.0), (3, 2.0)]);
        assert_eq!(v.layer_entries().collect::<Vec<_>>(), vec![(0, 1, 1.0), (1, 1, 2.0)]);
    }

    #[test]
    fn dot_examples() {
        let m = manifest(&[4]);
        let a = vec_of(&m, &[(0, 2.0), (3, 1.0)]);
        let b = vec_of(&m, &[(0, 3.0)]);
        assert_eq!(a.dot(&b).unwrap(), 6.0);
        assert_eq!(a.dot(&SparseActivationVector::zeros(m.clone())).unwrap(), 0.0);
        assert_eq!(a.dot(&a).unwrap(), 5.0);
    }

    #[test]
    fn mismatched_manifests_are_rejected() {
        let a = vec_of(&manifest(&[4]), &[(0, 1.0)]);
        let b = vec_of(&manifest(&[5]), &[(0, 1.0)]);
        let err = a.dot(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(a.manifest().fingerprint()));
        assert!(msg.contains(b.manifest().fingerprint()));
        assert!(a.subtract(&b).is_err());
        assert!(a.euclidean_distance(&b).is_err());
        // structurally equal manifests from different allocations are compatible
        let c = vec_of(&manifest(&[4]), &[(1, 1.0)]);
        assert_eq!(a.dot(&c).unwrap(), 0.0);
    }

    #[test]
    fn cosine_examples() {
        let m = manifest(&[4]);
        let a = vec_of(&m, &[(0, 1.0), (1, 1.0)]);
        let b = vec_of(&m, &[(0, 1.0)]);
        let c = vec_of(&m, &[(2, 5.0)]);
        assert_eq!(a.cosine_similarity(&a).unwrap(), 1.0);
        assert_eq!(b.cosine_similarity(&c).unwrap(), 0.0);
        assert!((a.cosine_similarity(&b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let zero = SparseActivationVector::zeros(m);
        assert!(matches!(a.cosine_similarity(&zero), Err(Error::ZeroVector)));
        assert_eq!(Error::ZeroVector.to_string(), "undefined cosine for zero vector");
    }

    #[test]
    fn euclidean_examples() {
        let m = manifest(&[4]);
        let a = vec_of(&m, &[(0, 3.0)]);
        assert_eq!(a.euclidean_distance(&a).unwrap(), 0.0);
        assert_eq!(
            a.euclidean_distance(&SparseActivationVector::zeros(m.clone())).unwrap(),
            3.0
        );
        let b = vec_of(&m, &[(0, 1.0), (2, 2.0)]);
        assert!((a.euclidean_distance(&b).unwrap() - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn subtract_examples() {
        let m = manifest(&[4]);
        let v = vec_of(&m, &[(0, 5.0), (1, 1.0)]);
        let zero = SparseActivationVector::zeros(m.clone());
        assert_eq!(v.subtract(&zero).unwrap(), v);
        assert!(vec_of(&m, &[(0, 2.0)])
            .subtract(&vec_of(&m, &[(0, 5.0)]))
            .unwrap()
            .is_zero());
        let r = v.subtract(&vec_of(&m, &[(0, 2.0), (1, 4.0)])).unwrap();
        assert_eq!(r.iter().collect::<Vec<_>>(), vec![(0, 3.0)]);
        assert!(v.subtract(&v).unwrap().is_zero());
    }

    #[test]
    fn threshold_examples() {
        let m = manifest(&[4]);
        let v = vec_of(&m, &[(0, 0.5), (1, 2.0), (2, 1.0)]);
        assert_eq!(v.apply_threshold(0.0).unwrap(), v);
        assert_eq!(
            v.apply_threshold(1.0).unwrap().iter().collect::<Vec<_>>(),
            vec![(1, 2.0), (2, 1.0)]
        );
        assert!(matches!(v.apply_threshold(-0.5), Err(Error::NegativeThreshold(_))));
    }

    #[test]
    fn normalization_examples() {
        let m = manifest(&[2, 3]);
        let v = vec_of(&m, &[(0, 3.0), (1, 4.0)]);
        let n = v.normalize_by_layer();
        let got: Vec<_> = n.iter().collect();
        assert!((got[0].1 - 0.6).abs() < 1e-15 && (got[1].1 - 0.8).abs() < 1e-15);
        assert!(SparseActivationVector::zeros(m.clone()).normalize_by_layer().is_zero());
        let w = vec_of(&m, &[(0, 3.0), (3, 4.0)]).normalize_whole();
        assert!((w.get(0) - 0.6).abs() < 1e-15 && (w.get(3) - 0.8).abs() < 1e-15);
        assert!(SparseActivationVector::zeros(m).normalize_whole().is_zero());
    }

    #[test]
    fn restriction() {
        let m = manifest(&[1, 1, 1, 1]);
        let v = vec_of(&m, &[(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0)]);
        assert_eq!(v.restrict(&m.select_all()), v);
        assert!(v.restrict_to_groups(Vec::<&str>::new()).unwrap().is_zero());
        let r = v.restrict_to_groups(["g1"]).unwrap();
        assert_eq!(r.iter().collect::<Vec<_>>(), vec![(2, 3.0), (3, 4.0)]);
        assert!(matches!(v.restrict_to_groups(["g9"]), Err(Error::UnknownGroup(_))));
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<usize>, Vec<Option<f64>>, Vec<Option<f64>>)> {
        prop::collection::vec(1usize..12, 1..6).prop_flat_map(|dims| {
            let total: usize = dims.iter().sum();
            let cell = prop::option::weighted(0.4, 0.01f64..10.0);
            (
                Just(dims),
                prop::collection::vec(cell.clone(), total),
                prop::collection::vec(cell, total),
            )
        })
    }

    fn from_cells(m: &Arc<LayerManifest>, cells: &[Option<f64>]) -> SparseActivationVector {
        SparseActivationVector::from_global_entries(
            m.clone(),
            cells.iter().enumerate().filter_map(|(i, c)| c.map(|v| (i, v))),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn subtract_law((dims, a, b) in arb_pair()) {
            let m = manifest(&dims);
            let (a, b) = (from_cells(&m, &a), from_cells(&m, &b));
            let d = a.subtract(&b).unwrap();
            for (i, v) in d.iter() {
                prop_assert!(v > 0.0);
                prop_assert!(a.get(i) > 0.0);
                prop_assert_eq!(v, a.get(i) - b.get(i));
            }
            prop_assert!(a.subtract(&a).unwrap().is_zero());
        }

        #[test]
        fn cosine_properties((dims, a, b) in arb_pair(), s in 0.1f64..50.0) {
            let m = manifest(&dims);
            let (a, b) = (from_cells(&m, &a), from_cells(&m, &b));
            prop_assume!(!a.is_zero() && !b.is_zero());
            let c = a.cosine_similarity(&b).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert_eq!(c, b.cosine_similarity(&a).unwrap());
            let scaled = a.scale(s).unwrap().cosine_similarity(&b).unwrap();
            prop_assert!((scaled - c).abs() < 1e-12);
        }

        #[test]
        fn layer_normalization_properties((dims, a, _b) in arb_pair()) {
            let m = manifest(&dims);
            let a = from_cells(&m, &a);
            let n = a.normalize_by_layer();
            let again = n.normalize_by_layer();
            let (dn, da, dv) = (dense(&n), dense(&again), dense(&a));
            for l in 0..m.len() {
                let r = m.layer_range(l);
                let norm: f64 = dn[r.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
                let orig: f64 = dv[r.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
                if orig > 0.0 {
                    prop_assert!((norm - 1.0).abs() < 1e-12);
                    let dot: f64 = r.clone().map(|i| dn[i] * dv[i]).sum();
                    prop_assert!((dot / orig - 1.0).abs() < 1e-12);
                } else {
                    prop_assert_eq!(norm, 0.0);
                }
                for i in r {
                    prop_assert!((dn[i] - da[i]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn threshold_idempotent((dims, a, _b) in arb_pair(), t in 0.0f64..5.0) {
            let m = manifest(&dims);
            let a = from_cells(&m, &a);
            let once = a.apply_threshold(t).unwrap();
            prop_assert_eq!(once.apply_threshold(t).unwrap(), once.clone());
            prop_assert!(once.iter().all(|(_, v)| v >= t));
        }
    }
}

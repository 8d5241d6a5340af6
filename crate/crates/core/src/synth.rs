//! Seeded synthetic datasets with a planted taxonomy signal.
//!
//! Every non-root taxonomy node owns a block of `block_size` features in
//! each layer; a class image activates the blocks of the class and all its
//! ancestors. Layer layout: node blocks in node order, then attribute
//! blocks, then a background region used for optional unstructured noise.
//! With `noise = 0` and no background, the cosine between two class
//! embeddings is `|P(a) ∩ P(b)| / sqrt(|P(a)| |P(b)|)` over the planted
//! block sets `P` (see [`Planted::expected_cosine`]).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, ActivationRecord, ClassMap};
use crate::taxonomy::Taxonomy;
use crate::vector::{Layer, LayerManifest, SparseActivationVector};

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, SeedableRng::seed_from_u64)";

pub const STANDARD_GROUPS: [&str; 9] = ["3a", "3b", "4a", "4b", "4c", "4d", "4e", "5a", "5b"];
pub const STANDARD_BRANCHES: [&str; 3] = ["1x1", "3x3", "5x5"];

/// 27 layers: each inception group with its 1x1, 3x3 and 5x5 outputs.
pub fn standard_manifest(layer_dim: usize) -> Result<LayerManifest> {
    let layers = STANDARD_GROUPS
        .iter()
        .flat_map(|g| {
            STANDARD_BRANCHES
                .iter()
                .map(move |b| Layer::new(format!("{g}/{b}"), *g, layer_dim))
        })
        .collect();
    LayerManifest::new(layers)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    /// Taxonomy leaves that become plain classes.
    pub classes: usize,
    /// Inclusive range of images per class.
    pub images_per_class: (usize, usize),
    /// Dimension of each of the 27 standard layers.
    pub layer_dim: usize,
    pub block_size: usize,
    pub max_branching: usize,
    /// Forces the number of root children when set (at most half the
    /// classes, so every root child has two or more leaves).
    pub root_branching: Option<usize>,
    /// Relative scale of the per-feature Gaussian image noise.
    pub noise: f64,
    /// Signal weight per group; unlisted groups weigh 1.
    pub group_weights: BTreeMap<String, f64>,
    /// Random background features per image and layer.
    pub background: usize,
    /// Background values are drawn uniformly from `(0, background_scale)`.
    pub background_scale: f64,
    /// Extra classes whose images combine two plain classes' blocks; each
    /// is placed in the taxonomy as a sibling of its first part.
    pub composites: usize,
    /// Distinct attribute blocks.
    pub attributes: usize,
    /// Extra classes per attribute: a plain base class plus the attribute.
    pub twins_per_attribute: usize,
    pub corpora: Vec<String>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 0,
            classes: 200,
            images_per_class: (11, 32),
            layer_dim: 1024,
            block_size: 2,
            max_branching: 4,
            root_branching: None,
            noise: 0.1,
            group_weights: BTreeMap::new(),
            background: 0,
            background_scale: 1.0,
            composites: 0,
            attributes: 0,
            twins_per_attribute: 0,
            corpora: vec!["brown".into(), "bnc".into()],
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Generator(m));
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        let (lo, hi) = self.images_per_class;
        if lo == 0 || lo > hi {
            return fail(format!("invalid images-per-class range {lo}..={hi}"));
        }
        if self.block_size == 0 || self.layer_dim == 0 {
            return fail("block size and layer dimension must be positive".into());
        }
        if self.max_branching < 2 {
            return fail("max branching must be at least 2".into());
        }
        if let Some(b) = self.root_branching {
            let cap = if self.classes >= 4 {
                self.classes / 2
            } else {
                self.classes
            };
            if b < 2 || b > cap {
                return fail(format!("root branching {b} must be within 2..={cap}"));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise must be finite and non-negative, got {}", self.noise));
        }
        if !(self.background_scale > 0.0 && self.background_scale.is_finite()) {
            return fail("background scale must be positive".into());
        }
        for (g, w) in &self.group_weights {
            if !STANDARD_GROUPS.contains(&g.as_str()) {
                return fail(format!("unknown group `{g}` in weights"));
            }
            if !(*w >= 0.0 && w.is_finite()) {
                return fail(format!("invalid weight {w} for group `{g}`"));
            }
        }
        if self.attributes * self.twins_per_attribute > self.classes {
            return fail("more attribute twins than plain classes to use as bases".into());
        }
        if self.corpora.iter().collect::<BTreeSet<_>>().len() != self.corpora.len() {
            return fail("duplicate corpus name".into());
        }
        Ok(())
    }

    fn weight(&self, group: &str) -> f64 {
        self.group_weights.get(group).copied().unwrap_or(1.0)
    }
}

/// A planted feature block, repeated in every layer.
/// Serialized as `node:<synset>` or `attribute:<index>`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Block {
    Node(String),
    Attribute(usize),
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::Node(s) => write!(f, "node:{s}"),
            Block::Attribute(a) => write!(f, "attribute:{a}"),
        }
    }
}

impl From<Block> for String {
    fn from(b: Block) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for Block {
    type Error = Error;

    fn try_from(s: String) -> Result<Block> {
        match s.split_once(':') {
            Some(("node", synset)) if !synset.is_empty() => Ok(Block::Node(synset.to_string())),
            Some(("attribute", a)) => a
                .parse()
                .map(Block::Attribute)
                .map_err(|_| Error::Generator(format!("bad attribute block `{s}`"))),
            _ => Err(Error::Generator(format!("bad block `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Composite {
    pub class_id: String,
    pub parts: (String, String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Twin {
    pub class_id: String,
    pub base: String,
    pub attribute: usize,
}

/// Ground truth of what was planted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    /// Block sets by class id.
    pub patterns: BTreeMap<String, BTreeSet<Block>>,
    /// Feature offset of each block within every layer.
    pub offsets: BTreeMap<Block, usize>,
    pub composites: Vec<Composite>,
    pub twins: Vec<Twin>,
}

impl Planted {
    /// Noise-free class cosine implied by the block construction.
    pub fn expected_cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (pa, pb) = (self.patterns.get(a)?, self.patterns.get(b)?);
        let shared = pa.intersection(pb).count() as f64;
        Some(shared / ((pa.len() * pb.len()) as f64).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: GeneratorSpec,
    pub manifest: Arc<LayerManifest>,
    pub taxonomy: Taxonomy,
    pub class_map: ClassMap,
    pub records: Vec<ActivationRecord>,
    /// `(corpus, counts)` in spec order.
    pub counts: Vec<(String, Vec<(String, f64)>)>,
    pub planted: Planted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPaths {
    pub manifest: PathBuf,
    pub activations: PathBuf,
    pub taxonomy: PathBuf,
    pub class_map: PathBuf,
    pub counts: Vec<(String, PathBuf)>,
    pub metadata: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path, corpora: &[String]) -> Self {
        DatasetPaths {
            manifest: dir.join("manifest.tsv"),
            activations: dir.join("activations.tsv"),
            taxonomy: dir.join("taxonomy.tsv"),
            class_map: dir.join("class_map.tsv"),
            counts: corpora
                .iter()
                .map(|c| (c.clone(), dir.join(format!("counts_{c}.tsv"))))
                .collect(),
            metadata: dir.join("generator.json"),
        }
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    rng: &'a str,
    spec: &'a GeneratorSpec,
    planted: &'a Planted,
}

impl Dataset {
    /// A vector with ones on `block` in every layer with non-zero weight.
    pub fn block_vector(&self, block: &Block) -> Result<SparseActivationVector> {
        let offset = *self
            .planted
            .offsets
            .get(block)
            .ok_or_else(|| Error::Generator(format!("unknown block `{block}`")))?;
        let mut entries = Vec::new();
        for (l, layer) in self.manifest.layers().iter().enumerate() {
            if self.spec.weight(&layer.group) > 0.0 {
                for f in 0..self.spec.block_size {
                    entries.push((l, offset + f, 1.0));
                }
            }
        }
        SparseActivationVector::from_layer_entries(self.manifest.clone(), entries)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<DatasetPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DatasetPaths::in_dir(dir, &self.spec.corpora);
        io::write_manifest(&paths.manifest, &self.manifest)?;
        io::write_activations(&paths.activations, &self.records)?;
        io::write_taxonomy(&paths.taxonomy, &self.taxonomy)?;
        io::write_class_map(&paths.class_map, &self.class_map)?;
        for ((_, counts), (_, path)) in self.counts.iter().zip(&paths.counts) {
            io::write_counts(path, counts)?;
        }
        let meta = Metadata {
            rng: RNG_ALGORITHM,
            spec: &self.spec,
            planted: &self.planted,
        };
        let mut json = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::Generator(format!("metadata serialization failed: {e}")))?;
        json.push('\n');
        std::fs::write(&paths.metadata, json).map_err(|e| Error::io(&paths.metadata, e))?;
        Ok(paths)
    }
}

fn synset(i: usize) -> String {
    format!("n{i:08}")
}

struct Node {
    parent: Option<usize>,
    /// Whether the node owns a feature block.
    blocked: bool,
}

/// Balanced random tree with `leaves` leaves, numbered breadth-first.
/// Returns the nodes and the leaf indices in numbering order.
fn grow_tree(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> (Vec<Node>, Vec<usize>) {
    let mut nodes = vec![Node {
        parent: None,
        blocked: false,
    }];
    let mut leaves = Vec::new();
    let mut queue = VecDeque::from([(0usize, spec.classes)]);
    while let Some((id, n)) = queue.pop_front() {
        if n == 1 {
            leaves.push(id);
            continue;
        }
        // root children get at least two leaves each, so no class relates
        // to every other class only through the root
        let cap = if id == 0 && n >= 4 { n / 2 } else { n };
        let branching = match (id, spec.root_branching) {
            (0, Some(b)) => b,
            _ => rng.random_range(2..=spec.max_branching.min(cap)),
        };
        for k in 0..branching {
            // sizes differ by at most one
            let size = n / branching + usize::from(k < n % branching);
            nodes.push(Node {
                parent: Some(id),
                blocked: true,
            });
            queue.push_back((nodes.len() - 1, size));
        }
    }
    (nodes, leaves)
}

fn ancestors_or_self(nodes: &[Node], mut id: usize) -> Vec<usize> {
    let mut out = Vec::new();
    loop {
        out.push(id);
        match nodes[id].parent {
            Some(p) => id = p,
            None => return out,
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let manifest = Arc::new(standard_manifest(spec.layer_dim)?);

    let (mut nodes, leaves) = grow_tree(spec, &mut rng);
    let blocked: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].blocked).collect();
    let mut offsets = BTreeMap::new();
    for (k, &node) in blocked.iter().enumerate() {
        offsets.insert(Block::Node(synset(node)), k * spec.block_size);
    }
    for a in 0..spec.attributes {
        offsets.insert(Block::Attribute(a), (blocked.len() + a) * spec.block_size);
    }
    let used = (blocked.len() + spec.attributes) * spec.block_size;
    if used > spec.layer_dim {
        return Err(Error::Generator(format!(
            "{} blocks of size {} need {used} features per layer but layers have {}",
            blocked.len() + spec.attributes,
            spec.block_size,
            spec.layer_dim
        )));
    }

    let node_pattern = |nodes: &[Node], id: usize| -> BTreeSet<Block> {
        ancestors_or_self(nodes, id)
            .into_iter()
            .filter(|&i| nodes[i].blocked)
            .map(|i| Block::Node(synset(i)))
            .collect()
    };

    // plain classes, then composites, then attribute twins
    let mut classes: Vec<(String, usize, BTreeSet<Block>)> = leaves
        .iter()
        .enumerate()
        .map(|(k, &leaf)| (format!("c{k:04}"), leaf, node_pattern(&nodes, leaf)))
        .collect();
    let plain = classes.len();
    let mut composites = Vec::new();
    for _ in 0..spec.composites {
        let picked = sample(&mut rng, plain, 2);
        let (p1, p2) = (picked.index(0), picked.index(1));
        nodes.push(Node {
            parent: nodes[classes[p1].1].parent,
            blocked: false,
        });
        let pattern: BTreeSet<Block> = classes[p1].2.union(&classes[p2].2).cloned().collect();
        let class_id = format!("c{:04}", classes.len());
        composites.push(Composite {
            class_id: class_id.clone(),
            parts: (classes[p1].0.clone(), classes[p2].0.clone()),
        });
        classes.push((class_id, nodes.len() - 1, pattern));
    }
    let mut twins = Vec::new();
    let bases = sample(&mut rng, plain, spec.attributes * spec.twins_per_attribute);
    for (k, base) in bases.iter().enumerate() {
        let attribute = k / spec.twins_per_attribute.max(1);
        nodes.push(Node {
            parent: nodes[classes[base].1].parent,
            blocked: false,
        });
        let mut pattern = classes[base].2.clone();
        pattern.insert(Block::Attribute(attribute));
        let class_id = format!("c{:04}", classes.len());
        twins.push(Twin {
            class_id: class_id.clone(),
            base: classes[base].0.clone(),
            attribute,
        });
        classes.push((class_id, nodes.len() - 1, pattern));
    }

    let edges: Vec<(String, String)> = nodes
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.parent.map(|p| (synset(i), synset(p))))
        .collect();
    let taxonomy = Taxonomy::from_edges(edges.iter().map(|(c, p)| (c.as_str(), p.as_str())))?;
    let class_map = ClassMap::new(classes.iter().map(|(c, node, _)| (c.clone(), synset(*node))))?;

    let background_start = used;
    let background_len = spec.layer_dim - used;
    let mut records = Vec::new();
    for (class_id, _, pattern) in &classes {
        let count = rng.random_range(spec.images_per_class.0..=spec.images_per_class.1);
        for _ in 0..count {
            let mut entries: Vec<(usize, usize, f64)> = Vec::new();
            for (l, layer) in manifest.layers().iter().enumerate() {
                let w = spec.weight(&layer.group);
                let mut layer_entries = Vec::new();
                for block in pattern {
                    let offset = offsets[block];
                    for f in 0..spec.block_size {
                        let z: f64 = rng.sample(StandardNormal);
                        let v = w * (1.0 + spec.noise * z).max(0.0);
                        if v > 0.0 {
                            layer_entries.push((offset + f, v));
                        }
                    }
                }
                let n_bg = spec.background.min(background_len);
                if n_bg > 0 {
                    let mut picked: Vec<usize> = sample(&mut rng, background_len, n_bg).into_vec();
                    picked.sort_unstable();
                    for f in picked {
                        let v = rng.random_range(0.0..spec.background_scale);
                        if v > 0.0 {
                            layer_entries.push((background_start + f, v));
                        }
                    }
                }
                entries.extend(layer_entries.into_iter().map(|(f, v)| (l, f, v)));
            }
            let vector = SparseActivationVector::from_layer_entries(manifest.clone(), entries)?;
            records.push(ActivationRecord {
                image_id: format!("img_{:06}", records.len() + 1),
                class_id: class_id.clone(),
                vector,
            });
        }
    }

    let mut counts = Vec::new();
    for corpus in &spec.corpora {
        let table: Vec<(String, f64)> = (0..nodes.len())
            .map(|i| (synset(i), rng.random_range(1..=1000u32) as f64))
            .collect();
        counts.push((corpus.clone(), table));
    }

    let patterns = classes.into_iter().map(|(c, _, p)| (c, p)).collect();
    Ok(Dataset {
        spec: spec.clone(),
        manifest,
        taxonomy,
        class_map,
        records,
        counts,
        planted: Planted {
            patterns,
            offsets,
            composites,
            twins,
        },
    })
}

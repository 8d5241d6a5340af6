//! File formats.
//!
//! Text inputs are UTF-8 and tab separated, one record per line; empty
//! lines are ignored and every diagnostic carries a 1-based line number.
//!
//! | file       | line                                                    |
//! |------------|---------------------------------------------------------|
//! | manifest   | `layer_id TAB group TAB dim`                            |
//! | activation | `image_id TAB class_id TAB layer:index:value ...`       |
//! | taxonomy   | `child_synset TAB parent_synset`                        |
//! | counts     | `synset TAB count`                                      |
//! | class map  | `class_id TAB synset_id`                                |
//! | embeddings | `class_id TAB synset_id TAB image_count TAB entries...` |
//!
//! Activation entries are space separated; reals use the shortest decimal
//! form that round-trips.

mod svg;
mod tables;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pipeline::{ClassEmbedding, ClassEmbeddings};
use crate::taxonomy::Taxonomy;
use crate::vector::{Layer, LayerManifest, SparseActivationVector};

pub use svg::{render_scatter_svg, write_scatter_svg, HighlightSet, ScatterStyle};
pub use tables::{
    format_significant, load_distance_matrix_csv, write_coordinates_csv, write_distance_matrix_csv,
    write_eigenvalues_csv, write_equation_csv, write_histogram_csv, write_rho_summary_csv, write_rho_table_csv,
    write_sweep_csv, MATRIX_SIGNIFICANT_DIGITS,
};

/// One image's activations.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationRecord {
    pub image_id: String,
    pub class_id: String,
    pub vector: SparseActivationVector,
}

/// Bijective class id to synset id mapping, kept in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassMap {
    entries: Vec<(String, String)>,
    by_class: HashMap<String, usize>,
    by_synset: HashMap<String, usize>,
}

impl ClassMap {
    pub fn new<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut map = ClassMap::default();
        for (class_id, synset_id) in pairs {
            map.insert(class_id.into(), synset_id.into())?;
        }
        Ok(map)
    }

    fn insert(&mut self, class_id: String, synset_id: String) -> Result<()> {
        if self.by_class.contains_key(&class_id) {
            return Err(Error::Duplicate(class_id));
        }
        if self.by_synset.contains_key(&synset_id) {
            return Err(Error::Duplicate(synset_id));
        }
        let i = self.entries.len();
        self.by_class.insert(class_id.clone(), i);
        self.by_synset.insert(synset_id.clone(), i);
        self.entries.push((class_id, synset_id));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn synset_of(&self, class_id: &str) -> Option<&str> {
        self.by_class.get(class_id).map(|&i| self.entries[i].1.as_str())
    }

    pub fn class_of(&self, synset_id: &str) -> Option<&str> {
        self.by_synset.get(synset_id).map(|&i| self.entries[i].0.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(c, s)| (c.as_str(), s.as_str()))
    }

    /// Every mapped synset must exist in the taxonomy.
    pub fn validate_against(&self, taxonomy: &Taxonomy) -> Result<()> {
        match self.entries.iter().find(|(_, s)| !taxonomy.contains(s)) {
            Some((_, s)) => Err(Error::UnknownSynset(s.clone())),
            None => Ok(()),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with 1-based numbers, split into exactly `fields` tab fields.
fn tab_records<'a, R: BufRead + 'a>(
    reader: R,
    origin: &'a Path,
    fields: usize,
) -> impl Iterator<Item = Result<(usize, Vec<String>)>> + 'a {
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::io(origin, e))),
        };
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            return None;
        }
        let parts: Vec<String> = line.split('\t').map(str::to_string).collect();
        if parts.len() != fields {
            return Some(Err(Error::parse(
                origin,
                line_no,
                format!("expected {fields} tab-separated fields, found {}", parts.len()),
            )));
        }
        if let Some(k) = parts.iter().position(|p| p.is_empty()) {
            return Some(Err(Error::parse(origin, line_no, format!("field {} is empty", k + 1))));
        }
        Some(Ok((line_no, parts)))
    })
}

fn write_lines<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- manifest

pub fn read_manifest<R: BufRead>(reader: R, origin: &Path) -> Result<LayerManifest> {
    let mut layers: Vec<Layer> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for rec in tab_records(reader, origin, 3) {
        let (line, f) = rec?;
        let dim: i64 = f[2]
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("invalid dimension `{}`", f[2])))?;
        if dim <= 0 {
            return Err(Error::parse(origin, line, format!("non-positive dimension {dim}")));
        }
        if let Some(prev) = seen.insert(f[0].clone(), line) {
            return Err(Error::parse(
                origin,
                line,
                format!("duplicate layer id `{}` (first on line {prev})", f[0]),
            ));
        }
        layers.push(Layer::new(f[0].clone(), f[1].clone(), dim as usize));
    }
    if layers.is_empty() {
        return Err(Error::Format {
            path: origin.to_path_buf(),
            message: "empty manifest".into(),
        });
    }
    LayerManifest::new(layers)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<LayerManifest> {
    let path = path.as_ref();
    read_manifest(open(path)?, path)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &LayerManifest) -> Result<()> {
    write_lines(path.as_ref(), |w| {
        for l in manifest.layers() {
            writeln!(w, "{}\t{}\t{}", l.id, l.group, l.dim)?;
        }
        Ok(())
    })
}

// ------------------------------------------------------------- activations

fn parse_entries(
    text: &str,
    manifest: &Arc<LayerManifest>,
    origin: &Path,
    line: usize,
) -> Result<SparseActivationVector> {
    let mut entries = Vec::new();
    for token in text.split(' ').filter(|t| !t.is_empty()) {
        let mut parts = token.rsplitn(3, ':');
        let (value, index, layer_id) = match (parts.next(), parts.next(), parts.next()) {
            (Some(v), Some(i), Some(l)) if !l.is_empty() => (v, i, l),
            _ => {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("malformed entry `{token}` (expected layer:index:value)"),
                ))
            }
        };
        let layer = manifest
            .layer_index(layer_id)
            .ok_or_else(|| Error::parse(origin, line, format!("unknown layer id `{layer_id}`")))?;
        let index: usize = index
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("invalid feature index `{index}`")))?;
        let dim = manifest.layers()[layer].dim;
        if index >= dim {
            return Err(Error::parse(
                origin,
                line,
                format!("index {index} out of range for layer `{layer_id}` (dim {dim})"),
            ));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("invalid value `{value}`")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::parse(
                origin,
                line,
                format!("negative or non-finite value {value} at `{layer_id}:{index}`"),
            ));
        }
        entries.push((layer, index, value));
    }
    SparseActivationVector::from_layer_entries(manifest.clone(), entries)
        .map_err(|e| Error::parse(origin, line, e.to_string()))
}

fn format_entries(vector: &SparseActivationVector) -> String {
    let layers = vector.manifest().layers();
    let mut out = String::new();
    for (layer, index, value) in vector.layer_entries() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&format!("{}:{}:{}", layers[layer].id, index, value));
    }
    out
}

/// Streaming reader over an activation file; holds one line at a time.
pub struct ActivationReader<R> {
    reader: R,
    manifest: Arc<LayerManifest>,
    origin: PathBuf,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> ActivationReader<R> {
    pub fn new(reader: R, manifest: Arc<LayerManifest>, origin: impl Into<PathBuf>) -> Self {
        ActivationReader {
            reader,
            manifest,
            origin: origin.into(),
            line_no: 0,
            buf: String::new(),
        }
    }

    fn parse_line(&self) -> Result<ActivationRecord> {
        let line = self.buf.trim_end_matches(['\n', '\r']);
        let mut fields = line.splitn(3, '\t');
        let image_id = fields.next().unwrap_or_default();
        let class_id = fields.next().unwrap_or_default();
        let entries = fields.next().unwrap_or_default();
        if image_id.is_empty() || class_id.is_empty() {
            return Err(Error::parse(
                &self.origin,
                self.line_no,
                "expected image_id TAB class_id TAB entries",
            ));
        }
        if entries.contains('\t') {
            return Err(Error::parse(
                &self.origin,
                self.line_no,
                "too many tab-separated fields",
            ));
        }
        Ok(ActivationRecord {
            image_id: image_id.to_string(),
            class_id: class_id.to_string(),
            vector: parse_entries(entries, &self.manifest, &self.origin, self.line_no)?,
        })
    }
}

impl<R: BufRead> Iterator for ActivationReader<R> {
    type Item = Result<ActivationRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {
                    self.line_no += 1;
                    if self.buf.trim_end_matches(['\n', '\r']).is_empty() {
                        continue;
                    }
                    return Some(self.parse_line());
                }
                Err(e) => return Some(Err(Error::io(&self.origin, e))),
            }
        }
    }
}

pub fn stream_activations(
    path: impl AsRef<Path>,
    manifest: Arc<LayerManifest>,
) -> Result<ActivationReader<BufReader<File>>> {
    let path = path.as_ref();
    Ok(ActivationReader::new(open(path)?, manifest, path))
}

pub fn write_activation_record<W: Write>(w: &mut W, record: &ActivationRecord) -> std::io::Result<()> {
    writeln!(
        w,
        "{}\t{}\t{}",
        record.image_id,
        record.class_id,
        format_entries(&record.vector)
    )
}

pub fn write_activations<'a, I>(path: impl AsRef<Path>, records: I) -> Result<()>
where
    I: IntoIterator<Item = &'a ActivationRecord>,
{
    write_lines(path.as_ref(), |w| {
        for r in records {
            write_activation_record(w, r)?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- taxonomy

pub fn read_taxonomy<R: BufRead>(reader: R, origin: &Path) -> Result<Taxonomy> {
    let mut edges = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for rec in tab_records(reader, origin, 2) {
        let (line, mut f) = rec?;
        let parent = f.pop().expect("two fields");
        let child = f.pop().expect("two fields");
        if child == parent {
            return Err(Error::parse(origin, line, format!("self-loop on `{child}`")));
        }
        if let Some(prev) = seen.insert((child.clone(), parent.clone()), line) {
            return Err(Error::parse(
                origin,
                line,
                format!("duplicate edge (first on line {prev})"),
            ));
        }
        edges.push((child, parent));
    }
    if edges.is_empty() {
        return Err(Error::Format {
            path: origin.to_path_buf(),
            message: "empty taxonomy".into(),
        });
    }
    Taxonomy::from_edges(edges).map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy> {
    let path = path.as_ref();
    read_taxonomy(open(path)?, path)
}

pub fn write_taxonomy(path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<()> {
    write_lines(path.as_ref(), |w| {
        for (child, parent) in taxonomy.edges() {
            writeln!(w, "{child}\t{parent}")?;
        }
        Ok(())
    })
}

// ------------------------------------------------------------------ counts

pub fn read_counts<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for rec in tab_records(reader, origin, 2) {
        let (line, f) = rec?;
        let count: f64 = f[1]
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("invalid count `{}`", f[1])))?;
        if !count.is_finite() || count < 0.0 {
            return Err(Error::parse(
                origin,
                line,
                format!("count must be non-negative, got {count}"),
            ));
        }
        if let Some(prev) = seen.insert(f[0].clone(), line) {
            return Err(Error::parse(
                origin,
                line,
                format!("duplicate synset `{}` (first on line {prev})", f[0]),
            ));
        }
        out.push((f[0].clone(), count));
    }
    Ok(out)
}

pub fn load_counts(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    read_counts(open(path)?, path)
}

pub fn write_counts(path: impl AsRef<Path>, counts: &[(String, f64)]) -> Result<()> {
    write_lines(path.as_ref(), |w| {
        for (s, c) in counts {
            writeln!(w, "{s}\t{c}")?;
        }
        Ok(())
    })
}

// --------------------------------------------------------------- class map

pub fn read_class_map<R: BufRead>(reader: R, origin: &Path) -> Result<ClassMap> {
    let mut map = ClassMap::default();
    for rec in tab_records(reader, origin, 2) {
        let (line, mut f) = rec?;
        let synset = f.pop().expect("two fields");
        let class = f.pop().expect("two fields");
        map.insert(class, synset)
            .map_err(|e| Error::parse(origin, line, e.to_string()))?;
    }
    if map.is_empty() {
        return Err(Error::Format {
            path: origin.to_path_buf(),
            message: "empty class map".into(),
        });
    }
    Ok(map)
}

pub fn load_class_map(path: impl AsRef<Path>) -> Result<ClassMap> {
    let path = path.as_ref();
    read_class_map(open(path)?, path)
}

pub fn write_class_map(path: impl AsRef<Path>, map: &ClassMap) -> Result<()> {
    write_lines(path.as_ref(), |w| {
        for (c, s) in map.iter() {
            writeln!(w, "{c}\t{s}")?;
        }
        Ok(())
    })
}

// -------------------------------------------------------------- embeddings

pub fn read_embeddings<R: BufRead>(reader: R, manifest: &Arc<LayerManifest>, origin: &Path) -> Result<ClassEmbeddings> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.splitn(4, '\t').collect();
        if f.len() != 4 || f[..3].iter().any(|s| s.is_empty()) {
            return Err(Error::parse(
                origin,
                line_no,
                "expected class_id TAB synset_id TAB image_count TAB entries",
            ));
        }
        let image_count: usize = f[2]
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::parse(origin, line_no, format!("invalid image count `{}`", f[2])))?;
        items.push(ClassEmbedding {
            class_id: f[0].to_string(),
            synset_id: f[1].to_string(),
            vector: parse_entries(f[3], manifest, origin, line_no)?,
            image_count,
        });
    }
    ClassEmbeddings::new(items).map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_embeddings(path: impl AsRef<Path>, manifest: &Arc<LayerManifest>) -> Result<ClassEmbeddings> {
    let path = path.as_ref();
    read_embeddings(open(path)?, manifest, path)
}

pub fn write_embeddings(path: impl AsRef<Path>, embeddings: &ClassEmbeddings) -> Result<()> {
    write_lines(path.as_ref(), |w| {
        for e in embeddings {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                e.class_id,
                e.synset_id,
                e.image_count,
                format_entries(&e.vector)
            )?;
        }
        Ok(())
    })
}

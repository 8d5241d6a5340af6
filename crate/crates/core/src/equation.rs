//! Image equations: clamped subtraction followed by cosine-nearest retrieval.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{ClassEmbedding, ClassEmbeddings};
use crate::vector::SparseActivationVector;

pub const DEFAULT_TOP_K: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub class_id: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationResult {
    pub query: String,
    /// Descending similarity, ties by class id.
    pub hits: Vec<Neighbor>,
    pub excluded: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationOptions {
    pub top_k: usize,
    pub exclude_operands: bool,
}

impl Default for EquationOptions {
    fn default() -> Self {
        EquationOptions {
            top_k: DEFAULT_TOP_K,
            exclude_operands: true,
        }
    }
}

/// Rank classes by cosine similarity to `query`. Classes with all-zero
/// embeddings have no defined cosine and are skipped.
pub fn nearest_classes(
    query: &SparseActivationVector,
    embeddings: &ClassEmbeddings,
    top_k: usize,
    exclude: &BTreeSet<String>,
) -> Result<EquationResult> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    if query.is_zero() {
        return Err(Error::EmptyDifference);
    }
    let mut hits = Vec::new();
    for e in embeddings {
        if exclude.contains(&e.class_id) || e.vector.is_zero() {
            continue;
        }
        hits.push(Neighbor {
            class_id: e.class_id.clone(),
            similarity: query.cosine_similarity(&e.vector)?,
        });
    }
    // embeddings iterate in class-id order and the sort is stable
    hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    hits.truncate(top_k);
    Ok(EquationResult {
        query: "vector".into(),
        hits,
        excluded: exclude.iter().cloned().collect(),
    })
}

/// Looks up an operand by class id, then by synset id.
pub fn resolve<'a>(embeddings: &'a ClassEmbeddings, name: &str) -> Result<&'a ClassEmbedding> {
    embeddings
        .get(name)
        .or_else(|| embeddings.iter().find(|e| e.synset_id == name))
        .ok_or_else(|| Error::UnknownClass(name.to_string()))
}

fn exclusions(options: &EquationOptions, ids: &[&str]) -> BTreeSet<String> {
    if options.exclude_operands {
        ids.iter().map(|s| s.to_string()).collect()
    } else {
        BTreeSet::new()
    }
}

/// Classes nearest to `a − b`.
pub fn solve_difference(
    a: &str,
    b: &str,
    embeddings: &ClassEmbeddings,
    options: &EquationOptions,
) -> Result<EquationResult> {
    let (ea, eb) = (resolve(embeddings, a)?, resolve(embeddings, b)?);
    let diff = ea.vector.subtract(&eb.vector)?;
    let exclude = exclusions(options, &[&ea.class_id, &eb.class_id]);
    let mut result = nearest_classes(&diff, embeddings, options.top_k, &exclude)?;
    result.query = EquationQuery::Difference {
        a: ea.class_id.clone(),
        b: eb.class_id.clone(),
    }
    .to_string();
    Ok(result)
}

/// Classes nearest to `c − (a − b)`: what `c` becomes when it loses what
/// distinguishes `a` from `b`.
pub fn apply_difference(
    c: &str,
    a: &str,
    b: &str,
    embeddings: &ClassEmbeddings,
    options: &EquationOptions,
) -> Result<EquationResult> {
    let (ec, ea, eb) = (
        resolve(embeddings, c)?,
        resolve(embeddings, a)?,
        resolve(embeddings, b)?,
    );
    let diff = ea.vector.subtract(&eb.vector)?;
    let query = ec.vector.subtract(&diff)?;
    let exclude = exclusions(options, &[&ec.class_id, &ea.class_id, &eb.class_id]);
    let mut result = nearest_classes(&query, embeddings, options.top_k, &exclude)?;
    result.query = EquationQuery::Regularity {
        c: ec.class_id.clone(),
        a: ea.class_id.clone(),
        b: eb.class_id.clone(),
    }
    .to_string();
    Ok(result)
}

/// `A - B` or `C - (A - B)`; operands are class or synset ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EquationQuery {
    Difference { a: String, b: String },
    Regularity { c: String, a: String, b: String },
}

impl EquationQuery {
    pub fn solve(&self, embeddings: &ClassEmbeddings, options: &EquationOptions) -> Result<EquationResult> {
        match self {
            EquationQuery::Difference { a, b } => solve_difference(a, b, embeddings, options),
            EquationQuery::Regularity { c, a, b } => apply_difference(c, a, b, embeddings, options),
        }
    }
}

fn operand(s: &str, query: &str) -> Result<String> {
    let s = s.trim();
    if s.is_empty() || s.contains(['(', ')']) || s.split_whitespace().count() != 1 {
        return Err(Error::EquationSyntax(format!("bad operand `{s}` in `{query}`")));
    }
    Ok(s.to_string())
}

fn split_minus<'a>(s: &'a str, query: &str) -> Result<(&'a str, &'a str)> {
    let parts: Vec<&str> = s.split(" - ").collect();
    if parts.len() != 2 {
        return Err(Error::EquationSyntax(format!(
            "`{query}` needs exactly one ` - ` between operands"
        )));
    }
    Ok((parts[0], parts[1]))
}

impl FromStr for EquationQuery {
    type Err = Error;

    fn from_str(query: &str) -> Result<Self> {
        let q = query.trim();
        match q.find('(') {
            None => {
                let (a, b) = split_minus(q, query)?;
                Ok(EquationQuery::Difference {
                    a: operand(a, query)?,
                    b: operand(b, query)?,
                })
            }
            Some(open) => {
                let head = q[..open].trim_end();
                let c = head
                    .strip_suffix(" -")
                    .or_else(|| head.strip_suffix('-'))
                    .ok_or_else(|| Error::EquationSyntax(format!("no ` - ` before the parenthesis in `{query}`")))?;
                let inner = q[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::EquationSyntax(format!("unbalanced parenthesis in `{query}`")))?;
                let (a, b) = split_minus(inner.trim(), query)?;
                Ok(EquationQuery::Regularity {
                    c: operand(c, query)?,
                    a: operand(a, query)?,
                    b: operand(b, query)?,
                })
            }
        }
    }
}

impl fmt::Display for EquationQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquationQuery::Difference { a, b } => write!(f, "{a} - {b}"),
            EquationQuery::Regularity { c, a, b } => write!(f, "{c} - ({a} - {b})"),
        }
    }
}

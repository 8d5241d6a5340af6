//! Rooted hypernym hierarchy and the six lexical similarity measures.
//!
//! Conventions: depth is counted in nodes with the root at depth 1; path
//! length is counted in edges and always runs through a common ancestor.
//! Multiple parents are allowed, in which case depth is the minimum over
//! all paths from the root.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp on the Jiang–Conrath distance.
pub const JCN_EPSILON: f64 = 1e-10;

/// Index of a synset inside a [`Taxonomy`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Taxonomy {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    depth: Vec<u32>,
    max_depth: u32,
    /// Per node: `(ancestor, minimal upward edge count)`, sorted by ancestor,
    /// including the node itself at distance 0.
    ancestors: Vec<Vec<(usize, u32)>>,
}

impl Taxonomy {
    /// Build from `(child, parent)` edges.
    pub fn from_edges<I, S>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
            if let Some(&i) = index.get(name) {
                return i;
            }
            names.push(name.to_string());
            index.insert(name.to_string(), names.len() - 1);
            names.len() - 1
        };
        let mut raw = Vec::new();
        for (child, parent) in edges {
            let (child, parent) = (child.as_ref(), parent.as_ref());
            if child == parent {
                return Err(Error::InvalidTaxonomy(format!("self-loop on `{child}`")));
            }
            let c = intern(child, &mut names);
            let p = intern(parent, &mut names);
            raw.push((c, p));
        }
        if names.is_empty() {
            return Err(Error::InvalidTaxonomy("no edges".into()));
        }
        let index: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();

        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (c, p) in raw {
            if parents[c].contains(&p) {
                return Err(Error::InvalidTaxonomy(format!(
                    "duplicate edge `{}` -> `{}`",
                    names[c], names[p]
                )));
            }
            parents[c].push(p);
            children[p].push(c);
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::InvalidTaxonomy("no root (cycle)".into())),
            many => {
                let mut rs: Vec<&str> = many.iter().map(|&r| names[r].as_str()).collect();
                rs.sort_unstable();
                return Err(Error::InvalidTaxonomy(format!("{} roots: {}", rs.len(), rs.join(", "))));
            }
        };

        // Kahn order from the root; nodes left unvisited sit on a cycle.
        let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut order = Vec::with_capacity(n);
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &children[v] {
                pending[c] -= 1;
                if pending[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).filter(|&i| pending[i] > 0).map(|i| names[i].as_str()).min();
            return Err(Error::InvalidTaxonomy(format!(
                "cycle detected involving `{}`",
                stuck.unwrap_or("?")
            )));
        }

        let mut depth = vec![0u32; n];
        let mut ancestors: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
        for &v in &order {
            if v == root {
                depth[v] = 1;
                ancestors[v] = vec![(v, 0)];
                continue;
            }
            depth[v] = parents[v].iter().map(|&p| depth[p] + 1).min().expect("non-root");
            let mut merged: HashMap<usize, u32> = HashMap::new();
            merged.insert(v, 0);
            for &p in &parents[v] {
                for &(a, d) in &ancestors[p] {
                    let e = merged.entry(a).or_insert(u32::MAX);
                    *e = (*e).min(d + 1);
                }
            }
            let mut list: Vec<(usize, u32)> = merged.into_iter().collect();
            list.sort_unstable();
            ancestors[v] = list;
        }
        let max_depth = depth.iter().copied().max().unwrap_or(1);
        Ok(Taxonomy {
            names,
            index,
            parents,
            children,
            root,
            depth,
            max_depth,
            ancestors,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId(self.root)
    }

    pub fn id(&self, synset: &str) -> Result<NodeId> {
        self.index
            .get(synset)
            .map(|&i| NodeId(i))
            .ok_or_else(|| Error::UnknownSynset(synset.to_string()))
    }

    pub fn contains(&self, synset: &str) -> bool {
        self.index.contains_key(synset)
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.names.len()).map(NodeId)
    }

    pub fn parents(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.parents[node.0].iter().map(|&p| NodeId(p))
    }

    pub fn children(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children[node.0].iter().map(|&c| NodeId(c))
    }

    /// Node depth with the root at 1.
    pub fn depth(&self, node: NodeId) -> u32 {
        self.depth[node.0]
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Ancestors including the node itself.
    pub fn ancestors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.ancestors[node.0].iter().map(|&(a, _)| NodeId(a))
    }

    pub fn is_ancestor(&self, ancestor: NodeId, node: NodeId) -> bool {
        self.ancestors[node.0]
            .binary_search_by_key(&ancestor.0, |&(a, _)| a)
            .is_ok()
    }

    /// Leaves in name order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut leaves: Vec<NodeId> = (0..self.len())
            .filter(|&i| self.children[i].is_empty())
            .map(NodeId)
            .collect();
        leaves.sort_by(|a, b| self.names[a.0].cmp(&self.names[b.0]));
        leaves
    }

    /// Child/parent edges in a canonical order (by child name, then parent name).
    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut edges: Vec<(&str, &str)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (c, p)))
            .map(|(c, p)| (self.names[c].as_str(), self.names[p].as_str()))
            .collect();
        edges.sort_unstable();
        edges
    }

    fn common_ancestors(&self, a: NodeId, b: NodeId) -> impl Iterator<Item = (usize, u32, u32)> + '_ {
        let (xa, xb) = (&self.ancestors[a.0], &self.ancestors[b.0]);
        let (mut i, mut j) = (0, 0);
        std::iter::from_fn(move || {
            while i < xa.len() && j < xb.len() {
                match xa[i].0.cmp(&xb[j].0) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        let out = (xa[i].0, xa[i].1, xb[j].1);
                        i += 1;
                        j += 1;
                        return Some(out);
                    }
                }
            }
            None
        })
    }

    /// Deepest common ancestor; ties go to the smallest synset name.
    pub fn lcs(&self, a: NodeId, b: NodeId) -> NodeId {
        let best = self
            .common_ancestors(a, b)
            .map(|(c, _, _)| c)
            .min_by(|&x, &y| {
                self.depth[y]
                    .cmp(&self.depth[x])
                    .then_with(|| self.names[x].cmp(&self.names[y]))
            })
            .expect("the root is a common ancestor");
        NodeId(best)
    }

    /// Minimal edge count of a path through a common ancestor.
    pub fn path_length(&self, a: NodeId, b: NodeId) -> u32 {
        self.common_ancestors(a, b)
            .map(|(_, da, db)| da + db)
            .min()
            .expect("the root is a common ancestor")
    }

    pub fn path_sim(&self, a: NodeId, b: NodeId) -> f64 {
        1.0 / (1.0 + self.path_length(a, b) as f64)
    }

    /// Leacock–Chodorow: `-ln((len + 1) / (2 D))`.
    pub fn lch_sim(&self, a: NodeId, b: NodeId) -> f64 {
        let len = self.path_length(a, b) as f64;
        -((len + 1.0) / (2.0 * self.max_depth as f64)).ln()
    }

    /// Wu–Palmer: `2 depth(lcs) / (depth(a) + depth(b))`.
    pub fn wup_sim(&self, a: NodeId, b: NodeId) -> f64 {
        let lcs = self.lcs(a, b);
        2.0 * self.depth(lcs) as f64 / (self.depth(a) + self.depth(b)) as f64
    }

    pub fn res_sim(&self, a: NodeId, b: NodeId, ic: &IcTable) -> f64 {
        ic.ic(self.lcs(a, b))
    }

    pub fn jcn_sim(&self, a: NodeId, b: NodeId, ic: &IcTable) -> f64 {
        let lcs = self.lcs(a, b);
        let dist = ic.ic(a) + ic.ic(b) - 2.0 * ic.ic(lcs);
        1.0 / dist.max(JCN_EPSILON)
    }

    pub fn lin_sim(&self, a: NodeId, b: NodeId, ic: &IcTable) -> f64 {
        let lcs = self.lcs(a, b);
        let den = ic.ic(a) + ic.ic(b);
        if den == 0.0 {
            0.0
        } else {
            2.0 * ic.ic(lcs) / den
        }
    }

    /// Evaluate any measure; IC-based measures require `ic`.
    pub fn similarity(&self, measure: Measure, a: NodeId, b: NodeId, ic: Option<&IcTable>) -> Result<f64> {
        Ok(match measure {
            Measure::Path => self.path_sim(a, b),
            Measure::Lch => self.lch_sim(a, b),
            Measure::Wup => self.wup_sim(a, b),
            Measure::Res => self.res_sim(a, b, ic.ok_or(Error::MissingInformationContent)?),
            Measure::Jcn => self.jcn_sim(a, b, ic.ok_or(Error::MissingInformationContent)?),
            Measure::Lin => self.lin_sim(a, b, ic.ok_or(Error::MissingInformationContent)?),
        })
    }

    /// Name-based convenience wrapper around [`Taxonomy::similarity`].
    pub fn similarity_by_name(&self, measure: Measure, a: &str, b: &str, ic: Option<&IcTable>) -> Result<f64> {
        self.similarity(measure, self.id(a)?, self.id(b)?, ic)
    }
}

/// Cumulative corpus counts and information content per synset.
#[derive(Clone, Debug)]
pub struct IcTable {
    cumulative: Vec<f64>,
    ic: Vec<f64>,
}

impl IcTable {
    /// Counts for synsets outside the taxonomy are ignored; missing synsets count 0.
    pub fn from_counts<I, S>(taxonomy: &Taxonomy, counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let mut own = vec![0.0; taxonomy.len()];
        for (synset, count) in counts {
            if !count.is_finite() || count < 0.0 {
                return Err(Error::Config(format!(
                    "invalid count {count} for `{}`",
                    synset.as_ref()
                )));
            }
            match taxonomy.index.get(synset.as_ref()) {
                Some(&i) => own[i] += count,
                None => log::debug!("ignoring count for unknown synset `{}`", synset.as_ref()),
            }
        }
        let mut cumulative = vec![0.0; taxonomy.len()];
        for (node, &count) in own.iter().enumerate() {
            if count > 0.0 {
                for &(a, _) in &taxonomy.ancestors[node] {
                    cumulative[a] += count;
                }
            }
        }
        let total = cumulative[taxonomy.root];
        let mut ic = Vec::with_capacity(taxonomy.len());
        for (node, &cum) in cumulative.iter().enumerate() {
            if cum <= 0.0 {
                return Err(Error::UndefinedInformationContent(taxonomy.names[node].clone()));
            }
            ic.push(if cum == total { 0.0 } else { -(cum / total).ln() });
        }
        Ok(IcTable { cumulative, ic })
    }

    pub fn ic(&self, node: NodeId) -> f64 {
        self.ic[node.0]
    }

    pub fn cumulative(&self, node: NodeId) -> f64 {
        self.cumulative[node.0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Path,
    Lch,
    Wup,
    Res,
    Jcn,
    Lin,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Path,
        Measure::Lch,
        Measure::Wup,
        Measure::Res,
        Measure::Jcn,
        Measure::Lin,
    ];

    pub fn uses_information_content(self) -> bool {
        matches!(self, Measure::Res | Measure::Jcn | Measure::Lin)
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Path => "path",
            Measure::Lch => "lch",
            Measure::Wup => "wup",
            Measure::Res => "res",
            Measure::Jcn => "jcn",
            Measure::Lin => "lin",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown measure `{s}`")))
    }
}

//! Per-class Spearman correlation between vector-space and taxonomy rankings.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ClassMap;
use crate::matrix::DistanceMatrix;
use crate::pipeline::{ClassEmbeddings, Metric};
use crate::taxonomy::{IcTable, Measure, NodeId, Taxonomy};
use crate::vector::LayerManifest;

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;
const HISTOGRAM_BINS: usize = 40;

/// Fractional ranks (1-based); tied values share the mean of their positions.
pub fn rank_with_ties(values: &[f64], descending: bool) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("cannot rank an empty list".into()));
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::InvalidEntry(format!("NaN at position {i} cannot be ranked")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        if descending {
            c.reverse()
        } else {
            c
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

/// Pearson correlation of tie-averaged ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Config(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    let rx = rank_with_ties(x, true)?;
    let ry = rank_with_ties(y, true)?;
    let mean = (x.len() + 1) as f64 / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mean, b - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("one of the rankings is constant".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// A taxonomy measure, bound to a corpus when it needs information content.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasureSetting {
    pub measure: Measure,
    pub corpus: Option<String>,
}

impl MeasureSetting {
    pub fn new(measure: Measure, corpus: Option<String>) -> Self {
        MeasureSetting { measure, corpus }
    }

    /// `path`, `res_brown`, ...
    pub fn label(&self) -> String {
        match &self.corpus {
            Some(c) => format!("{}_{c}", self.measure),
            None => self.measure.to_string(),
        }
    }

    /// Every requested measure, with IC measures repeated once per corpus.
    pub fn expand(measures: &[Measure], corpora: &[String]) -> Vec<MeasureSetting> {
        let mut out = Vec::new();
        for &m in measures {
            if m.uses_information_content() && !corpora.is_empty() {
                out.extend(corpora.iter().map(|c| MeasureSetting::new(m, Some(c.clone()))));
            } else {
                out.push(MeasureSetting::new(m, None));
            }
        }
        out
    }
}

impl fmt::Display for MeasureSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins of width 0.05 over [−1, 1]; each bin is closed below, and the
    /// last one also contains 1.
    pub fn of_rho(values: impl IntoIterator<Item = f64>) -> Self {
        let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| (i as f64 - 20.0) / 20.0).collect();
        let mut counts = vec![0; HISTOGRAM_BINS];
        for v in values {
            let mut bin = (((v + 1.0) / HISTOGRAM_BIN_WIDTH).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            // guard the floating-point floor against the exact edges
            if v < edges[bin] {
                bin -= 1;
            } else if bin + 1 < HISTOGRAM_BINS && v >= edges[bin + 1] {
                bin += 1;
            }
            counts[bin] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoDistribution {
    pub setting: MeasureSetting,
    /// `(class_id, rho)` in distance-matrix order.
    pub per_class: Vec<(String, f64)>,
    pub mean: f64,
    pub histogram: Histogram,
}

impl RhoDistribution {
    fn new(setting: MeasureSetting, per_class: Vec<(String, f64)>) -> Self {
        let mean = per_class.iter().map(|p| p.1).sum::<f64>() / per_class.len() as f64;
        let histogram = Histogram::of_rho(per_class.iter().map(|p| p.1));
        RhoDistribution {
            setting,
            per_class,
            mean,
            histogram,
        }
    }
}

/// Resolves distance-matrix labels (class ids) to taxonomy nodes.
fn class_nodes(d: &DistanceMatrix, taxonomy: &Taxonomy, class_map: &ClassMap) -> Result<Vec<NodeId>> {
    d.labels()
        .iter()
        .map(|class_id| {
            let synset = class_map
                .synset_of(class_id)
                .ok_or_else(|| Error::UnknownClass(class_id.clone()))?;
            taxonomy.id(synset)
        })
        .collect()
}

fn lookup_ic<'a>(setting: &MeasureSetting, ics: &'a BTreeMap<String, IcTable>) -> Result<Option<&'a IcTable>> {
    if !setting.measure.uses_information_content() {
        return Ok(None);
    }
    match &setting.corpus {
        None => Err(Error::MissingInformationContent),
        Some(c) => ics
            .get(c)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("no counts table for corpus `{c}`"))),
    }
}

fn evaluate_row(
    i: usize,
    d: &DistanceMatrix,
    nodes: &[NodeId],
    measure: Measure,
    taxonomy: &Taxonomy,
    ic: Option<&IcTable>,
) -> Result<f64> {
    let n = d.len();
    let mut visual = Vec::with_capacity(n - 1);
    let mut lexical = Vec::with_capacity(n - 1);
    for j in (0..n).filter(|&j| j != i) {
        visual.push(1.0 - d.get(i, j));
        lexical.push(taxonomy.similarity(measure, nodes[i], nodes[j], ic)?);
    }
    spearman_rho(&visual, &lexical).map_err(|e| match e {
        Error::UndefinedCorrelation(_) => Error::UndefinedCorrelation(format!(
            "class `{}` under {measure}: constant similarity ranking",
            d.labels()[i]
        )),
        e => e,
    })
}

/// ρ between one class's vector-similarity ranking over all other classes
/// and its taxonomy-similarity ranking.
pub fn evaluate_class(
    class_id: &str,
    d: &DistanceMatrix,
    measure: Measure,
    taxonomy: &Taxonomy,
    class_map: &ClassMap,
    ic: Option<&IcTable>,
) -> Result<f64> {
    if d.len() < 3 {
        return Err(Error::TooFewClasses(d.len()));
    }
    let i = d
        .index_of(class_id)
        .ok_or_else(|| Error::UnknownClass(class_id.to_string()))?;
    let nodes = class_nodes(d, taxonomy, class_map)?;
    evaluate_row(i, d, &nodes, measure, taxonomy, ic)
}

/// One distribution per setting; `ics` maps corpus labels to IC tables.
pub fn evaluate_all(
    d: &DistanceMatrix,
    settings: &[MeasureSetting],
    taxonomy: &Taxonomy,
    class_map: &ClassMap,
    ics: &BTreeMap<String, IcTable>,
) -> Result<Vec<RhoDistribution>> {
    if d.len() < 3 {
        return Err(Error::TooFewClasses(d.len()));
    }
    let nodes = class_nodes(d, taxonomy, class_map)?;
    settings
        .iter()
        .map(|setting| {
            let ic = lookup_ic(setting, ics)?;
            let rhos: Vec<f64> = (0..d.len())
                .into_par_iter()
                .map(|i| evaluate_row(i, d, &nodes, setting.measure, taxonomy, ic))
                .collect::<Result<_>>()?;
            let per_class = d.labels().iter().cloned().zip(rhos).collect();
            Ok(RhoDistribution::new(setting.clone(), per_class))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSubset {
    pub name: String,
    pub groups: Vec<String>,
}

impl GroupSubset {
    pub fn new<I, S>(name: impl Into<String>, groups: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        GroupSubset {
            name: name.into(),
            groups: groups.into_iter().map(Into::into).collect(),
        }
    }
}

/// `all`, then `top` (5a, 5b), `middle` (4a–4e) and `bottom` (3a, 3b) when
/// the manifest has those groups.
pub fn default_subsets(manifest: &LayerManifest) -> Vec<GroupSubset> {
    let mut out = vec![GroupSubset::new("all", manifest.groups().iter().cloned())];
    let candidates = [
        GroupSubset::new("top", ["5a", "5b"]),
        GroupSubset::new("middle", ["4a", "4b", "4c", "4d", "4e"]),
        GroupSubset::new("bottom", ["3a", "3b"]),
    ];
    for s in candidates {
        if s.groups.iter().all(|g| manifest.groups().contains(g)) {
            out.push(s);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub subset: String,
    pub groups: Vec<String>,
    pub setting: MeasureSetting,
    pub mean_rho: f64,
}

/// Mean ρ per group subset and setting. Group restriction is the last
/// pipeline stage, so restricting embeddings built without one equals
/// rebuilding them with `groups` set.
#[allow(clippy::too_many_arguments)]
pub fn layer_subset_sweep(
    embeddings: &ClassEmbeddings,
    subsets: &[GroupSubset],
    metric: Metric,
    settings: &[MeasureSetting],
    taxonomy: &Taxonomy,
    class_map: &ClassMap,
    ics: &BTreeMap<String, IcTable>,
) -> Result<Vec<SweepRow>> {
    let manifest = match embeddings.iter().next() {
        Some(e) => e.vector.manifest().clone(),
        None => return Err(Error::EmptyInput("no class embeddings".into())),
    };
    let mut rows = Vec::new();
    for subset in subsets {
        if subset.groups.is_empty() {
            return Err(Error::Config(format!("group subset `{}` is empty", subset.name)));
        }
        let selection = manifest.select_groups(&subset.groups)?;
        let d = embeddings.restrict(&selection).distance_matrix(metric)?;
        for dist in evaluate_all(&d, settings, taxonomy, class_map, ics)? {
            rows.push(SweepRow {
                subset: subset.name.clone(),
                groups: subset.groups.clone(),
                setting: dist.setting,
                mean_rho: dist.mean,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_rank(values: &[f64], i: usize) -> f64 {
        let greater = values.iter().filter(|&&v| v > values[i]).count();
        let equal = values.iter().filter(|&&v| v == values[i]).count();
        greater as f64 + (equal as f64 + 1.0) / 2.0
    }

    fn covariance_oracle(x: &[f64], y: &[f64]) -> f64 {
        let rx: Vec<f64> = (0..x.len()).map(|i| pairwise_rank(x, i)).collect();
        let ry: Vec<f64> = (0..y.len()).map(|i| pairwise_rank(y, i)).collect();
        let n = x.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
        let sx = (rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let sy = (ry.iter().map(|b| (b - my).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        cov / (sx * sy)
    }

    #[test]
    fn ranks_small_cases() {
        assert_eq!(rank_with_ties(&[3.0, 1.0, 2.0], true).unwrap(), vec![1.0, 3.0, 2.0]);
        assert_eq!(rank_with_ties(&[3.0, 1.0, 2.0], false).unwrap(), vec![3.0, 1.0, 2.0]);
        assert_eq!(rank_with_ties(&[5.0; 4], true).unwrap(), vec![2.5; 4]);
        assert_eq!(
            rank_with_ties(&[1.0, 2.0, 2.0, 0.0], true).unwrap(),
            vec![3.0, 1.5, 1.5, 4.0]
        );
        assert!(rank_with_ties(&[], true).is_err());
    }

    #[test]
    fn rho_extremes_and_errors() {
        let x = [0.3, 0.1, 0.1, 0.9, 0.5];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(spearman_rho(&x, &x).unwrap(), 1.0);
        assert_eq!(spearman_rho(&x, &neg).unwrap(), -1.0);
        let err = spearman_rho(&x, &[1.0; 5]).unwrap_err();
        assert!(err.to_string().contains("undefined correlation"));
        assert!(spearman_rho(&x, &x[..4]).is_err());
    }

    proptest! {
        #[test]
        fn ranks_match_pairwise_oracle(values in prop::collection::vec(0u8..6, 1..30)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let ranks = rank_with_ties(&values, true).unwrap();
            for (i, r) in ranks.iter().enumerate() {
                prop_assert_eq!(*r, pairwise_rank(&values, i));
            }
            let n = values.len() as f64;
            prop_assert_eq!(ranks.iter().sum::<f64>(), n * (n + 1.0) / 2.0);
        }

        #[test]
        fn rho_matches_covariance_oracle(
            pairs in prop::collection::vec((0u8..5, 0u8..5), 3..40)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            prop_assume!(x.iter().any(|&v| v != x[0]) && y.iter().any(|&v| v != y[0]));
            let rho = spearman_rho(&x, &y).unwrap();
            prop_assert!((rho - covariance_oracle(&x, &y)).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&rho));
        }

        #[test]
        fn rho_invariant_under_monotone_maps(
            x in prop::collection::vec(-10.0f64..10.0, 3..30),
            seed in any::<u64>()
        ) {
            prop_assume!(x.iter().any(|&v| v != x[0]));
            let y: Vec<f64> = x.iter().enumerate()
                .map(|(i, v)| v.sin() + ((seed >> (i % 60)) & 1) as f64)
                .collect();
            prop_assume!(y.iter().any(|&v| v != y[0]));
            let base = spearman_rho(&x, &y).unwrap();
            let mapped: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(spearman_rho(&mapped, &y).unwrap(), base);
        }
    }

    #[test]
    fn histogram_bins() {
        let h = Histogram::of_rho([-1.0, -0.95, -0.96, 0.0, 0.45, 0.5, 0.999, 1.0]);
        assert_eq!(h.edges.len(), 41);
        assert_eq!(h.edges[0], -1.0);
        assert_eq!(h.edges[40], 1.0);
        assert_eq!(h.total(), 8);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[20], 1);
        assert_eq!(h.counts[29], 1);
        assert_eq!(h.counts[30], 1);
        assert_eq!(h.counts[39], 2);
    }

    //      r
    //    /   \
    //   x     z
    //  / \     \
    // a   y     c
    //     |
    //     b
    fn hand_case() -> (DistanceMatrix, Taxonomy, ClassMap) {
        let tax =
            Taxonomy::from_edges([("x", "r"), ("z", "r"), ("a", "x"), ("y", "x"), ("b", "y"), ("c", "z")]).unwrap();
        let map = ClassMap::new([("A", "a"), ("B", "b"), ("C", "c")]).unwrap();
        let labels = vec!["A".to_string(), "B".into(), "C".into()];
        let d = DistanceMatrix::new(labels, vec![0.0, 0.3, 0.2, 0.3, 0.0, 0.9, 0.2, 0.9, 0.0]).unwrap();
        (d, tax, map)
    }

    #[test]
    fn three_class_hand_case() {
        let (d, tax, map) = hand_case();
        // A: visual C > B, path B (1/4) > C (1/5)
        assert_eq!(evaluate_class("A", &d, Measure::Path, &tax, &map, None).unwrap(), -1.0);
        assert_eq!(evaluate_class("B", &d, Measure::Path, &tax, &map, None).unwrap(), 1.0);
        assert_eq!(evaluate_class("C", &d, Measure::Path, &tax, &map, None).unwrap(), 1.0);
        let all = evaluate_all(
            &d,
            &[MeasureSetting::new(Measure::Path, None)],
            &tax,
            &map,
            &BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].per_class.len(), 3);
        assert!((all[0].mean - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(all[0].histogram.total(), 3);
    }

    #[test]
    fn affine_distance_transform_keeps_rho() {
        let (d, tax, map) = hand_case();
        let scaled = DistanceMatrix::new(
            d.labels().to_vec(),
            d.as_slice()
                .iter()
                .map(|v| if *v == 0.0 { 0.0 } else { 2.5 * v + 0.7 })
                .collect(),
        )
        .unwrap();
        for m in [Measure::Path, Measure::Wup, Measure::Lch] {
            for c in ["A", "B", "C"] {
                assert_eq!(
                    evaluate_class(c, &d, m, &tax, &map, None).unwrap(),
                    evaluate_class(c, &scaled, m, &tax, &map, None).unwrap()
                );
            }
        }
    }

    #[test]
    fn settings_and_errors() {
        let corpora = vec!["brown".to_string(), "bnc".to_string()];
        let s = MeasureSetting::expand(&Measure::ALL, &corpora);
        assert_eq!(s.len(), 9);
        assert_eq!(s[3].label(), "res_brown");
        assert_eq!(MeasureSetting::expand(&[Measure::Path], &corpora).len(), 1);

        let (d, tax, map) = hand_case();
        let res = [MeasureSetting::new(Measure::Res, None)];
        assert!(matches!(
            evaluate_all(&d, &res, &tax, &map, &BTreeMap::new()),
            Err(Error::MissingInformationContent)
        ));
        let two = d.select(&[0, 1]);
        assert!(matches!(
            evaluate_class("A", &two, Measure::Path, &tax, &map, None),
            Err(Error::TooFewClasses(2))
        ));
    }
}

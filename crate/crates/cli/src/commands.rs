use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};

use classvec::equation::{EquationOptions, EquationQuery};
use classvec::eval::{self, GroupSubset, MeasureSetting};
use classvec::io::{self, HighlightSet, ScatterStyle};
use classvec::manifold::EmbeddingCoordinates;
use classvec::pipeline::build_class_embeddings;
use classvec::synth::{self, GeneratorSpec};
use classvec::{
    ClassEmbeddings, ClassMap, Error, IcTable, LayerManifest, Measure, NormScope, NormStage, PipelineConfig, Taxonomy,
};

use crate::run::split_counts_arg;
use crate::{
    usage, ActivationInputs, BuildArgs, Command, EvalArgs, GenerateArgs, IsomapArgs, MapArgs, MdsArgs, PipelineArgs,
    SolveArgs, SweepArgs, TaxonomyInputs,
};

/// Runs a resolved command; returns output file names relative to its
/// output directory.
pub fn dispatch(command: &Command) -> Result<Vec<String>> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Build(a) => build(a),
        Command::Eval(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Mds(a) => mds(a),
        Command::Isomap(a) => isomap(a),
        Command::Solve(a) => solve(a),
        Command::Rerun(_) => unreachable!("reruns are handled before dispatch"),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

fn generate(a: &GenerateArgs) -> Result<Vec<String>> {
    let mut group_weights = BTreeMap::new();
    for gw in &a.group_weights {
        let (g, w) = gw
            .split_once('=')
            .ok_or_else(|| usage(format!("malformed --group-weight `{gw}`; expected GROUP=WEIGHT")))?;
        let w: f64 = w
            .parse()
            .map_err(|_| usage(format!("invalid weight in --group-weight `{gw}`")))?;
        group_weights.insert(g.to_string(), w);
    }
    let spec = GeneratorSpec {
        seed: a.seed,
        classes: a.classes,
        images_per_class: (a.images_min, a.images_max),
        layer_dim: a.layer_dim,
        block_size: a.block_size,
        max_branching: a.max_branching,
        root_branching: a.root_branching,
        noise: a.noise,
        group_weights,
        background: a.background,
        background_scale: a.background_scale,
        composites: a.composites,
        attributes: a.attributes,
        twins_per_attribute: a.twins_per_attribute,
        corpora: if a.corpora.is_empty() {
            GeneratorSpec::default().corpora
        } else {
            a.corpora.clone()
        },
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let dataset = synth::generate(&spec)?;
    let paths = dataset.write(&a.out)?;
    log::info!(
        "generated {} classes, {} images",
        dataset.class_map.len(),
        dataset.records.len()
    );
    let mut files = vec![
        file_name(&paths.manifest),
        file_name(&paths.activations),
        file_name(&paths.taxonomy),
        file_name(&paths.class_map),
    ];
    files.extend(paths.counts.iter().map(|(_, p)| file_name(p)));
    files.push(file_name(&paths.metadata));
    Ok(files)
}

fn pipeline_config(p: &PipelineArgs, groups: Option<Vec<String>>) -> Result<PipelineConfig> {
    let norm_stage = p.norm_stage.unwrap_or(if p.norm == NormScope::None {
        NormStage::None
    } else {
        NormStage::Class
    });
    let config = PipelineConfig {
        aggregation: p.agg,
        norm_scope: p.norm,
        norm_stage,
        threshold: p.threshold,
        groups,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn load_embeddings_from(
    inputs: &ActivationInputs,
    config: &PipelineConfig,
) -> Result<(Arc<LayerManifest>, ClassEmbeddings)> {
    let manifest = Arc::new(io::load_manifest(&inputs.manifest)?);
    if let Some(groups) = &config.groups {
        manifest.select_groups(groups).map_err(|e| usage(e.to_string()))?;
    }
    let class_map = io::load_class_map(&inputs.class_map)?;
    let records = io::stream_activations(&inputs.activations, manifest.clone())?;
    let embeddings = build_class_embeddings(records, config, &class_map, &manifest)?;
    log::info!("built {} class embeddings", embeddings.len());
    Ok((manifest, embeddings))
}

fn build(a: &BuildArgs) -> Result<Vec<String>> {
    let config = pipeline_config(&a.pipeline, a.groups.clone())?;
    let (_, embeddings) = load_embeddings_from(&a.inputs, &config)?;
    io::write_embeddings(a.out.join("embeddings.tsv"), &embeddings)?;
    let d = embeddings.distance_matrix(a.pipeline.metric)?;
    io::write_distance_matrix_csv(&d, a.out.join("distances.csv"))?;
    Ok(vec!["embeddings.tsv".into(), "distances.csv".into()])
}

struct TaxonomyContext {
    taxonomy: Taxonomy,
    class_map: ClassMap,
    settings: Vec<MeasureSetting>,
    ics: BTreeMap<String, IcTable>,
}

fn parse_measures(spec: &str) -> Result<Vec<Measure>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(Measure::ALL.to_vec());
    }
    let mut out: Vec<Measure> = Vec::new();
    for m in spec.split(',') {
        let m: Measure = m.trim().parse().map_err(|e: Error| usage(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn taxonomy_context(t: &TaxonomyInputs, class_map: &Path) -> Result<TaxonomyContext> {
    let measures = parse_measures(&t.measure)?;
    let taxonomy = io::load_taxonomy(&t.taxonomy)?;
    let class_map = io::load_class_map(class_map)?;
    class_map.validate_against(&taxonomy)?;
    let mut ics = BTreeMap::new();
    let mut corpora = Vec::new();
    for c in &t.counts {
        let (name, path) = split_counts_arg(c)?;
        if ics.contains_key(&name) {
            return Err(usage(format!("corpus `{name}` given twice")));
        }
        let counts = io::load_counts(&path)?;
        let table =
            IcTable::from_counts(&taxonomy, counts).with_context(|| format!("counts file {}", path.display()))?;
        ics.insert(name.clone(), table);
        corpora.push(name);
    }
    if corpora.is_empty() {
        if let Some(m) = measures.iter().find(|m| m.uses_information_content()) {
            return Err(usage(format!("measure `{m}` needs at least one --counts file")));
        }
    }
    let settings = MeasureSetting::expand(&measures, &corpora);
    Ok(TaxonomyContext {
        taxonomy,
        class_map,
        settings,
        ics,
    })
}

fn evaluate(a: &EvalArgs) -> Result<Vec<String>> {
    let ctx = taxonomy_context(&a.taxonomy, &a.class_map)?;
    let d = io::load_distance_matrix_csv(&a.distances)?;
    let dists = eval::evaluate_all(&d, &ctx.settings, &ctx.taxonomy, &ctx.class_map, &ctx.ics)?;
    io::write_rho_table_csv(&dists, a.out.join("rho.csv"))?;
    io::write_rho_summary_csv(&dists, a.out.join("summary.csv"))?;
    let mut files = vec!["rho.csv".to_string(), "summary.csv".to_string()];
    for dist in &dists {
        let name = format!("hist_{}.csv", dist.setting.label());
        io::write_histogram_csv(dist, a.out.join(&name))?;
        log::info!("{}: mean rho {:.4}", dist.setting, dist.mean);
        files.push(name);
    }
    Ok(files)
}

fn parse_subsets(args: &[String], manifest: &LayerManifest) -> Result<Vec<GroupSubset>> {
    if args.is_empty() {
        return Ok(eval::default_subsets(manifest));
    }
    args.iter()
        .map(|s| {
            let (name, groups) = s
                .split_once('=')
                .ok_or_else(|| usage(format!("malformed --subset `{s}`; expected NAME=G1,G2")))?;
            let groups: Vec<&str> = groups.split(',').map(str::trim).filter(|g| !g.is_empty()).collect();
            if name.is_empty() || groups.is_empty() {
                return Err(usage(format!("malformed --subset `{s}`; expected NAME=G1,G2")));
            }
            manifest.select_groups(&groups).map_err(|e| usage(e.to_string()))?;
            Ok(GroupSubset::new(name, groups))
        })
        .collect()
}

fn sweep(a: &SweepArgs) -> Result<Vec<String>> {
    let config = pipeline_config(&a.pipeline, None)?;
    let ctx = taxonomy_context(&a.taxonomy, &a.inputs.class_map)?;
    let manifest = io::load_manifest(&a.inputs.manifest)?;
    let subsets = parse_subsets(&a.subsets, &manifest)?;
    let (_, embeddings) = load_embeddings_from(&a.inputs, &config)?;
    let rows = eval::layer_subset_sweep(
        &embeddings,
        &subsets,
        a.pipeline.metric,
        &ctx.settings,
        &ctx.taxonomy,
        &ctx.class_map,
        &ctx.ics,
    )?;
    for r in &rows {
        log::info!("{} {}: mean rho {:.4}", r.subset, r.setting, r.mean_rho);
    }
    io::write_sweep_csv(&rows, a.out.join("sweep.csv"))?;
    Ok(vec!["sweep.csv".into()])
}

fn highlight_sets(paths: &[std::path::PathBuf], coords: &EmbeddingCoordinates) -> Result<Vec<HighlightSet>> {
    let fills = ScatterStyle::HIGHLIGHT_FILLS;
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            let labels: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            let unknown = labels
                .iter()
                .filter(|l| !coords.labels().iter().any(|c| c == *l))
                .count();
            if unknown > 0 {
                log::warn!("{unknown} labels in {} are not in the map", p.display());
            }
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(HighlightSet::new(name, labels, fills[i % fills.len()]))
        })
        .collect()
}

fn write_map(map: &MapArgs, coords: &EmbeddingCoordinates, requested: usize, files: &mut Vec<String>) -> Result<()> {
    io::write_coordinates_csv(coords, map.out.join("coords.csv"))?;
    io::write_eigenvalues_csv(coords, map.out.join("eigenvalues.csv"))?;
    files.extend(["coords.csv".to_string(), "eigenvalues.csv".to_string()]);
    if requested == 2 && coords.dims() == 2 {
        let sets = highlight_sets(&map.highlights, coords)?;
        io::write_scatter_svg(coords, &sets, map.out.join("scatter.svg"))?;
        files.push("scatter.svg".into());
    } else if !map.highlights.is_empty() {
        log::warn!("highlights only apply to 2-D scatter plots; ignored");
    }
    Ok(())
}

fn mds(a: &MdsArgs) -> Result<Vec<String>> {
    if a.dims == 0 {
        return Err(usage("--dims must be at least 1"));
    }
    let d = io::load_distance_matrix_csv(&a.map.distances)?;
    let coords = classvec::classical_mds(&d, a.dims)?;
    let mut files = Vec::new();
    write_map(&a.map, &coords, a.dims, &mut files)?;
    Ok(files)
}

fn isomap(a: &IsomapArgs) -> Result<Vec<String>> {
    if a.dims == 0 || a.k_neighbors == 0 {
        return Err(usage("--dims and --k-neighbors must be at least 1"));
    }
    let d = io::load_distance_matrix_csv(&a.map.distances)?;
    let iso = classvec::isomap(&d, a.k_neighbors, a.dims, a.largest_component).map_err(|e| match e {
        Error::DisconnectedGraph { .. } => anyhow::Error::new(e)
            .context("increase --k-neighbors or pass --largest-component to embed the largest component only"),
        e => e.into(),
    })?;
    let mut files = Vec::new();
    write_map(&a.map, &iso.coordinates, a.dims, &mut files)?;
    io::write_distance_matrix_csv(&iso.geodesics, a.map.out.join("geodesics.csv"))?;
    files.push("geodesics.csv".into());
    Ok(files)
}

fn solve(a: &SolveArgs) -> Result<Vec<String>> {
    if a.top == 0 {
        return Err(usage("--top must be at least 1"));
    }
    let query: EquationQuery = a.query.parse().map_err(|e: Error| usage(e.to_string()))?;
    let manifest = Arc::new(io::load_manifest(&a.manifest)?);
    let embeddings = io::load_embeddings(&a.embeddings, &manifest)?;
    let options = EquationOptions {
        top_k: a.top,
        exclude_operands: !a.keep_operands,
    };
    let result = query.solve(&embeddings, &options)?;
    io::write_equation_csv(&result, a.out.join("equation.csv"))?;
    println!("{}", result.query);
    println!("rank\tclass_id\tsimilarity");
    for (i, hit) in result.hits.iter().enumerate() {
        println!("{}\t{}\t{:.6}", i + 1, hit.class_id, hit.similarity);
    }
    Ok(vec!["equation.csv".into()])
}

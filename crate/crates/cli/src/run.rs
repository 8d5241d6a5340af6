//! Run manifests: every invocation records its resolved command, input
//! digests and output digests in `run.json` so it can be replayed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{commands, usage, Command, RerunArgs};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(path).with_context(|| format!("cannot open {}", path.display()))
}

/// `NAME=FILE` or `FILE` (named after its stem).
pub fn split_counts_arg(arg: &str) -> Result<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((name, file)) if !name.is_empty() && !file.is_empty() => Ok((name.to_string(), file.into())),
        Some(_) => Err(usage(format!("malformed --counts `{arg}`; expected NAME=FILE or FILE"))),
        None => {
            let path = PathBuf::from(arg);
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| usage(format!("cannot derive a corpus name from `{arg}`")))?;
            let name = stem.strip_prefix("counts_").unwrap_or(stem).to_string();
            Ok((name, path))
        }
    }
}

/// Make every input path absolute, name every counts file, and point the
/// command at `out_override` when given. Returns the input paths.
fn resolve(command: &mut Command, out_override: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut inputs = Vec::new();
    let mut input = |p: &mut PathBuf| -> Result<()> {
        *p = absolute(p)?;
        inputs.push(p.clone());
        Ok(())
    };
    let out = match command {
        Command::Generate(a) => &mut a.out,
        Command::Build(a) => {
            input(&mut a.inputs.manifest)?;
            input(&mut a.inputs.activations)?;
            input(&mut a.inputs.class_map)?;
            &mut a.out
        }
        Command::Eval(a) => {
            input(&mut a.distances)?;
            input(&mut a.class_map)?;
            input(&mut a.taxonomy.taxonomy)?;
            resolve_counts(&mut a.taxonomy.counts, &mut input)?;
            &mut a.out
        }
        Command::Sweep(a) => {
            input(&mut a.inputs.manifest)?;
            input(&mut a.inputs.activations)?;
            input(&mut a.inputs.class_map)?;
            input(&mut a.taxonomy.taxonomy)?;
            resolve_counts(&mut a.taxonomy.counts, &mut input)?;
            &mut a.out
        }
        Command::Mds(a) => resolve_map(&mut a.map, &mut input)?,
        Command::Isomap(a) => resolve_map(&mut a.map, &mut input)?,
        Command::Solve(a) => {
            input(&mut a.embeddings)?;
            input(&mut a.manifest)?;
            &mut a.out
        }
        Command::Rerun(_) => bail!("a rerun cannot be recorded"),
    };
    if let Some(o) = out_override {
        *out = o.to_path_buf();
    }
    std::fs::create_dir_all(&*out).with_context(|| format!("cannot create {}", out.display()))?;
    *out = absolute(out)?;
    Ok(inputs)
}

fn resolve_counts(counts: &mut [String], input: &mut impl FnMut(&mut PathBuf) -> Result<()>) -> Result<()> {
    for c in counts.iter_mut() {
        let (name, mut path) = split_counts_arg(c)?;
        input(&mut path)?;
        *c = format!("{name}={}", path.display());
    }
    Ok(())
}

fn resolve_map<'a>(
    map: &'a mut crate::MapArgs,
    input: &mut impl FnMut(&mut PathBuf) -> Result<()>,
) -> Result<&'a mut PathBuf> {
    input(&mut map.distances)?;
    for h in &mut map.highlights {
        input(h)?;
    }
    Ok(&mut map.out)
}

fn output_dir(command: &Command) -> &Path {
    match command {
        Command::Generate(a) => &a.out,
        Command::Build(a) => &a.out,
        Command::Eval(a) => &a.out,
        Command::Sweep(a) => &a.out,
        Command::Mds(a) => &a.map.out,
        Command::Isomap(a) => &a.map.out,
        Command::Solve(a) => &a.out,
        Command::Rerun(a) => a.out.as_deref().unwrap_or(Path::new(".")),
    }
}

/// Run one subcommand and record it in `run.json` next to its outputs.
pub fn execute(mut command: Command, out_override: Option<&Path>) -> Result<RunManifest> {
    let inputs = resolve(&mut command, out_override)?;
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let files = commands::dispatch(&command)?;
    let out = output_dir(&command).to_path_buf();
    let outputs = files
        .iter()
        .map(|f| {
            Ok(FileDigest {
                path: f.clone(),
                sha256: sha256_file(&out.join(f))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        inputs,
        outputs,
    };
    let path = out.join(RUN_MANIFEST);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(manifest)
}

pub fn rerun(args: &RerunArgs) -> Result<()> {
    let text =
        std::fs::read_to_string(&args.manifest).with_context(|| format!("cannot read {}", args.manifest.display()))?;
    let recorded: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("invalid run manifest {}", args.manifest.display()))?;
    if recorded.version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest was written by version {}, this is {}",
            recorded.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    for input in &recorded.inputs {
        let now = sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            bail!("input {} changed since the recorded run", input.path);
        }
    }
    let fresh = execute(recorded.command.clone(), args.out.as_deref())?;
    let changed: Vec<&str> = recorded
        .outputs
        .iter()
        .filter(|o| !fresh.outputs.contains(o))
        .map(|o| o.path.as_str())
        .collect();
    if !changed.is_empty() || fresh.outputs.len() != recorded.outputs.len() {
        bail!("outputs differ from the recorded run: {}", changed.join(", "));
    }
    log::info!("reproduced {} output files", fresh.outputs.len());
    Ok(())
}

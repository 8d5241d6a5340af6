use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regex::Regex;

fn classvec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_classvec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = classvec(args);
    assert!(
        out.status.success(),
        "classvec {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    /// Generated data in `data/` and a default build in `build/`.
    fn new(extra: &[&str]) -> Fixture {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let data = s(&root.join("data"));
        let mut args = vec![
            "generate",
            "--out",
            &data,
            "--seed",
            "2",
            "--classes",
            "24",
            "--images-min",
            "3",
            "--images-max",
            "5",
            "--layer-dim",
            "96",
        ];
        args.extend(extra);
        ok(&args);
        let f = Fixture { _tmp: tmp, root };
        ok(&[
            "build",
            "--manifest",
            &f.data("manifest.tsv"),
            "--activations",
            &f.data("activations.tsv"),
            "--class-map",
            &f.data("class_map.tsv"),
            "--out",
            &f.dir("build"),
        ]);
        f
    }

    fn data(&self, name: &str) -> String {
        s(&self.root.join("data").join(name))
    }

    fn dir(&self, name: &str) -> String {
        s(&self.root.join(name))
    }

    fn distances(&self) -> String {
        s(&self.root.join("build/distances.csv"))
    }

    fn eval(&self, out: &str, extra: &[&str]) -> Output {
        let (d, cm, t) = (self.distances(), self.data("class_map.tsv"), self.data("taxonomy.tsv"));
        let mut args = vec![
            "eval",
            "--distances",
            &d,
            "--class-map",
            &cm,
            "--taxonomy",
            &t,
            "--out",
            out,
        ];
        args.extend(extra);
        classvec(&args)
    }
}

fn names(dir: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn two_corpora_give_nine_distributions() {
    let f = Fixture::new(&[]);
    let out = f.dir("eval");
    let (brown, bnc) = (f.data("counts_brown.tsv"), f.data("counts_bnc.tsv"));
    let res = f.eval(&out, &["--counts", &brown, "--counts", &bnc]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let hists: Vec<String> = names(&out).into_iter().filter(|n| n.starts_with("hist_")).collect();
    assert_eq!(hists.len(), 9, "{hists:?}");
    for label in [
        "path",
        "lch",
        "wup",
        "res_brown",
        "res_bnc",
        "jcn_brown",
        "jcn_bnc",
        "lin_brown",
        "lin_bnc",
    ] {
        assert!(hists.contains(&format!("hist_{label}.csv")), "missing {label}");
    }
    let summary = std::fs::read_to_string(format!("{out}/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 10);
}

#[test]
fn one_measure_gives_one_distribution() {
    let f = Fixture::new(&[]);
    let out = f.dir("eval");
    let res = f.eval(&out, &["--measure", "wup"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(names(&out), ["hist_wup.csv", "rho.csv", "run.json", "summary.csv"]);
}

#[test]
fn information_content_measure_needs_counts() {
    let f = Fixture::new(&[]);
    let res = f.eval(&f.dir("eval"), &["--measure", "res"]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("--counts"), "{err}");
}

#[test]
fn incompatible_normalization_is_a_usage_error() {
    let f = Fixture::new(&[]);
    let res = classvec(&[
        "build",
        "--manifest",
        &f.data("manifest.tsv"),
        "--activations",
        &f.data("activations.tsv"),
        "--class-map",
        &f.data("class_map.tsv"),
        "--norm",
        "none",
        "--norm-stage",
        "image",
        "--out",
        &f.dir("bad"),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("incompatible"));
}

/// Parsed `<circle>` elements: label -> (x, y, fill).
fn circles(svg: &str) -> BTreeMap<String, (f64, f64, String)> {
    let re = Regex::new(
        r#"<circle cx="([-0-9.]+)" cy="([-0-9.]+)" r="[0-9.]+" fill="(#[0-9a-f]{6})"><title>([^<]+)</title></circle>"#,
    )
    .unwrap();
    re.captures_iter(svg)
        .map(|c| {
            (
                c[4].to_string(),
                (c[1].parse().unwrap(), c[2].parse().unwrap(), c[3].to_string()),
            )
        })
        .collect()
}

#[test]
fn mds_map_separates_highlighted_families() {
    let f = Fixture::new(&["--root-branching", "2"]);
    // family = the root child above each class
    let taxonomy = std::fs::read_to_string(f.data("taxonomy.tsv")).unwrap();
    let parent: BTreeMap<&str, &str> = taxonomy.lines().map(|l| l.split_once('\t').unwrap()).collect();
    let root = "n00000000";
    let family = |synset: &str| {
        let mut s = synset.to_string();
        while parent[s.as_str()] != root {
            s = parent[s.as_str()].to_string();
        }
        s
    };
    let class_map = std::fs::read_to_string(f.data("class_map.tsv")).unwrap();
    let mut families: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in class_map.lines() {
        let (class, synset) = line.split_once('\t').unwrap();
        families.entry(family(synset)).or_default().push(class.to_string());
    }
    assert_eq!(families.len(), 2);
    let mut highlight_args = Vec::new();
    for (k, members) in families.values().enumerate() {
        let p = f.root.join(format!("family{k}.txt"));
        std::fs::write(&p, members.join("\n") + "\n").unwrap();
        highlight_args.push("--highlight".to_string());
        highlight_args.push(s(&p));
    }
    let out = f.dir("mds");
    let d = f.distances();
    let mut args = vec!["mds", "--distances", &d, "--out", &out];
    args.extend(highlight_args.iter().map(String::as_str));
    ok(&args);
    assert_eq!(
        names(&out),
        ["coords.csv", "eigenvalues.csv", "run.json", "scatter.svg"]
    );

    let points = circles(&std::fs::read_to_string(format!("{out}/scatter.svg")).unwrap());
    assert_eq!(points.len(), 24);
    let by_fill: Vec<Vec<(f64, f64)>> = families
        .values()
        .map(|members| {
            let fill = &points[&members[0]].2;
            members
                .iter()
                .map(|m| {
                    assert_eq!(&points[m].2, fill, "one shade per family");
                    (points[m].0, points[m].1)
                })
                .collect()
        })
        .collect();
    assert_ne!(
        points[&families.values().next().unwrap()[0]].2,
        points[&families.values().nth(1).unwrap()[0]].2
    );
    let centroid = |ps: &[(f64, f64)]| {
        let n = ps.len() as f64;
        (
            ps.iter().map(|p| p.0).sum::<f64>() / n,
            ps.iter().map(|p| p.1).sum::<f64>() / n,
        )
    };
    let (c0, c1) = (centroid(&by_fill[0]), centroid(&by_fill[1]));
    let axis = (c1.0 - c0.0, c1.1 - c0.1);
    let mid = ((c0.0 + c1.0) / 2.0, (c0.1 + c1.1) / 2.0);
    let side = |p: &(f64, f64)| (p.0 - mid.0) * axis.0 + (p.1 - mid.1) * axis.1;
    let correct =
        by_fill[0].iter().filter(|p| side(p) < 0.0).count() + by_fill[1].iter().filter(|p| side(p) > 0.0).count();
    let separation = correct as f64 / 24.0;
    assert!(separation > 0.9, "separation {separation}");
}

#[test]
fn three_dimensional_maps_skip_the_svg() {
    let f = Fixture::new(&[]);
    let out = f.dir("mds3");
    ok(&["mds", "--distances", &f.distances(), "--dims", "3", "--out", &out]);
    assert_eq!(names(&out), ["coords.csv", "eigenvalues.csv", "run.json"]);
    let header = std::fs::read_to_string(format!("{out}/coords.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 4);
}

#[test]
fn disconnected_isomap_needs_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let xs: [f64; 6] = [0.0, 1.0, 2.5, 100.0, 101.0, 102.5];
    let mut csv = String::from("label");
    for i in 0..xs.len() {
        csv.push_str(&format!(",p{i}"));
    }
    csv.push('\n');
    for (i, a) in xs.iter().enumerate() {
        csv.push_str(&format!("p{i}"));
        for b in &xs {
            csv.push_str(&format!(",{}", (a - b).abs()));
        }
        csv.push('\n');
    }
    let d = tmp.path().join("d.csv");
    std::fs::write(&d, csv).unwrap();
    let out = s(&tmp.path().join("iso"));
    let base = [
        "isomap",
        "--distances",
        &s(&d),
        "--k-neighbors",
        "1",
        "--dims",
        "1",
        "--out",
        &out,
    ];
    let res = classvec(&base);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("disconnected") || err.contains("components"), "{err}");

    ok(&[&base[..], &["--largest-component"]].concat());
    let coords = std::fs::read_to_string(format!("{out}/coords.csv")).unwrap();
    assert_eq!(coords.lines().count(), 4, "{coords}");
}

#[test]
fn solve_checks_grammar_and_empty_differences() {
    let f = Fixture::new(&[]);
    let (emb, manifest, out) = (
        s(&f.root.join("build/embeddings.tsv")),
        f.data("manifest.tsv"),
        f.dir("solve"),
    );
    let solve = |q: &str| classvec(&["solve", q, "--embeddings", &emb, "--manifest", &manifest, "--out", &out]);

    let res = solve("c0000 - c0001");
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = String::from_utf8_lossy(&res.stdout);
    assert!(!table.contains("c0000\t") && table.lines().count() > 1, "{table}");
    let csv = std::fs::read_to_string(format!("{out}/equation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7, "{csv}");

    assert!(solve("c0002 - (c0000 - c0001)").status.success());

    for bad in [
        "c0000",
        "c0000 -",
        "c0000 - c0001 - c0002",
        "c0000 - (c0001 - c0002",
        "(c0000) - c0001",
    ] {
        let res = solve(bad);
        assert_eq!(res.status.code(), Some(2), "{bad}");
        assert!(
            String::from_utf8_lossy(&res.stderr).contains("invalid equation"),
            "{bad}"
        );
    }

    let res = solve("c0000 - c0000");
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty difference"));

    let res = solve("c0000 - nobody");
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn rerun_detects_changed_inputs() {
    let f = Fixture::new(&[]);
    let manifest = s(&f.root.join("build/run.json"));
    ok(&["rerun", "--manifest", &manifest, "--out", &f.dir("again")]);
    assert_eq!(
        std::fs::read(f.root.join("build/distances.csv")).unwrap(),
        std::fs::read(f.root.join("again/distances.csv")).unwrap()
    );
    std::fs::write(f.data("class_map.tsv"), "c0000\tn00000001\n").unwrap();
    let res = classvec(&["rerun", "--manifest", &manifest]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("changed"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let f = Fixture::new(&[]);
    let run = |threads: &str, out: &str| {
        let res = Command::new(env!("CARGO_BIN_EXE_classvec"))
            .env("CLASSVEC_THREADS", threads)
            .args([
                "build",
                "--manifest",
                &f.data("manifest.tsv"),
                "--activations",
                &f.data("activations.tsv"),
                "--class-map",
                &f.data("class_map.tsv"),
                "--out",
                out,
            ])
            .output()
            .unwrap();
        assert!(res.status.success());
        std::fs::read(format!("{out}/distances.csv")).unwrap()
    };
    assert_eq!(run("1", &f.dir("t1")), run("4", &f.dir("t4")));
    let res = Command::new(env!("CARGO_BIN_EXE_classvec"))
        .env("CLASSVEC_THREADS", "zero")
        .args(["mds", "--distances", &f.distances(), "--out", &f.dir("x")])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
}

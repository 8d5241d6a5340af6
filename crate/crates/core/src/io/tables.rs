//! CSV outputs.

use std::path::Path;

use crate::equation::EquationResult;
use crate::error::{Error, Result};
use crate::eval::{RhoDistribution, SweepRow};
use crate::manifold::EmbeddingCoordinates;
use crate::matrix::DistanceMatrix;

pub const MATRIX_SIGNIFICANT_DIGITS: usize = 9;

/// `%.{digits}g`-style formatting: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros removed.
pub fn format_significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header `label,<labels...>`; each row starts with its label.
pub fn write_distance_matrix_csv(matrix: &DistanceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = matrix.len();
    for i in 0..n {
        for j in 0..i {
            assert_eq!(matrix.get(i, j), matrix.get(j, i), "distance matrix must be symmetric");
        }
    }
    let mut w = writer(path)?;
    let mut header = vec!["label".to_string()];
    header.extend(matrix.labels().iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..n {
        let mut row = Vec::with_capacity(n + 1);
        row.push(matrix.labels()[i].clone());
        row.extend(
            matrix
                .row(i)
                .iter()
                .map(|&d| format_significant(d, MATRIX_SIGNIFICANT_DIGITS)),
        );
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn load_distance_matrix_csv(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut records = r.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| csv_err(path, e))?,
        None => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "empty distance matrix file".into(),
            })
        }
    };
    if header.get(0) != Some("label") {
        return Err(Error::parse(path, 1, "header must start with `label`"));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = labels.len();
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rows == n {
            return Err(Error::parse(path, line, "more rows than labels"));
        }
        if rec.len() != n + 1 {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} cells, found {}", n + 1, rec.len()),
            ));
        }
        if rec.get(0) != Some(labels[rows].as_str()) {
            return Err(Error::parse(
                path,
                line,
                format!("row label `{}` does not match column `{}`", &rec[0], labels[rows]),
            ));
        }
        for cell in rec.iter().skip(1) {
            let d: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, line, format!("invalid number `{cell}`")))?;
            data.push(d);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("{rows} rows for {n} labels"),
        });
    }
    DistanceMatrix::new(labels, data).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// `label,x,y[,z]`; more than three columns are named `d1..dk`.
pub fn write_coordinates_csv(coords: &EmbeddingCoordinates, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let k = coords.dims();
    let mut header = vec!["label".to_string()];
    if k <= 3 {
        header.extend(["x", "y", "z"][..k].iter().map(|s| s.to_string()));
    } else {
        header.extend((1..=k).map(|i| format!("d{i}")));
    }
    let mut w = writer(path)?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, label) in coords.labels().iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(coords.point(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn write_eigenvalues_csv(coords: &EmbeddingCoordinates, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["component", "eigenvalue"])
        .map_err(|e| csv_err(path, e))?;
    for (i, l) in coords.eigenvalues().iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// One row per class and setting: `class_id,measure,corpus,rho`.
pub fn write_rho_table_csv(distributions: &[RhoDistribution], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["class_id", "measure", "corpus", "rho"])
        .map_err(|e| csv_err(path, e))?;
    for d in distributions {
        for (class_id, rho) in &d.per_class {
            w.write_record([
                class_id.as_str(),
                d.setting.measure.name(),
                d.setting.corpus.as_deref().unwrap_or(""),
                &rho.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(path, w)
}

pub fn write_rho_summary_csv(distributions: &[RhoDistribution], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["measure", "corpus", "classes", "mean_rho"])
        .map_err(|e| csv_err(path, e))?;
    for d in distributions {
        w.write_record([
            d.setting.measure.name(),
            d.setting.corpus.as_deref().unwrap_or(""),
            &d.per_class.len().to_string(),
            &d.mean.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn write_histogram_csv(distribution: &RhoDistribution, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let h = &distribution.histogram;
    let mut w = writer(path)?;
    w.write_record(["bin_lower", "bin_upper", "count"])
        .map_err(|e| csv_err(path, e))?;
    for (i, count) in h.counts.iter().enumerate() {
        w.write_record([
            format_significant(h.edges[i], 6),
            format_significant(h.edges[i + 1], 6),
            count.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["subset", "groups", "measure", "corpus", "mean_rho"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.subset.as_str(),
            &r.groups.join(" "),
            r.setting.measure.name(),
            r.setting.corpus.as_deref().unwrap_or(""),
            &r.mean_rho.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// `rank,class_id,similarity`.
pub fn write_equation_csv(result: &EquationResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["rank", "class_id", "similarity"])
        .map_err(|e| csv_err(path, e))?;
    for (i, hit) in result.hits.iter().enumerate() {
        w.write_record([(i + 1).to_string(), hit.class_id.clone(), hit.similarity.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

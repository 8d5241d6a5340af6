//! 2-D scatter plots as SVG 1.1.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifold::EmbeddingCoordinates;

/// Labels drawn in a common shade.
#[derive(Clone, Debug, PartialEq)]
pub struct HighlightSet {
    pub name: String,
    pub labels: BTreeSet<String>,
    pub fill: String,
}

impl HighlightSet {
    pub fn new<I, S>(name: impl Into<String>, labels: I, fill: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        HighlightSet {
            name: name.into(),
            labels: labels.into_iter().map(Into::into).collect(),
            fill: fill.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterStyle {
    pub width: f64,
    pub height: f64,
    /// Fraction of each side left empty around the points.
    pub margin: f64,
    pub radius: f64,
    pub default_fill: String,
}

impl Default for ScatterStyle {
    fn default() -> Self {
        ScatterStyle {
            width: 800.0,
            height: 800.0,
            margin: 0.05,
            radius: 4.0,
            default_fill: "#c8c8c8".into(),
        }
    }
}

impl ScatterStyle {
    /// Fills handed out to highlight sets in order: black, dark grey, then colors.
    pub const HIGHLIGHT_FILLS: [&'static str; 6] = ["#000000", "#555555", "#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn axis_map(values: impl Iterator<Item = f64> + Clone, lo_px: f64, hi_px: f64) -> impl Fn(f64) -> f64 {
    let min = values.clone().fold(f64::INFINITY, f64::min);
    let max = values.fold(f64::NEG_INFINITY, f64::max);
    move |v| {
        if max > min {
            lo_px + (v - min) / (max - min) * (hi_px - lo_px)
        } else {
            (lo_px + hi_px) / 2.0
        }
    }
}

/// One circle per point; the first set containing a label decides its fill.
/// Unhighlighted points are drawn first so highlights stay visible.
pub fn render_scatter_svg(
    coords: &EmbeddingCoordinates,
    highlights: &[HighlightSet],
    style: &ScatterStyle,
) -> Result<String> {
    if coords.dims() != 2 {
        return Err(Error::Config(format!(
            "scatter plots need 2-D coordinates, got {} dimensions (use the CSV output)",
            coords.dims()
        )));
    }
    let (mx, my) = (style.margin * style.width, style.margin * style.height);
    let n = coords.labels().len();
    let fx = axis_map((0..n).map(|i| coords.point(i)[0]), mx, style.width - mx);
    // SVG y grows downward
    let fy = axis_map((0..n).map(|i| coords.point(i)[1]), style.height - my, my);

    let set_of = |label: &str| highlights.iter().position(|h| h.labels.contains(label));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| set_of(&coords.labels()[i]).map_or(0, |s| highlights.len() - s));

    let mut out = String::new();
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = style.width,
        h = style.height
    )
    .unwrap();
    writeln!(
        out,
        r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##,
        style.width, style.height
    )
    .unwrap();
    for i in order {
        let label = &coords.labels()[i];
        let p = coords.point(i);
        let fill = set_of(label).map_or(style.default_fill.as_str(), |s| highlights[s].fill.as_str());
        writeln!(
            out,
            r#"<circle cx="{:.3}" cy="{:.3}" r="{}" fill="{}"><title>{}</title></circle>"#,
            fx(p[0]),
            fy(p[1]),
            style.radius,
            escape(fill),
            escape(label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_scatter_svg(
    coords: &EmbeddingCoordinates,
    highlights: &[HighlightSet],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let svg = render_scatter_svg(coords, highlights, &ScatterStyle::default())?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

//! 2-D cluster scatter plots as standalone SVG.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use clustop_core::cluster::read_assignment;
use clustop_core::EmbeddingMatrix;

use crate::labels::read_aligned;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 30.0;
const LEGEND: f64 = 200.0;
const NOISE_COLOR: &str = "#b0b0b0";
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22",
    "#17becf", "#393b79",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Glyph {
    Circle,
    Square,
    Triangle,
    Diamond,
    Cross,
}

const GLYPHS: [Glyph; 5] = [Glyph::Circle, Glyph::Square, Glyph::Triangle, Glyph::Diamond, Glyph::Cross];

/// Colour of cluster `label`; noise is gray.
pub fn cluster_color(label: i64) -> &'static str {
    if label < 0 {
        NOISE_COLOR
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

fn glyph(out: &mut String, g: Glyph, x: f64, y: f64, fill: &str) {
    let r = 4.0;
    let _ = match g {
        Glyph::Circle => writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#),
        Glyph::Square => writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{fill}"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        Glyph::Triangle => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{fill}"/>"#,
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        Glyph::Diamond => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{fill}"/>"#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
        Glyph::Cross => writeln!(
            out,
            r#"<path d="M{:.2},{:.2}H{:.2}M{:.2},{:.2}V{:.2}" stroke="{fill}" stroke-width="2.5"/>"#,
            x - r,
            y,
            x + r,
            x,
            y - r,
            y + r
        ),
    };
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of a 2-D embedding coloured by cluster, with optional glyphs
/// per reference label and a legend.
pub fn render_svg(y: &EmbeddingMatrix, labels: &[i64], truth: Option<&[i64]>, title: &str) -> Result<String> {
    if y.d() != 2 {
        bail!("plotting needs a 2-D embedding, got {} dimensions", y.d());
    }
    if labels.len() != y.n() || truth.is_some_and(|t| t.len() != y.n()) {
        bail!("{} points but {} labels", y.n(), labels.len());
    }
    let bounds = |c: usize| {
        let (lo, hi) = y
            .rows()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])));
        if !lo.is_finite() || hi - lo == 0.0 {
            (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = bounds(0);
    let (y0, y1) = bounds(1);
    let plot_w = WIDTH - LEGEND - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN - 20.0;
    let top = MARGIN + 20.0;
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * plot_w;
    let sy = |v: f64| top + (y1 - v) / (y1 - y0) * plot_h;

    let classes: Vec<i64> = truth
        .map(|t| t.iter().copied().collect::<BTreeSet<_>>().into_iter().collect())
        .unwrap_or_default();
    let glyph_of = |i: usize| {
        truth.map_or(Glyph::Circle, |t| {
            let c = classes.binary_search(&t[i]).expect("class present");
            GLYPHS[c % GLYPHS.len()]
        })
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{:.2}" font-size="14">{}</text>"#, MARGIN, escape(title));
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#cccccc"/>"##
    );
    // Noise first so clusters draw on top.
    for pass_noise in [true, false] {
        for (i, (&l, row)) in labels.iter().zip(y.rows()).enumerate() {
            if (l < 0) == pass_noise {
                glyph(&mut out, glyph_of(i), sx(row[0]), sy(row[1]), cluster_color(l));
            }
        }
    }

    let k = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut sizes = vec![0usize; k];
    let mut noise = 0;
    for &l in labels {
        if l < 0 {
            noise += 1;
        } else {
            sizes[l as usize] += 1;
        }
    }
    let lx = WIDTH - LEGEND + 10.0;
    let mut ly = top + 10.0;
    let mut entry = |out: &mut String, g: Glyph, color: &str, text: &str| {
        glyph(out, g, lx, ly, color);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 12.0, ly + 4.0, escape(text));
        ly += 18.0;
    };
    for (c, size) in sizes.iter().enumerate() {
        entry(&mut out, Glyph::Circle, cluster_color(c as i64), &format!("cluster {c} ({size})"));
    }
    if noise > 0 {
        entry(&mut out, Glyph::Circle, NOISE_COLOR, &format!("noise ({noise})"));
    }
    for (i, c) in classes.iter().enumerate() {
        entry(&mut out, GLYPHS[i % GLYPHS.len()], "#333333", &format!("label {c}"));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// 2-D embedding (CTEM).
    #[arg(long)]
    pub embedding: PathBuf,
    /// Assignment JSONL.
    #[arg(long)]
    pub assignment: PathBuf,
    /// Reference labels JSONL, drawn as glyph shapes.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "clusters.svg")]
    pub out: PathBuf,
}

pub fn cmd_plot(embedding: &Path, assignment: &Path, labels: Option<&Path>, out: &Path) -> Result<()> {
    let y = EmbeddingMatrix::read_ctem(embedding)
        .with_context(|| format!("reading {}", embedding.display()))?;
    let (ids, a) = read_assignment(assignment)?;
    let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
    let truth = labels.map(|p| read_aligned(p, &ids)).transpose()?;
    let title = format!("{} clusters, {} noise", a.k, a.noise_count());
    let svg = render_svg(&y, &a.labels, truth.as_deref(), &title)?;
    std::fs::write(out, svg).with_context(|| format!("writing {}", out.display()))
}

//! Self-contained HTML report with SVG charts and CSV tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::listening::SimilarityCategory;
use super::screening::ListenerScreenResult;
use super::stats::{CcrAggregate, SimilarityAggregate};
use crate::corpus::Style;
use crate::error::{Error, Result};

/// One attention matrix to draw: decoder steps × phonemes.
#[derive(Debug, Clone)]
pub struct AlignmentPlot {
    pub title: String,
    pub phonemes: Vec<String>,
    pub alignment: Array2<f32>,
}

#[derive(Debug, Clone, Default)]
pub struct ReportInput<'a> {
    pub title: String,
    pub similarity: &'a [SimilarityAggregate],
    pub ccr: Option<&'a CcrAggregate>,
    pub screening: &'a [ListenerScreenResult],
    pub alignments: &'a [AlignmentPlot],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub html: PathBuf,
    pub svgs: Vec<PathBuf>,
    pub csvs: Vec<PathBuf>,
}

const CATEGORY_COLORS: [(SimilarityCategory, &str); 4] = [
    (SimilarityCategory::DiffSure, "#1b4f72"),
    (SimilarityCategory::DiffUnsure, "#5dade2"),
    (SimilarityCategory::SameUnsure, "#fff333"),
    (SimilarityCategory::SameSure, "#f4d03f"),
];

fn color(c: SimilarityCategory) -> &'static str {
    CATEGORY_COLORS.iter().find(|(k, _)| *k == c).map(|(_, v)| *v).unwrap_or("#999")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Stacked segments (category, bottom %, top %) in legend order, bottom up.
pub fn similarity_bar_segments(agg: &SimilarityAggregate) -> Vec<(SimilarityCategory, f64, f64)> {
    let mut bottom = 0.0;
    SimilarityCategory::LEGEND_ORDER
        .iter()
        .map(|&c| {
            let top = bottom + agg.percentage(c);
            let seg = (c, bottom, top);
            bottom = top;
            seg
        })
        .collect()
}

const W: f64 = 520.0;
const H: f64 = 300.0;
const PAD_L: f64 = 50.0;
const PAD_B: f64 = 40.0;
const PAD_T: f64 = 30.0;

fn similarity_svg(aggs: &[&SimilarityAggregate], reference: Style) -> String {
    let plot_h = H - PAD_B - PAD_T;
    let plot_w = W - PAD_L - 150.0;
    let slot = plot_w / aggs.len().max(1) as f64;
    let y = |pct: f64| PAD_T + plot_h * (1.0 - pct / 100.0);
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = write!(s, r#"<text x="{}" y="16" text-anchor="middle" font-size="13">Compared with {reference} reference</text>"#, PAD_L + plot_w / 2.0);
    for pct in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let _ = write!(s, r##"<line x1="{PAD_L}" x2="{}" y1="{y}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{pct}</text>"##, PAD_L + plot_w, PAD_L - 4.0, y(pct) + 4.0, y = y(pct));
    }
    for (i, a) in aggs.iter().enumerate() {
        let x = PAD_L + slot * i as f64 + slot * 0.1;
        for (c, lo, hi) in similarity_bar_segments(a) {
            let _ = write!(
                s,
                r#"<rect class="seg" data-category="{}" x="{x:.2}" y="{:.3}" width="{:.2}" height="{:.3}" fill="{}"><title>{}: {:.1}%</title></rect>"#,
                c.label(),
                y(hi),
                slot * 0.8,
                y(lo) - y(hi),
                color(c),
                esc(c.label()),
                hi - lo
            );
        }
        let _ = write!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x + slot * 0.4, H - PAD_B + 16.0, esc(&a.system));
    }
    // legend, top entry first so it reads like the stack
    for (i, c) in SimilarityCategory::LEGEND_ORDER.iter().rev().enumerate() {
        let ly = PAD_T + 18.0 * i as f64;
        let lx = PAD_L + plot_w + 12.0;
        let _ = write!(s, r#"<rect x="{lx}" y="{ly}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#, color(*c), lx + 16.0, ly + 10.0, esc(c.label()));
    }
    s.push_str("</svg>");
    s
}

fn ccr_svg(agg: &CcrAggregate) -> String {
    let plot_h = H - PAD_B - PAD_T;
    let plot_w = W - PAD_L - 20.0;
    let lo = agg.scores.iter().map(|s| s.ci_low).fold(0.0f64, f64::min).min(-0.5).floor();
    let hi = agg.scores.iter().map(|s| s.ci_high).fold(0.0f64, f64::max).max(0.5).ceil();
    let y = |v: f64| PAD_T + plot_h * (hi - v) / (hi - lo);
    let slot = plot_w / agg.scores.len().max(1) as f64;
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = write!(s, r#"<text x="{}" y="16" text-anchor="middle" font-size="13">CCR score (mean, {:.1}% t interval)</text>"#, PAD_L + plot_w / 2.0, 100.0 * agg.interval_confidence);
    let mut v = lo;
    while v <= hi + 1e-9 {
        let stroke = if v == 0.0 { "#888" } else { "#ddd" };
        let _ = write!(s, r#"<line x1="{PAD_L}" x2="{}" y1="{yy}" y2="{yy}" stroke="{stroke}"/><text x="{}" y="{}" text-anchor="end">{v}</text>"#, PAD_L + plot_w, PAD_L - 4.0, y(v) + 4.0, yy = y(v));
        v += 0.5;
    }
    for (i, sc) in agg.scores.iter().enumerate() {
        let x = PAD_L + slot * (i as f64 + 0.5);
        let _ = write!(
            s,
            r##"<line x1="{x:.2}" x2="{x:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/><line x1="{:.2}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/><line x1="{:.2}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/><circle cx="{x:.2}" cy="{:.2}" r="4" fill="#c0392b"><title>{}: {:.3} [{:.3}, {:.3}]</title></circle><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            y(sc.ci_low), y(sc.ci_high),
            x - 6.0, x + 6.0, y(sc.ci_low), y(sc.ci_low),
            x - 6.0, x + 6.0, y(sc.ci_high), y(sc.ci_high),
            y(sc.mean), esc(&sc.label), sc.mean, sc.ci_low, sc.ci_high,
            H - PAD_B + 16.0, esc(&sc.label)
        );
    }
    s.push_str("</svg>");
    s
}

fn alignment_svg(plot: &AlignmentPlot) -> String {
    let (steps, phones) = plot.alignment.dim();
    let cell_w = (600.0 / steps.max(1) as f64).clamp(1.0, 8.0);
    let cell_h = 12.0;
    let left = 48.0;
    let (w, h) = (left + cell_w * steps as f64 + 10.0, cell_h * phones as f64 + 40.0);
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" font-family="sans-serif" font-size="10">"#);
    for (j, name) in plot.phonemes.iter().enumerate().take(phones) {
        // first phoneme at the bottom
        let yy = cell_h * (phones - 1 - j) as f64;
        let _ = write!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 4.0, yy + cell_h - 2.0, esc(name));
    }
    let peak = plot.alignment.iter().fold(0.0f32, |m, v| m.max(*v)).max(1e-6);
    for ((t, j), v) in plot.alignment.indexed_iter() {
        let shade = 255 - (255.0 * (v / peak).clamp(0.0, 1.0)) as u8;
        if shade == 255 {
            continue;
        }
        let _ = write!(
            s,
            r#"<rect x="{:.2}" y="{:.1}" width="{cell_w:.2}" height="{cell_h}" fill="rgb({shade},{shade},255)"/>"#,
            left + cell_w * t as f64,
            cell_h * (phones - 1 - j) as f64
        );
    }
    let _ = write!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">decoder step</text>"#, left + cell_w * steps as f64 / 2.0, h - 8.0);
    s.push_str("</svg>");
    s
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn similarity_csv(aggs: &[SimilarityAggregate]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["system".to_string(), "reference".into(), "n".into()];
    header.extend(SimilarityCategory::LEGEND_ORDER.iter().map(|c| c.label().to_string()));
    w.write_record(&header)?;
    for a in aggs {
        let mut row = vec![a.system.clone(), a.reference.to_string(), a.n.to_string()];
        row.extend(SimilarityCategory::LEGEND_ORDER.iter().map(|&c| format!("{:.4}", a.percentage(c))));
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?).expect("csv is utf-8"))
}

fn table<R: AsRef<str>>(header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> String {
    let mut s = String::from("<table><tr>");
    for h in header {
        let _ = write!(s, "<th>{}</th>", esc(h));
    }
    s.push_str("</tr>");
    for row in rows {
        s.push_str("<tr>");
        for c in row {
            let _ = write!(s, "<td>{}</td>", esc(c.as_ref()));
        }
        s.push_str("</tr>");
    }
    s.push_str("</table>");
    s
}

/// Writes `report.html` plus every chart as SVG and every table as CSV
/// into `out_dir`.
pub fn render_report(input: &ReportInput<'_>, out_dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = ReportFiles { html: out_dir.join("report.html"), svgs: Vec::new(), csvs: Vec::new() };
    let title = if input.title.is_empty() { "Listening test report" } else { input.title.as_str() };
    let mut body = format!("<h1>{}</h1>", esc(title));

    if !input.similarity.is_empty() {
        body.push_str("<section id=\"similarity\"><h2>Style similarity</h2><div class=\"panes\">");
        for style in [Style::Lombard, Style::Normal] {
            let aggs: Vec<&SimilarityAggregate> = input.similarity.iter().filter(|a| a.reference == style).collect();
            if aggs.is_empty() {
                continue;
            }
            let svg = similarity_svg(&aggs, style);
            let path = out_dir.join(format!("similarity_{style}.svg"));
            write(&path, &svg)?;
            files.svgs.push(path);
            body.push_str(&svg);
        }
        body.push_str("</div>");
        let csv = similarity_csv(input.similarity)?;
        let path = out_dir.join("similarity.csv");
        write(&path, &csv)?;
        files.csvs.push(path);
        let mut header = vec!["system", "reference", "n"];
        header.extend(SimilarityCategory::LEGEND_ORDER.iter().map(|c| c.label()));
        body.push_str(&table(
            &header,
            input.similarity.iter().map(|a| {
                let mut row = vec![a.system.clone(), a.reference.to_string(), a.n.to_string()];
                row.extend(SimilarityCategory::LEGEND_ORDER.iter().map(|&c| format!("{:.1}%", a.percentage(c))));
                row
            }),
        ));
        body.push_str("</section>");
    }

    if let Some(ccr) = input.ccr {
        let svg = ccr_svg(ccr);
        let path = out_dir.join("ccr.svg");
        write(&path, &svg)?;
        files.svgs.push(path);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "n", "mean", "sd", "t_critical", "ci_low", "ci_high", "degenerate"])?;
        for s in &ccr.scores {
            w.serialize((&s.label, s.n, s.mean, s.sd, s.t_critical, s.ci_low, s.ci_high, s.degenerate))?;
        }
        let path = out_dir.join("ccr.csv");
        write(&path, &String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?).expect("utf-8"))?;
        files.csvs.push(path);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["higher", "lower", "difference", "t", "df", "p", "p_adjusted", "significant"])?;
        for c in &ccr.comparisons {
            w.serialize((&c.higher, &c.lower, c.difference, c.t, c.df, c.p, c.p_adjusted, c.significant))?;
        }
        let path = out_dir.join("ccr_pairwise.csv");
        write(&path, &String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?).expect("utf-8"))?;
        files.csvs.push(path);
        let _ = write!(body, "<section id=\"ccr\"><h2>Comparison category rating</h2>{svg}");
        body.push_str(&table(
            &["system", "n", "mean", "interval"],
            ccr.scores.iter().map(|s| {
                let flag = if s.degenerate { " (zero width)" } else { "" };
                vec![s.label.clone(), s.n.to_string(), format!("{:.3}", s.mean), format!("[{:.3}, {:.3}]{flag}", s.ci_low, s.ci_high)]
            }),
        ));
        body.push_str(&table(
            &["higher", "lower", "difference", "adjusted p", "significant"],
            ccr.comparisons.iter().map(|c| {
                vec![c.higher.clone(), c.lower.clone(), format!("{:.3}", c.difference), format!("{:.3e}", c.p_adjusted), c.significant.to_string()]
            }),
        ));
        body.push_str("</section>");
    }

    if !input.screening.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in input.screening {
            w.serialize(r)?;
        }
        let path = out_dir.join("screening.csv");
        write(&path, &String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?).expect("utf-8"))?;
        files.csvs.push(path);
        let excluded = input.screening.iter().filter(|r| !r.included).count();
        let _ = write!(body, "<section id=\"screening\"><h2>Listener screening</h2><p>{} listeners, {excluded} excluded.</p>", input.screening.len());
        body.push_str(&table(
            &["listener", "null pairs", "anchors", "included"],
            input.screening.iter().map(|r| {
                vec![r.listener_id.clone(), format!("{} ({})", r.null_pair_pass, r.null_pairs_rated), format!("{} ({})", r.anchor_pass, r.anchors_rated), r.included.to_string()]
            }),
        ));
        body.push_str("</section>");
    }

    if !input.alignments.is_empty() {
        body.push_str("<section id=\"alignments\"><h2>Alignments</h2>");
        for (i, plot) in input.alignments.iter().enumerate() {
            let svg = alignment_svg(plot);
            let path = out_dir.join(format!("alignment_{i:02}.svg"));
            write(&path, &svg)?;
            files.svgs.push(path);
            let _ = write!(body, "<figure>{svg}<figcaption>{}</figcaption></figure>", esc(&plot.title));
        }
        body.push_str("</section>");
    }

    let html = format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title><style>body{{font-family:sans-serif;max-width:1100px;margin:auto}}table{{border-collapse:collapse;margin:8px 0}}td,th{{border:1px solid #ccc;padding:2px 6px}}.panes{{display:flex;flex-wrap:wrap}}</style></head><body>{body}</body></html>\n",
        esc(title)
    );
    write(&files.html, &html)?;
    Ok(files)
}

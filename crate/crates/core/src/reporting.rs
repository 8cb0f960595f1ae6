//! Tables (CSV, Markdown) and SVG heatmaps for analysis results.

use std::fmt::Write as _;

use fce_stats::TestResult64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    AnalysisBundle, DemographicReport, ExclusionRow, Factor, H1Row, InteractionGrid,
    RangeHistogram, SweepReport, BUCKET_LABELS,
};
use crate::protocol::{ChainCondition, InfoCondition};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("p-value {0} is outside [0, 1]")]
    PValueRange(f64),
}

pub const FOOTNOTE: &str = "* p < 0.05, ** p < 0.01, *** p < 0.001";
pub const DEGENERATE: &str = "/";

pub fn significance_stars(p: f64) -> Result<&'static str, ReportError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ReportError::PValueRange(p));
    }
    Ok(if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    })
}

/// One decimal, without a negative zero.
pub fn fmt1(x: f64) -> String {
    let s = format!("{x:.1}");
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn stars(test: &TestResult64) -> &'static str {
    if test.degenerate {
        ""
    } else {
        significance_stars(test.p_value).unwrap_or("")
    }
}

/// `(statistic, stars, p)` cells; degenerate tests render "/".
fn test_cells(test: &TestResult64, statistic: String) -> [String; 3] {
    if test.degenerate {
        [DEGENERATE.into(), String::new(), DEGENERATE.into()]
    } else {
        let s = stars(test);
        [statistic, s.into(), format!("{}{s}", fmt_p(test.p_value))]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDoc {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footnote: String,
}

impl TableDoc {
    fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        TableDoc {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            footnote: FOOTNOTE.into(),
        }
    }
}

/// Renders a table. CSV output holds the header and data rows only.
pub fn render_table(doc: &TableDoc, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&doc.headers).expect("in-memory write");
            for row in &doc.rows {
                w.write_record(row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
        Format::Markdown => {
            let cell = |c: &str| c.replace('|', "\\|");
            let line = |cells: &[String]| {
                let mut s = String::from("|");
                for c in cells {
                    let _ = write!(s, " {} |", cell(c));
                }
                s.push('\n');
                s
            };
            let mut out = format!("### {}\n\n", doc.title);
            out += &line(&doc.headers);
            out += &format!("|{}\n", "---|".repeat(doc.headers.len()));
            for row in &doc.rows {
                out += &line(row);
            }
            out += &format!("\n{}\n", doc.footnote);
            out
        }
    }
}

/// Parses CSV produced by [`render_table`] back into header and rows.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), csv::Error> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()?;
    Ok((headers, rows))
}

pub fn h1_table(rows: &[H1Row]) -> TableDoc {
    let mut t = TableDoc::new(
        "Mann-Whitney U test of mu1 vs mu2",
        &[
            "Model", "Story", "mu1", "mu2", "Diff.", "Stat.", "Sig.", "p",
        ],
    );
    for r in rows {
        let s = &r.summary;
        let [stat, sig, p] = test_cells(&s.test, format!("{:.0}", s.test.statistic));
        t.rows.push(vec![
            r.model.clone(),
            r.story.to_string(),
            fmt1(s.mu1),
            fmt1(s.mu2),
            fmt1(s.strength),
            stat,
            sig,
            p,
        ]);
    }
    t
}

pub fn demographic_table(reports: &[DemographicReport]) -> TableDoc {
    let factor = reports.first().map_or(Factor::Culture, |r| r.factor);
    let (title, a, b) = match factor {
        Factor::Culture => (
            "Kruskal-Wallis test across cultures",
            "Korean",
            "European American",
        ),
        Factor::Gender => ("Kruskal-Wallis test across genders", "man", "woman"),
    };
    let mut t = TableDoc::new(
        title,
        &["Model", "Story", a, b, "Diff.", "Stat.", "Sig.", "p"],
    );
    for r in reports {
        let [stat, sig, p] = test_cells(&r.test, fmt1(r.test.statistic));
        t.rows.push(vec![
            r.model.clone(),
            r.story.to_string(),
            fmt1(r.levels[0].summary.strength),
            fmt1(r.levels[1].summary.strength),
            fmt1(r.diff),
            stat,
            sig,
            p,
        ]);
    }
    t
}

pub fn sweep_table(reports: &[SweepReport]) -> TableDoc {
    let levels: Vec<String> = match reports.first() {
        Some(r) => r.levels.iter().map(|l| l.level.clone()).collect(),
        None => InfoCondition::ALL.iter().map(|c| c.to_string()).collect(),
    };
    let mut headers = vec!["Model".to_string(), "Story".to_string()];
    headers.extend(levels);
    headers.extend(["Stat.", "Sig.", "p"].map(String::from));
    let mut t = TableDoc::new("Kruskal-Wallis test across conditions", &[]);
    t.headers = headers;
    for r in reports {
        let mut row = vec![r.model.clone(), r.story.to_string()];
        row.extend(r.levels.iter().map(|l| fmt1(l.summary.strength)));
        row.extend(test_cells(&r.omnibus, fmt1(r.omnibus.statistic)));
        t.rows.push(row);
    }
    t
}

pub fn posthoc_table(reports: &[SweepReport]) -> TableDoc {
    let mut t = TableDoc::new(
        "Dunn post-test (Holm) and Mann-Whitney follow-up",
        &[
            "Model", "Story", "Pair", "Dunn z", "Dunn p", "U", "MW p", "Relation",
        ],
    );
    for r in reports {
        for row in &r.posthoc {
            let dunn_sig = significance_stars(row.dunn_p_adjusted).unwrap_or("");
            let [u, _, mw_p] = test_cells(
                &row.mann_whitney,
                format!("{:.0}", row.mann_whitney.statistic),
            );
            t.rows.push(vec![
                r.model.clone(),
                r.story.to_string(),
                format!("{} vs {}", row.first, row.second),
                format!("{:.2}", row.dunn_z),
                format!("{}{dunn_sig}", fmt_p(row.dunn_p_adjusted)),
                u,
                mw_p,
                format!("{} {} {}", row.first, row.relation, row.second),
            ]);
        }
    }
    t
}

pub fn grid_table(grid: &InteractionGrid) -> TableDoc {
    let mut headers = vec!["P \\ R"];
    headers.extend(ChainCondition::ALL.iter().map(|c| c.tag()));
    let mut t = TableDoc::new(
        format!("FCE strength grid: {} / {}", grid.model, grid.story),
        &headers,
    );
    for p in InfoCondition::ALL {
        let mut row = vec![p.to_string()];
        row.extend(grid.cells[p.index()].iter().map(|&v| fmt1(v)));
        t.rows.push(row);
    }
    t.footnote = String::new();
    t
}

pub fn histogram_table(histograms: &[(String, RangeHistogram)]) -> TableDoc {
    let mut headers = vec!["Model"];
    headers.extend(BUCKET_LABELS);
    headers.push("Total");
    let mut t = TableDoc::new("Range of perceived agreement on option 1", &headers);
    for (model, h) in histograms {
        let mut row = vec![model.clone()];
        row.extend(h.counts.iter().map(usize::to_string));
        row.push(h.total().to_string());
        t.rows.push(row);
    }
    t.footnote = String::new();
    t
}

pub fn exclusion_table(rows: &[ExclusionRow]) -> TableDoc {
    let mut t = TableDoc::new(
        "Valid and excluded answers per cell",
        &[
            "Model",
            "Story",
            "P",
            "R",
            "Planned",
            "OK",
            "Not run",
            "Failed",
            "Invalid choice",
            "Refusal",
            "Ambiguous",
            "Non-numeric",
        ],
    );
    for r in rows {
        t.rows.push(vec![
            r.model.clone(),
            r.story.to_string(),
            r.info.map(|c| c.to_string()).unwrap_or_default(),
            r.chain.map(|c| c.to_string()).unwrap_or_default(),
            r.planned.to_string(),
            r.ok.to_string(),
            r.not_run.to_string(),
            r.failed.to_string(),
            r.invalid_choice.to_string(),
            r.refusal.to_string(),
            r.ambiguous.to_string(),
            r.non_numeric.to_string(),
        ]);
    }
    t.footnote = String::new();
    t
}

/// Named tables for a bundle, e.g. `("h1-1", doc)`.
pub fn bundle_tables(bundle: &AnalysisBundle) -> Vec<(String, TableDoc)> {
    let key = bundle.hypothesis.key();
    let mut out = Vec::new();
    if !bundle.h1.is_empty() {
        out.push((key.to_string(), h1_table(&bundle.h1)));
    }
    if !bundle.demographic.is_empty() {
        out.push((key.to_string(), demographic_table(&bundle.demographic)));
    }
    if !bundle.sweeps.is_empty() {
        out.push((key.to_string(), sweep_table(&bundle.sweeps)));
        out.push((format!("{key}-posthoc"), posthoc_table(&bundle.sweeps)));
    }
    for g in &bundle.grids {
        out.push((format!("{key}-{}-{}", g.model, g.story), grid_table(g)));
    }
    if !bundle.histograms.is_empty() {
        out.push((key.to_string(), histogram_table(&bundle.histograms)));
    }
    out.push((
        format!("{key}-exclusions"),
        exclusion_table(&bundle.exclusions),
    ));
    out
}

/// `(file stem, svg)` for every grid in the bundle.
pub fn bundle_heatmaps(bundle: &AnalysisBundle) -> Vec<(String, String)> {
    bundle
        .grids
        .iter()
        .map(|g| {
            let rows: Vec<&str> = InfoCondition::ALL.iter().map(|c| c.tag()).collect();
            let cols: Vec<&str> = ChainCondition::ALL.iter().map(|c| c.tag()).collect();
            let title = format!("FCE strength: {} / {}", g.model, g.story);
            (
                format!("heatmap-{}-{}", g.model, g.story),
                heatmap_svg(&g.cells, &rows, &cols, &title),
            )
        })
        .collect()
}

const NEGATIVE: (f64, f64, f64) = (33.0, 102.0, 172.0);
const MIDPOINT: (f64, f64, f64) = (247.0, 247.0, 247.0);
const POSITIVE: (f64, f64, f64) = (178.0, 24.0, 43.0);

/// Diverging blue-white-red colour for `t` in `[-1, 1]`, white at 0.
pub fn diverging_color(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(-1.0, 1.0);
    let end = if t < 0.0 { NEGATIVE } else { POSITIVE };
    let w = t.abs();
    let mix = |a: f64, b: f64| (a + (b - a) * w).round() as u8;
    (
        mix(MIDPOINT.0, end.0),
        mix(MIDPOINT.1, end.1),
        mix(MIDPOINT.2, end.2),
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG heatmap of a 4x4 matrix, colour scale symmetric about 0
/// and scaled to the largest absolute cell.
pub fn heatmap_svg(
    matrix: &[[f64; 4]; 4],
    row_labels: &[&str],
    col_labels: &[&str],
    title: &str,
) -> String {
    const CELL: usize = 70;
    const LEFT: usize = 50;
    const TOP: usize = 60;
    let scale = matrix.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let width = LEFT + 4 * CELL + 20;
    let height = TOP + 4 * CELL + 20;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"  <title>{}</title>"#, xml_escape(title));
    let _ = writeln!(
        s,
        r#"  <text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2,
        xml_escape(title)
    );
    for (j, label) in col_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            LEFT + j * CELL + CELL / 2,
            TOP - 10,
            xml_escape(label)
        );
    }
    for (i, row) in matrix.iter().enumerate() {
        let label = row_labels.get(i).copied().unwrap_or("");
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{}" text-anchor="end" font-size="12">{}</text>"#,
            LEFT - 8,
            TOP + i * CELL + CELL / 2 + 4,
            xml_escape(label)
        );
        for (j, &v) in row.iter().enumerate() {
            let (r, g, b) = diverging_color(v / scale);
            let (x, y) = (LEFT + j * CELL, TOP + i * CELL);
            let _ = writeln!(
                s,
                r##"  <rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{r:02x}{g:02x}{b:02x}" stroke="#ffffff"/>"##
            );
            let _ = writeln!(
                s,
                r#"  <text class="value" x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 5,
                fmt1(v)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{FceSample, FceSummary, LevelSummary};
    use fce_stats::{Method, Sidedness};
    use proptest::prelude::*;

    fn test_result(statistic: f64, p: f64, degenerate: bool) -> TestResult64 {
        TestResult64 {
            method: Method::MannWhitney,
            statistic,
            p_value: p,
            degenerate,
            n: vec![40, 40],
            sidedness: Sidedness::TwoSided,
        }
    }

    fn h1_row() -> H1Row {
        H1Row {
            model: "claude-3".into(),
            story: "term_paper".into(),
            summary: FceSummary {
                mu1: 60.0,
                mu2: 40.0,
                strength: 20.0,
                n1: 40,
                n2: 40,
                test: test_result(1600.0, 1e-18, false),
            },
        }
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.0005), Ok("***"));
        assert_eq!(significance_stars(0.005), Ok("**"));
        assert_eq!(significance_stars(0.03), Ok("*"));
        assert_eq!(significance_stars(0.2), Ok(""));
        assert_eq!(significance_stars(0.05), Ok(""));
        assert!(significance_stars(1.5).is_err());
        assert!(significance_stars(f64::NAN).is_err());
    }

    #[test]
    fn h1_markdown_row() {
        let md = render_table(&h1_table(&[h1_row()]), Format::Markdown);
        assert!(md.contains("60.0 | 40.0 | 20.0 | 1600 | ***"), "{md}");
        assert!(md.contains(FOOTNOTE));
    }

    #[test]
    fn degenerate_statistic_renders_slash() {
        let level = |name: &str| LevelSummary {
            level: name.into(),
            summary: h1_row().summary,
            sample: FceSample::default(),
        };
        let r = DemographicReport {
            model: "claude-3".into(),
            story: "term_paper".into(),
            factor: Factor::Culture,
            levels: vec![level("Korean"), level("European American")],
            diff: 0.0,
            test: test_result(0.0, 1.0, true),
        };
        let md = render_table(&demographic_table(&[r]), Format::Markdown);
        assert!(md.contains("| 0.0 | / |"), "{md}");
    }

    #[test]
    fn empty_report_has_headers_and_footnote_only() {
        let md = render_table(&h1_table(&[]), Format::Markdown);
        assert_eq!(md.lines().filter(|l| l.starts_with('|')).count(), 2);
        assert!(md.trim_end().ends_with(FOOTNOTE));
        assert_eq!(render_table(&h1_table(&[]), Format::Csv).lines().count(), 1);
    }

    #[test]
    fn negative_zero_is_suppressed() {
        assert_eq!(fmt1(-0.0), "0.0");
        assert_eq!(fmt1(-0.04), "0.0");
        assert_eq!(fmt1(-9.5), "-9.5");
    }

    fn fills(svg: &str) -> Vec<String> {
        let doc = roxmltree::Document::parse(svg).unwrap();
        doc.descendants()
            .filter(|n| n.attribute("class") == Some("cell"))
            .map(|n| n.attribute("fill").unwrap().to_string())
            .collect()
    }

    #[test]
    fn heatmap_structure_and_midpoint() {
        let labels = ["P1", "P2", "P3", "P4"];
        let cols = ["R1", "R2", "R3", "R4"];
        let svg = heatmap_svg(&[[0.0; 4]; 4], &labels, &cols, "zero & co");
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let values: Vec<&str> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("value"))
            .filter_map(|n| n.text())
            .collect();
        assert_eq!(values.len(), 16);
        assert!(values.iter().all(|v| *v == "0.0"));
        assert!(fills(&svg).iter().all(|f| f == "#f7f7f7"));
    }

    #[test]
    fn heatmap_negation_mirrors_colours() {
        let m = [
            [8.3, 20.0, -9.5, 19.5],
            [1.0, 2.0, 3.0, 4.0],
            [-1.0, 0.0, 5.5, -20.0],
            [0.1, 0.2, 0.3, 0.4],
        ];
        let neg = m.map(|row| row.map(|v| -v));
        let a = fills(&heatmap_svg(&m, &[], &[], "m"));
        let b = fills(&heatmap_svg(&neg, &[], &[], "-m"));
        for (k, v) in m.iter().flatten().enumerate() {
            let t = v / 20.0;
            let hex = |(r, g, b): (u8, u8, u8)| format!("#{r:02x}{g:02x}{b:02x}");
            assert_eq!(a[k], hex(diverging_color(t)));
            assert_eq!(b[k], hex(diverging_color(-t)));
        }
        assert_eq!(diverging_color(1.0), (178, 24, 43));
        assert_eq!(diverging_color(-1.0), (33, 102, 172));
    }

    proptest! {
        #[test]
        fn csv_round_trip(cells in prop::collection::vec(prop::collection::vec("[a-z ,\"|0-9.-]{0,8}", 3), 0..6)) {
            let mut doc = TableDoc::new("t", &["a", "b", "c"]);
            doc.rows = cells;
            let (headers, rows) = parse_csv(&render_table(&doc, Format::Csv)).unwrap();
            prop_assert_eq!(headers, doc.headers);
            let nonempty: Vec<Vec<String>> = doc.rows.into_iter().filter(|r| r.iter().any(|c| !c.is_empty())).collect();
            let parsed: Vec<Vec<String>> = rows.into_iter().filter(|r| r.iter().any(|c| !c.is_empty())).collect();
            prop_assert_eq!(parsed, nonempty);
        }

        #[test]
        fn mirrored_colours_have_equal_weight(t in -1.0f64..1.0) {
            let (a, b) = (diverging_color(t), diverging_color(-t));
            let w = |c: (u8, u8, u8), end: (f64, f64, f64)| (f64::from(c.1) - MIDPOINT.1) / (end.1 - MIDPOINT.1);
            let (pos, neg) = if t >= 0.0 { (a, b) } else { (b, a) };
            prop_assert!((w(pos, POSITIVE) - w(neg, NEGATIVE)).abs() < 0.01);
        }
    }
}

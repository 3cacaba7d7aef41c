//! Report tables, SVG charts and the text summary.
//!
//! Analysis writes the CSV tables; everything here that is human-facing is
//! rendered from those tables so `report` can run without the raw outcomes.

use std::fmt::Write as _;
use std::path::Path;

use crate::stats::{AccuracyCell, Dimension, McNemarRow};

use super::PipelineError;

/// One panel: accuracy per stratum, split by relationship type.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub name: String,
    pub dimensions: Vec<Dimension>,
    pub cells: Vec<AccuracyCell>,
}

impl AccuracyTable {
    pub fn file_name(name: &str) -> String {
        format!("accuracy_{name}.csv")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::io(path, e))?;
        let mut header: Vec<&str> = self.dimensions.iter().map(|d| d.as_str()).collect();
        header.extend(["n", "n_correct", "accuracy"]);
        w.write_record(&header).map_err(|e| PipelineError::io(path, e))?;
        for c in &self.cells {
            let mut rec: Vec<String> = c.stratum.iter().map(|(_, v)| v.clone()).collect();
            rec.extend([c.n.to_string(), c.n_correct.to_string(), c.accuracy.to_string()]);
            w.write_record(&rec).map_err(|e| PipelineError::io(path, e))?;
        }
        w.flush().map_err(|e| PipelineError::io(path, e))
    }

    pub fn read_csv(name: &str, path: &Path) -> Result<AccuracyTable, PipelineError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::io(path, e))?;
        let header = r.headers().map_err(|e| PipelineError::io(path, e))?.clone();
        let k = header.len().saturating_sub(3);
        let bad = |m: String| PipelineError::Analysis(format!("{}: {m}", path.display()));
        if header.len() < 3 || header.iter().skip(k).collect::<Vec<_>>() != ["n", "n_correct", "accuracy"] {
            return Err(bad("not an accuracy table".into()));
        }
        let dimensions = header
            .iter()
            .take(k)
            .map(|h| h.parse::<Dimension>().map_err(&bad))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cells = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| PipelineError::io(path, e))?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{e}")));
            cells.push(AccuracyCell {
                stratum: dimensions
                    .iter()
                    .copied()
                    .zip(rec.iter().take(k).map(String::from))
                    .collect(),
                n: num(k)? as usize,
                n_correct: num(k + 1)? as usize,
                accuracy: num(k + 2)?,
            });
        }
        Ok(AccuracyTable {
            name: name.to_string(),
            dimensions,
            cells,
        })
    }

    /// The non-relationship dimension values identifying a bar group.
    fn group_label(&self, cell: &AccuracyCell) -> String {
        let parts: Vec<&str> = cell
            .stratum
            .iter()
            .filter(|(d, _)| *d != Dimension::RelationshipType)
            .map(|(_, v)| v.as_str())
            .collect();
        if parts.is_empty() {
            "all".into()
        } else {
            parts.join(" / ")
        }
    }

    /// (group, same-gender accuracy, different-gender accuracy) in table order.
    pub fn bars(&self) -> Vec<(String, Option<f64>, Option<f64>)> {
        let mut out: Vec<(String, Option<f64>, Option<f64>)> = Vec::new();
        for c in &self.cells {
            let label = self.group_label(c);
            let idx = match out.iter().position(|(l, _, _)| *l == label) {
                Some(i) => i,
                None => {
                    out.push((label, None, None));
                    out.len() - 1
                }
            };
            match c.value(Dimension::RelationshipType) {
                Some("same_gender") => out[idx].1 = Some(c.accuracy),
                Some("different_gender") => out[idx].2 = Some(c.accuracy),
                _ => {}
            }
        }
        out
    }
}

pub const MCNEMAR_HEADER: [&str; 8] = [
    "grouping",
    "stratum",
    "n_pairs",
    "b",
    "c",
    "statistic",
    "method",
    "p_value",
];

fn stratum_text(stratum: &[(Dimension, String)]) -> String {
    stratum
        .iter()
        .map(|(d, v)| format!("{d}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_mcnemar_csv(path: &Path, rows: &[McNemarRow]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::io(path, e))?;
    w.write_record(MCNEMAR_HEADER)
        .map_err(|e| PipelineError::io(path, e))?;
    for r in rows {
        w.write_record([
            r.grouping.clone(),
            stratum_text(&r.stratum),
            r.n_pairs.to_string(),
            r.result.b.to_string(),
            r.result.c.to_string(),
            r.result.statistic.to_string(),
            r.result.method.as_str().to_string(),
            r.result.p_value.to_string(),
        ])
        .map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// McNemar rows as plain records: (grouping, stratum, n_pairs, b, c, p).
pub fn read_mcnemar_csv(
    path: &Path,
) -> Result<Vec<(String, String, usize, u64, u64, f64)>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::io(path, e))?;
    let bad = |m: String| PipelineError::Analysis(format!("{}: {m}", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| PipelineError::io(path, e))?;
        if rec.len() != MCNEMAR_HEADER.len() {
            return Err(bad("wrong column count".into()));
        }
        out.push((
            rec[0].to_string(),
            rec[1].to_string(),
            rec[2].parse().map_err(|e| bad(format!("{e}")))?,
            rec[3].parse().map_err(|e| bad(format!("{e}")))?,
            rec[4].parse().map_err(|e| bad(format!("{e}")))?,
            rec[7].parse().map_err(|e| bad(format!("{e}")))?,
        ));
    }
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const SAME_COLOUR: &str = "#d95f02";
const DIFF_COLOUR: &str = "#1b9e77";

/// Grouped bar chart: per group, a same-gender and a different-gender bar.
/// Every bar carries `data-group`, `data-relationship` and `data-accuracy`
/// attributes and a text label with the value to four decimals.
pub fn render_svg(title: &str, bars: &[(String, Option<f64>, Option<f64>)]) -> String {
    let bar_w = 28.0;
    let gap = 24.0;
    let left = 60.0;
    let top = 50.0;
    let plot_h = 240.0;
    let group_w = 2.0 * bar_w + gap;
    let width = left + group_w * bars.len().max(1) as f64 + 150.0;
    let height = top + plot_h + 110.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2.0,
        xml_escape(title)
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.2}</text>",
            width - 140.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (gi, (label, same, diff)) in bars.iter().enumerate() {
        let x0 = left + gap / 2.0 + gi as f64 * group_w;
        for (k, (rel, value, colour)) in [
            ("same_gender", same, SAME_COLOUR),
            ("different_gender", diff, DIFF_COLOUR),
        ]
        .into_iter()
        .enumerate()
        {
            let Some(v) = value else { continue };
            let x = x0 + k as f64 * bar_w;
            let h = plot_h * v;
            let y = top + plot_h - h;
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-group="{g}" data-relationship="{rel}" data-accuracy="{v}" x="{x}" y="{y}" width="{w}" height="{h}" fill="{colour}"/>"#,
                g = xml_escape(label),
                w = bar_w - 2.0,
            );
            let _ = writeln!(
                s,
                r#"<text class="value" x="{}" y="{}" text-anchor="middle" font-size="9">{v:.4}</text>"#,
                x + (bar_w - 2.0) / 2.0,
                y - 3.0
            );
        }
        let lx = x0 + bar_w;
        let ly = top + plot_h + 14.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx}" y="{ly}" text-anchor="end" transform="rotate(-40 {lx} {ly})">{}</text>"#,
            xml_escape(label)
        );
    }
    let lx = width - 130.0;
    for (i, (name, colour)) in [("same-gender", SAME_COLOUR), ("different-gender", DIFF_COLOUR)]
        .into_iter()
        .enumerate()
    {
        let y = top + 10.0 + i as f64 * 18.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="12" height="12" fill="{colour}"/><text x="{}" y="{}">{name}</text>"#,
            y - 10.0,
            lx + 16.0,
            y
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Occupations ranked by same-gender accuracy: (lowest first, highest first).
pub fn occupation_extremes(
    table: &AccuracyTable,
    k: usize,
) -> (
    Vec<(String, Option<f64>, Option<f64>)>,
    Vec<(String, Option<f64>, Option<f64>)>,
) {
    let mut bars: Vec<_> = table.bars().into_iter().filter(|b| b.1.is_some()).collect();
    bars.sort_by(|a, b| a.1.unwrap().total_cmp(&b.1.unwrap()).then_with(|| a.0.cmp(&b.0)));
    let lowest: Vec<_> = bars.iter().take(k).cloned().collect();
    let mut highest = bars;
    highest.sort_by(|a, b| b.1.unwrap().total_cmp(&a.1.unwrap()).then_with(|| a.0.cmp(&b.0)));
    highest.truncate(k);
    (lowest, highest)
}

fn panel_title(name: &str) -> &'static str {
    match name {
        "aggregate" => "Aggregate accuracy",
        "gender" => "Accuracy per subject gender",
        "model" => "Accuracy per model",
        "language" => "Accuracy per language",
        "occupation_lowest" => "Occupations with lowest same-gender accuracy",
        "occupation_highest" => "Occupations with highest same-gender accuracy",
        _ => "Accuracy",
    }
}

/// Writes one SVG per panel; returns the file names written.
pub fn write_charts(
    dir: &Path,
    tables: &[AccuracyTable],
    top_k: usize,
) -> Result<Vec<String>, PipelineError> {
    let mut written = Vec::new();
    let mut emit = |name: &str, bars: &[(String, Option<f64>, Option<f64>)]| {
        let file = format!("fig_{name}.svg");
        let path = dir.join(&file);
        std::fs::write(&path, render_svg(panel_title(name), bars))
            .map_err(|e| PipelineError::io(&path, e))?;
        written.push(file);
        Ok::<(), PipelineError>(())
    };
    for t in tables {
        if t.name == "occupation" {
            let (low, high) = occupation_extremes(t, top_k);
            emit("occupation_lowest", &low)?;
            emit("occupation_highest", &high)?;
        } else {
            emit(&t.name, &t.bars())?;
        }
    }
    Ok(written)
}

fn fmt_acc(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.4}")
    }
}

/// Plain-text summary of every panel, McNemar results and the regression.
pub fn render_summary(
    tables: &[AccuracyTable],
    mcnemar: &[(String, String, usize, u64, u64, f64)],
    regression: Option<&str>,
    top_k: usize,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Translation accuracy by relationship type\n");
    let mut panels: Vec<(String, Vec<(String, Option<f64>, Option<f64>)>)> = Vec::new();
    for t in tables {
        if t.name == "occupation" {
            let (low, high) = occupation_extremes(t, top_k);
            panels.push(("occupation_lowest".into(), low));
            panels.push(("occupation_highest".into(), high));
        } else {
            panels.push((t.name.clone(), t.bars()));
        }
    }
    for (name, bars) in &panels {
        let _ = writeln!(s, "{}", panel_title(name));
        let _ = writeln!(s, "  {:<28} {:>12} {:>16}", "", "same-gender", "different-gender");
        for (label, same, diff) in bars {
            let _ = writeln!(s, "  {:<28} {:>12} {:>16}", label, fmt_acc(*same), fmt_acc(*diff));
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "McNemar tests (same-gender vs different-gender pairs)");
    let _ = writeln!(
        s,
        "  {:<12} {:<36} {:>7} {:>7} {:>7} {:>9}",
        "grouping", "stratum", "pairs", "b", "c", "p"
    );
    for (grouping, stratum, n, b, c, p) in mcnemar {
        let _ = writeln!(
            s,
            "  {:<12} {:<36} {:>7} {:>7} {:>7} {:>9}",
            grouping,
            if stratum.is_empty() { "all" } else { stratum },
            n,
            b,
            c,
            fmt_p(*p)
        );
    }
    let _ = writeln!(s);
    if let Some(text) = regression {
        let _ = writeln!(s, "Logistic regression (same-gender sentences)");
        s.push_str(text);
        if !text.ends_with('\n') {
            s.push('\n');
        }
    }
    s
}

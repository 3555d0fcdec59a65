//! Plain-text tables: one row per model, one column per class F1 plus the macro and
//! weighted averages.

use std::fmt::Write;

use super::compare::Comparison;
use super::metrics::PerClassScores;

pub struct ScoreRow<'a> {
    pub model: &'a str,
    pub scores: &'a PerClassScores,
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

pub fn render_scores_table(rows: &[ScoreRow<'_>]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let mut header: Vec<String> = vec!["model".into()];
    header.extend(first.scores.classes.iter().map(|c| c.class.clone()));
    header.push("macro-avg".into());
    header.push("weighted-avg".into());
    let mut body: Vec<Vec<String>> = Vec::new();
    for r in rows {
        let mut cells = vec![r.model.to_string()];
        cells.extend(r.scores.classes.iter().map(|c| pct(c.f1)));
        cells.push(pct(r.scores.macro_f1));
        cells.push(pct(r.scores.weighted_f1));
        body.push(cells);
    }
    let mut support = vec!["support".to_string()];
    support.extend(first.scores.classes.iter().map(|c| c.support.to_string()));
    support.extend([String::new(), String::new()]);
    body.push(support);

    let widths: Vec<usize> = (0..header.len())
        .map(|j| std::iter::once(&header).chain(&body).map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&body) {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, cell)| if j == 0 { format!("{cell:<w$}", w = widths[j]) } else { format!("{cell:>w$}", w = widths[j]) })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    out
}

pub fn render_comparison(name_a: &str, name_b: &str, cmp: &Comparison) -> String {
    let mut out = render_scores_table(&[
        ScoreRow { model: name_a, scores: &cmp.scores_a },
        ScoreRow { model: name_b, scores: &cmp.scores_b },
    ]);
    writeln!(out).unwrap();
    writeln!(out, "macro-avg delta     {:+.2}", 100.0 * cmp.macro_delta).unwrap();
    writeln!(out, "weighted-avg delta  {:+.2}", 100.0 * cmp.weighted_delta).unwrap();
    writeln!(
        out,
        "McNemar-Bowker      statistic {:.4}  dof {}  p {:.3e}",
        cmp.test.statistic, cmp.test.dof, cmp.test.p_value
    )
    .unwrap();
    out
}

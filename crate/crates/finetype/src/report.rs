//! Plain-text tables printed by the command line.

use std::fmt::Write;

use finetype_core::agreement::{AgreementReport, ConsensusStats, DisagreementKind, DisagreementRow};
use finetype_core::evaluation::{EvalReport, Prf};
use finetype_core::pruning::PruningStats;
use finetype_core::Taxonomy;

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn row(out: &mut String, name: &str, prf: &Prf, auc: Option<f64>) {
    let _ = write!(out, "{name:<10}{:>10}{:>10}{:>10}", pct(prf.precision), pct(prf.recall), pct(prf.f1));
    if let Some(a) = auc {
        let _ = write!(out, "{:>10}", pct(a));
    }
    out.push('\n');
}

/// Precision, recall, F1 (and AUC) as percentages with two decimals.
pub fn evaluation_table(report: &EvalReport, auc: Option<f64>, per_level: bool) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10}{:>10}{:>10}{:>10}", "", "Precision", "Recall", "F1");
    if auc.is_some() {
        let _ = write!(out, "{:>10}", "AUC");
    }
    out.push('\n');
    row(&mut out, "All", &report.prf, auc);
    if per_level {
        for level in &report.per_level {
            row(&mut out, &format!("Level {}", level.depth), &level.prf, None);
        }
    }
    let _ = writeln!(
        out,
        "mentions {}  correct {}  predicted {}  gold {}",
        report.mentions, report.counts.correct, report.counts.predicted, report.counts.gold
    );
    out
}

/// Labels removed by each heuristic and what remains.
pub fn pruning_table(stats: &PruningStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12}{:>10}{:>10}", "Pruning", "Removed", "Labels");
    let mut left = stats.labels_in;
    let _ = writeln!(out, "{:<12}{:>10}{:>10}", "None", 0, left);
    for (name, removed) in [
        ("Sibling", stats.removed_sibling),
        ("Coarse", stats.removed_coarse),
        ("Min-count", stats.removed_min_count),
    ] {
        left -= removed;
        let _ = writeln!(out, "{name:<12}{removed:>10}{left:>10}");
    }
    let _ = writeln!(
        out,
        "Examples: {} of {} mentions labeled before pruning, {} after",
        stats.instances_in, stats.mentions, stats.instances_out
    );
    out
}

pub fn agreement_table(reports: &[AgreementReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6}{:>10}{:>8}{:>6}", "Depth", "Precision", "Recall", "F1");
    for r in reports {
        let _ = writeln!(out, "{:<6}{:>10.2}{:>8.2}{:>6.2}", r.depth, r.precision, r.recall, r.f1);
    }
    out
}

pub fn consensus_summary(stats: &ConsensusStats, min_support: usize) -> String {
    format!(
        "consensus (support >= {min_support}): {} mentions, {} of {} labels kept ({:.1}% pruned)\n",
        stats.mentions,
        stats.labels_after,
        stats.labels_before,
        100.0 * stats.pruned_fraction()
    )
}

/// Specificity disagreements first, then type disagreements.
pub fn disagreement_table(rows: &[DisagreementRow], taxonomy: &Taxonomy) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# pairs of most specific consensus-filtered labels held by different annotators, once per mention"
    );
    for (kind, title) in [
        (DisagreementKind::Specificity, "Specificity disagreements"),
        (DisagreementKind::Type, "Type disagreements"),
    ] {
        let _ = writeln!(out, "{title}");
        let section: Vec<&DisagreementRow> = rows.iter().filter(|r| r.kind == kind).collect();
        if section.is_empty() {
            let _ = writeln!(out, "  (none)");
        }
        for r in section {
            let _ = writeln!(
                out,
                "  {:<32}{:<32}{:>6}",
                taxonomy.path(r.first),
                taxonomy.path(r.second),
                r.count
            );
        }
    }
    out
}

/// Indented label tree with per-depth counts.
pub fn taxonomy_tree(taxonomy: &Taxonomy) -> String {
    let mut out = String::new();
    fn walk(t: &Taxonomy, id: finetype_core::LabelId, depth: usize, out: &mut String) {
        let _ = writeln!(out, "{}{}", "  ".repeat(depth), t.name(id));
        for &c in t.children(id).expect("id from this taxonomy") {
            walk(t, c, depth + 1, out);
        }
    }
    for &r in taxonomy.roots() {
        walk(taxonomy, r, 0, &mut out);
    }
    let counts: Vec<String> = (1..=taxonomy.max_depth())
        .map(|d| {
            let n = taxonomy.ids().filter(|&id| taxonomy.depth(id).ok() == Some(d)).count();
            format!("level {d}: {n}")
        })
        .collect();
    let _ = writeln!(out, "{} labels ({})", taxonomy.len(), counts.join(", "));
    out
}

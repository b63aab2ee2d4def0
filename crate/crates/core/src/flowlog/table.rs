//! Aligned plain-text rendering of a [`StatsReport`].

use std::fmt::Write as _;

use super::record::TaskStatus;
use super::stats::{StatsReport, VertexStats};

pub const OVERVIEW_TITLE: &str = "Overview of Tasks";
pub const SUBTASKS_TITLE: &str = "Scale of Subtasks";
pub const PROTOCOL_TITLE: &str = "Protocol of Vertexes";
pub const VERTEXES_TITLE: &str = "Distribution of Vertexes";

pub const OVERVIEW_COLUMNS: [&str; 5] = [
    "Task Status",
    "Number",
    "Average Length of Chain Flows",
    "Average Time",
    "Average Token Cost",
];
pub const SUBTASKS_COLUMNS: [&str; 6] = ["Subtask", "Total", "New", "Running", "Success", "Fail"];
pub const PROTOCOL_COLUMNS: [&str; 5] = [
    "Vertex",
    "Number",
    "Average Time",
    "Average Token Cost",
    "Success Rate",
];
pub const VERTEXES_COLUMNS: [&str; 6] = [
    "Vertex",
    "Kind",
    "Number",
    "Average Time",
    "Average Token Cost",
    "Success Rate",
];

/// Title line, header, rule, rows. Columns are padded to their widest cell.
pub fn render_table(title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{cell:<w$}");
        }
        s.trim_end().to_string()
    };
    let mut out = format!("{title}\n");
    out.push_str(&line(&mut header.iter().copied()));
    out.push('\n');
    let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

fn count_pct(count: u64, pct: f64) -> String {
    format!("{count} ({pct:.1}%)")
}

fn tokens(t: Option<f64>) -> String {
    t.map_or_else(|| "-".to_string(), |t| format!("{t:.1}"))
}

pub fn render_overview(report: &StatsReport) -> String {
    let rows: Vec<Vec<String>> = report
        .status_rows
        .iter()
        .map(|r| {
            vec![
                r.status.label().to_string(),
                count_pct(r.count, r.pct),
                format!("{:.1}", r.avg_chain_len),
                format!("{:.1}", r.avg_time_s),
                format!("{:.1}", r.avg_tokens),
            ]
        })
        .collect();
    render_table(OVERVIEW_TITLE, &OVERVIEW_COLUMNS, &rows)
}

pub fn render_subtasks(report: &StatsReport) -> String {
    let rows: Vec<Vec<String>> = report
        .subtask_rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.kind.label().to_string(), r.total.to_string()];
            cells.extend(
                TaskStatus::ALL
                    .iter()
                    .map(|&s| count_pct(r.count(s), r.pct(s))),
            );
            cells
        })
        .collect();
    render_table(SUBTASKS_TITLE, &SUBTASKS_COLUMNS, &rows)
}

pub fn render_protocol(report: &StatsReport) -> String {
    let rows: Vec<Vec<String>> = report
        .protocol_rows
        .iter()
        .map(|r| {
            vec![
                r.kind.label().to_string(),
                r.invocations.to_string(),
                format!("{:.1}", r.avg_time_s),
                tokens(r.avg_tokens),
                format!("{:.1}%", r.success_rate),
            ]
        })
        .collect();
    render_table(PROTOCOL_TITLE, &PROTOCOL_COLUMNS, &rows)
}

pub fn render_vertexes(stats: &VertexStats) -> String {
    let rows: Vec<Vec<String>> = stats
        .rows
        .iter()
        .map(|r| {
            vec![
                r.vertex_id.to_string(),
                r.kind.label().to_string(),
                r.invocations.to_string(),
                format!("{:.1}", r.avg_time_s),
                tokens(r.avg_tokens),
                format!("{:.1}%", r.success_rate),
            ]
        })
        .collect();
    render_table(VERTEXES_TITLE, &VERTEXES_COLUMNS, &rows)
}

/// All four tables separated by blank lines, plus a skipped-line note.
pub fn render_report(report: &StatsReport) -> String {
    let mut out = [
        render_overview(report),
        render_subtasks(report),
        render_protocol(report),
        render_vertexes(&report.vertex),
    ]
    .join("\n");
    if report.skipped_lines > 0 {
        let _ = writeln!(out, "\n{} malformed line(s) skipped", report.skipped_lines);
    }
    out
}

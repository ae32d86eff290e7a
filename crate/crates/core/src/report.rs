//! Culprit-highlighting reports for a single decoded instance.

use std::fmt::Write;

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::infer::DecodeResult;
use crate::prob::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Html,
}

pub const HIGHLIGHT_OPEN_MD: &str = "<mark>";
pub const HIGHLIGHT_CLOSE_MD: &str = "</mark>";
pub const HIGHLIGHT_OPEN_HTML: &str = "<mark class=\"culprit\">";
pub const HIGHLIGHT_CLOSE_HTML: &str = "</mark>";

const STYLE: &str = "body{font-family:sans-serif;max-width:46em;margin:2em auto;color:#222}\
mark.culprit{background:none;color:#c62828;font-weight:bold}\
table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:.25em .6em}\
.falsified{color:#c62828}.pristine{color:#2e7d32}";

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn escape_md(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '\\' | '*' | '_' | '`' | '[' | ']' | '<' | '>' | '|') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Caption text with every decoded culprit span wrapped in highlight tags.
fn highlighted_caption(inst: &Instance, result: &DecodeResult, format: ReportFormat) -> String {
    let (open, close, escape): (&str, &str, fn(&str) -> String) = match format {
        ReportFormat::Markdown => (HIGHLIGHT_OPEN_MD, HIGHLIGHT_CLOSE_MD, escape_md),
        ReportFormat::Html => (HIGHLIGHT_OPEN_HTML, HIGHLIGHT_CLOSE_HTML, escape_html),
    };
    let chars: Vec<char> = inst.caption.chars().collect();
    let piece = |a: usize, b: usize| escape(&chars[a..b].iter().collect::<String>());
    let mut out = String::new();
    let mut cursor = 0;
    for (span, label) in inst.phrase_set.phrases.iter().zip(&result.z_hat) {
        if *label != Label::Falsified {
            continue;
        }
        out.push_str(&piece(cursor, span.start));
        out.push_str(open);
        out.push_str(&piece(span.start, span.end));
        out.push_str(close);
        cursor = span.end;
    }
    out.push_str(&piece(cursor, chars.len()));
    out
}

/// Renders the verdict, the highlighted caption and a per-phrase table.
pub fn render_report(inst: &Instance, result: &DecodeResult, format: ReportFormat) -> Result<String> {
    if inst.id != result.id
        || result.z_hat.len() != result.z_probs.len()
        || result.z_hat.len() > inst.phrase_set.len()
        || result.z_hat.is_empty()
    {
        return Err(Error::MismatchedInstance {
            instance_id: inst.id.clone(),
            result_id: result.id.clone(),
        });
    }
    let caption = highlighted_caption(inst, result, format);
    let n_decoded = result.z_hat.len();
    let truncated = inst.phrase_set.len() - n_decoded;
    let convergence = if result.converged {
        format!("converged after {} iteration(s)", result.n_iters)
    } else {
        format!("stopped after {} iteration(s) without converging", result.n_iters)
    };
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let _ = writeln!(out, "# Instance {}\n", escape_md(&inst.id));
            let _ = writeln!(
                out,
                "**Verdict:** {} (p(Pristine) = {:.4})\n",
                result.y_hat, result.y_prob
            );
            let _ = writeln!(out, "> {caption}\n");
            let _ = writeln!(out, "| # | Phrase | Kind | p(Pristine) | Prediction |");
            let _ = writeln!(out, "|---|--------|------|-------------|------------|");
            for (i, span) in inst.phrase_set.phrases.iter().enumerate() {
                match (result.z_hat.get(i), result.z_probs.get(i)) {
                    (Some(label), Some(p)) => {
                        let tag = if label.is_falsified() { "Culprit" } else { "Pristine" };
                        let _ = writeln!(out, "| {} | {} | {} | {p:.4} | {tag} |", i + 1, escape_md(&span.text), span.kind);
                    }
                    _ => {
                        let _ = writeln!(out, "| {} | {} | {} | – | not decoded |", i + 1, escape_md(&span.text), span.kind);
                    }
                }
            }
            let _ = writeln!(out, "\nDecoding {convergence}.");
            if truncated > 0 {
                let _ = writeln!(out, "{truncated} phrase(s) beyond the slot limit were not decoded.");
            }
        }
        ReportFormat::Html => {
            let verdict_class = if result.y_hat.is_falsified() { "falsified" } else { "pristine" };
            let _ = write!(
                out,
                "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Instance {id}</title><style>{STYLE}</style></head><body>\n",
                id = escape_html(&inst.id)
            );
            let _ = writeln!(out, "<h1>Instance {}</h1>", escape_html(&inst.id));
            let _ = writeln!(
                out,
                "<p><strong>Verdict:</strong> <span class=\"{verdict_class}\">{}</span> (p(Pristine) = {:.4})</p>",
                result.y_hat, result.y_prob
            );
            let _ = writeln!(out, "<blockquote>{caption}</blockquote>");
            let _ = writeln!(out, "<table><tr><th>#</th><th>Phrase</th><th>Kind</th><th>p(Pristine)</th><th>Prediction</th></tr>");
            for (i, span) in inst.phrase_set.phrases.iter().enumerate() {
                let (p, tag) = match (result.z_hat.get(i), result.z_probs.get(i)) {
                    (Some(label), Some(p)) => (
                        format!("{p:.4}"),
                        if label.is_falsified() { "Culprit" } else { "Pristine" },
                    ),
                    _ => ("–".to_string(), "not decoded"),
                };
                let _ = writeln!(
                    out,
                    "<tr><td>{}</td><td>{}</td><td>{}</td><td>{p}</td><td>{tag}</td></tr>",
                    i + 1,
                    escape_html(&span.text),
                    span.kind
                );
            }
            let _ = writeln!(out, "</table>\n<p>Decoding {convergence}.</p>");
            if truncated > 0 {
                let _ = writeln!(out, "<p>{truncated} phrase(s) beyond the slot limit were not decoded.</p>");
            }
            out.push_str("</body></html>\n");
        }
    }
    Ok(out)
}

//! DOT and PNML serialization.

use std::fmt::Write;
use std::str::FromStr;

use super::{ArcKind, PetriNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Pnml,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "pnml" => Ok(ExportFormat::Pnml),
            other => Err(format!("unknown export format `{other}` (expected dot or pnml)")),
        }
    }
}

pub fn export_net(net: &PetriNet, format: ExportFormat) -> String {
    match format {
        ExportFormat::Dot => to_dot(net),
        ExportFormat::Pnml => to_pnml(net),
    }
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn to_dot(net: &PetriNet) -> String {
    let mut out = String::from("digraph workflow {\n    rankdir=LR;\n");
    for p in &net.places {
        let marked = if net.initial.contains(&p.id) { ", style=filled, fillcolor=black, fontcolor=white" } else { "" };
        let terminal = if net.terminal_places.contains(&p.id) { ", peripheries=2" } else { "" };
        writeln!(out, "    {} [shape=ellipse, label={}{marked}{terminal}];", dot_quote(&p.id), dot_quote(&p.label))
            .expect("write to string");
    }
    for t in &net.transitions {
        writeln!(out, "    {} [shape=box, label={}];", dot_quote(&t.id), dot_quote(&t.label)).expect("write to string");
    }
    for a in &net.arcs {
        let style = match a.kind {
            ArcKind::Normal => "",
            ArcKind::Test => " [style=dashed, arrowhead=odot]",
        };
        writeln!(out, "    {} -> {}{style};", dot_quote(&a.src), dot_quote(&a.dst)).expect("write to string");
    }
    out.push_str("}\n");
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Comment text may not contain `--`.
fn comment_safe(s: &str) -> String {
    s.replace("--", "- -")
}

/// Place/transition net per ISO/IEC 15909-2. PT nets have no read arcs, so
/// each test arc becomes a consume arc plus a produce arc.
fn to_pnml(net: &PetriNet) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<pnml xmlns=\"http://www.pnml.org/version-2009/grammar/pnml\">\n");
    out.push_str("  <net id=\"workflow\" type=\"http://www.pnml.org/version-2009/grammar/ptnet\">\n");
    out.push_str("    <name><text>workflow</text></name>\n");
    out.push_str("    <page id=\"page0\">\n");
    let text = |out: &mut String, s: &str| {
        write!(out, "<name><text>{}</text></name>", xml_escape(s)).expect("write to string");
    };
    for p in &net.places {
        write!(out, "      <place id=\"{}\">", xml_escape(&p.id)).expect("write to string");
        text(&mut out, &p.label);
        if net.initial.contains(&p.id) {
            out.push_str("<initialMarking><text>1</text></initialMarking>");
        }
        out.push_str("</place>\n");
    }
    for t in &net.transitions {
        write!(out, "      <transition id=\"{}\">", xml_escape(&t.id)).expect("write to string");
        text(&mut out, &t.label);
        out.push_str("</transition>\n");
    }
    let mut n = 0;
    let mut arc = |out: &mut String, src: &str, dst: &str| {
        writeln!(out, "      <arc id=\"a{n}\" source=\"{}\" target=\"{}\"/>", xml_escape(src), xml_escape(dst))
            .expect("write to string");
        n += 1;
    };
    for a in &net.arcs {
        match a.kind {
            ArcKind::Normal => arc(&mut out, &a.src, &a.dst),
            ArcKind::Test => {
                writeln!(
                    out,
                    "      <!-- test arc {} -> {} lowered to a consume/produce pair -->",
                    comment_safe(&a.src),
                    comment_safe(&a.dst)
                )
                .expect("write to string");
                arc(&mut out, &a.src, &a.dst);
                arc(&mut out, &a.dst, &a.src);
            }
        }
    }
    out.push_str("    </page>\n  </net>\n</pnml>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::petri::Origin;

    fn small() -> PetriNet {
        let mut net = PetriNet::default();
        net.place("p_a", "a & b");
        net.place("p_b", "b");
        net.transition("t", "go \"now\"", Origin { subject: String::new(), span: None });
        net.arc("p_a", "t");
        net.arc("t", "p_b");
        net.test_arc("p_b", "t");
        net.initial.insert("p_a".into());
        net
    }

    #[test]
    fn one_place_dot_has_one_node_statement() {
        let mut net = PetriNet::default();
        net.place("p", "p");
        let dot = export_net(&net, ExportFormat::Dot);
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.lines().filter(|l| l.contains('[')).count(), 1);
    }

    #[test]
    fn dot_styles_test_arcs() {
        let dot = export_net(&small(), ExportFormat::Dot);
        assert!(dot.contains("\"p_b\" -> \"t\" [style=dashed"));
        assert!(dot.contains("label=\"go \\\"now\\\"\""));
    }

    #[test]
    fn pnml_lowers_test_arcs() {
        let pnml = export_net(&small(), ExportFormat::Pnml);
        assert!(pnml.contains("<!-- test arc p_b -> t lowered"));
        assert!(pnml.contains("source=\"p_b\" target=\"t\""));
        assert!(pnml.contains("source=\"t\" target=\"p_b\""));
        assert!(pnml.contains("a &amp; b"));
        assert_eq!(pnml.matches("<arc ").count(), 4);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("pnml".parse::<ExportFormat>(), Ok(ExportFormat::Pnml));
        assert!("svg".parse::<ExportFormat>().is_err());
    }
}

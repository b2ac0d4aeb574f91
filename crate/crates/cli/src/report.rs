//! The analysis report and its text, JSON and SARIF renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use deployqa::catalog::Catalog;
use deployqa::finding::{Category, Class, Finding, Severity};
use deployqa::perf::GoalOutcome;
use deployqa::pipeline::NetSummary;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

pub const TOOL_NAME: &str = "deployqa";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SARIF_SCHEMA: &str = "https://json.schemastore.org/sarif-2.1.0.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub class: Class,
    pub category: Category,
    pub severity: Severity,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    /// Findings at or above the report's severity threshold.
    pub blocking: usize,
    pub by_severity: BTreeMap<Severity, usize>,
    pub groups: Vec<Group>,
}

impl Summary {
    pub fn of(findings: &[Finding], threshold: Severity) -> Summary {
        let mut by_severity = BTreeMap::new();
        let mut groups: BTreeMap<(Class, Category, Severity), usize> = BTreeMap::new();
        for f in findings {
            *by_severity.entry(f.severity).or_default() += 1;
            *groups.entry((f.class, f.category, f.severity)).or_default() += 1;
        }
        Summary {
            total: findings.len(),
            blocking: findings.iter().filter(|f| f.severity >= threshold).count(),
            by_severity,
            groups: groups
                .into_iter()
                .map(|((class, category, severity), count)| Group { class, category, severity, count })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: Tool,
    pub input: String,
    pub input_digest: String,
    /// False when some analysis stopped at a resource limit.
    pub complete: bool,
    pub severity_threshold: Severity,
    pub findings: Vec<Finding>,
    pub summary: Summary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NetSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub goals: Vec<GoalOutcome>,
    /// Wall-clock milliseconds per stage; only present when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn new(input: String, input_digest: String, findings: Vec<Finding>, threshold: Severity) -> Report {
        Report {
            tool: Tool { name: TOOL_NAME.into(), version: TOOL_VERSION.into() },
            input,
            input_digest,
            complete: true,
            severity_threshold: threshold,
            summary: Summary::of(&findings, threshold),
            findings,
            notes: Vec::new(),
            net: None,
            goals: Vec::new(),
            timings: None,
        }
    }

    pub fn blocking(&self) -> bool {
        self.summary.blocking > 0
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.findings {
            writeln!(out, "{}: {} {} {}", f.span, f.severity, f.rule_id, f.message).unwrap();
        }
        for g in &self.goals {
            let v = &g.verdict;
            writeln!(
                out,
                "goal {}: {} {} {} at {} predicted {:.4} ({})",
                g.index,
                g.goal.response_name,
                g.goal.comparator,
                g.goal.threshold,
                g.goal.at,
                v.predicted,
                if v.satisfied { "met" } else { "violated" }
            )
            .unwrap();
        }
        for n in &self.notes {
            writeln!(out, "note: {n}").unwrap();
        }
        let s = &self.summary;
        write!(
            out,
            "{} finding{}, {} at or above {}",
            s.total,
            if s.total == 1 { "" } else { "s" },
            s.blocking,
            self.severity_threshold
        )
        .unwrap();
        if !self.complete {
            out.push_str("; analysis incomplete");
        }
        out.push('\n');
        out
    }

    pub fn to_sarif(&self, catalog: &Catalog) -> String {
        let mut rule_ids: Vec<&str> = self.findings.iter().map(|f| f.rule_id.as_str()).collect();
        rule_ids.sort_unstable();
        rule_ids.dedup();
        let rules: Vec<Json> = rule_ids
            .iter()
            .map(|id| match catalog.get(id) {
                Some(e) => json!({
                    "id": id,
                    "name": e.title,
                    "shortDescription": {"text": e.title},
                    "fullDescription": {"text": e.description},
                    "defaultConfiguration": {"level": sarif_level(e.severity)},
                    "properties": {"class": e.class, "category": e.category, "severity": e.severity},
                }),
                None => json!({"id": id}),
            })
            .collect();
        let results: Vec<Json> = self
            .findings
            .iter()
            .map(|f| {
                let index = rule_ids.binary_search(&f.rule_id.as_str()).expect("rule listed");
                json!({
                    "ruleId": f.rule_id,
                    "ruleIndex": index,
                    "level": sarif_level(f.severity),
                    "message": {"text": f.message},
                    "locations": [{
                        "physicalLocation": {
                            "artifactLocation": {"uri": f.span.file},
                            "region": {
                                "startLine": f.span.start_line,
                                "startColumn": f.span.start_col,
                                "byteOffset": f.span.start_byte,
                                "byteLength": f.span.len(),
                            },
                        },
                        "logicalLocations": [{"fullyQualifiedName": f.subject}],
                    }],
                    "properties": {"severity": f.severity, "class": f.class, "category": f.category},
                })
            })
            .collect();
        let mut notes: Vec<Json> =
            self.notes.iter().map(|n| json!({"level": "note", "message": {"text": n}})).collect();
        if !self.complete {
            notes.push(json!({"level": "warning", "message": {"text": "analysis incomplete"}}));
        }
        let doc = json!({
            "$schema": SARIF_SCHEMA,
            "version": "2.1.0",
            "runs": [{
                "tool": {"driver": {
                    "name": self.tool.name,
                    "version": self.tool.version,
                    "rules": rules,
                }},
                "invocations": [{
                    "executionSuccessful": self.complete,
                    "toolExecutionNotifications": notes,
                }],
                "results": results,
                "properties": {"inputDigest": self.input_digest},
            }],
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("sarif serializes");
        s.push('\n');
        s
    }
}

fn sarif_level(s: Severity) -> &'static str {
    match s {
        Severity::Error | Severity::High => "error",
        Severity::Medium => "warning",
        Severity::Low | Severity::Info => "note",
    }
}

//! The unified defect record emitted by every analysis.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::span::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Low,
    Medium,
    High,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Error,
    Smell,
    Bug,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Implementation,
    Design,
    Security,
}

/// The artifact kind a rule analyzes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Tosca,
    Ansible,
    Workflow,
    Perf,
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $text:literal),* $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $text),* }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)*
                    other => Err(format!("unknown {} `{other}`", stringify!($ty).to_lowercase())),
                }
            }
        }
    };
}

str_enum!(Severity { Info => "info", Low => "low", Medium => "medium", High => "high", Error => "error" });
str_enum!(Class { Error => "error", Smell => "smell", Bug => "bug" });
str_enum!(Category { Implementation => "implementation", Design => "design", Security => "security" });
str_enum!(Target { Tosca => "tosca", Ansible => "ansible", Workflow => "workflow", Perf => "perf" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub class: Class,
    pub category: Category,
    pub severity: Severity,
    pub message: String,
    pub span: SourceSpan,
    /// YAML pointer of the offending element within `span.file`.
    pub subject: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub data: BTreeMap<String, Json>,
}

impl Finding {
    fn sort_key(&self) -> (&str, usize, &str, &str) {
        (&self.span.file, self.span.start_byte, &self.rule_id, &self.subject)
    }
}

/// Sort by (file, start byte, rule id) and collapse repeated (rule, file, subject) pairs,
/// keeping the earliest.
pub fn normalize(findings: &mut Vec<Finding>) {
    findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut seen = std::collections::HashSet::new();
    findings.retain(|f| seen.insert((f.rule_id.clone(), f.span.file.clone(), f.subject.clone())));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::span::LineIndex;

    fn finding(rule: &str, file: &str, start: usize, subject: &str) -> Finding {
        let text = "x".repeat(100);
        Finding {
            rule_id: rule.into(),
            class: Class::Smell,
            category: Category::Security,
            severity: Severity::High,
            message: String::new(),
            span: SourceSpan::new(file, start, start + 1, &LineIndex::new(&text)),
            subject: subject.into(),
            data: BTreeMap::new(),
        }
    }

    #[test]
    fn severity_order() {
        assert!(Severity::Info < Severity::Low);
        assert!(Severity::High < Severity::Error);
        assert_eq!("medium".parse::<Severity>().unwrap(), Severity::Medium);
        assert!("critical".parse::<Severity>().is_err());
    }

    #[test]
    fn normalize_sorts_and_dedups() {
        let mut v = vec![
            finding("S001", "b.yml", 1, "x"),
            finding("S004", "a.yml", 9, "y"),
            finding("S001", "a.yml", 9, "y"),
            finding("S001", "a.yml", 30, "y"),
        ];
        normalize(&mut v);
        let keys: Vec<_> = v.iter().map(|f| (f.span.file.as_str(), f.span.start_byte, f.rule_id.as_str())).collect();
        assert_eq!(keys, [("a.yml", 9, "S001"), ("a.yml", 9, "S004"), ("b.yml", 1, "S001")]);
    }
}

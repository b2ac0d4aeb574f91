//! The defect catalog: rule metadata, detector bindings and resolutions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::finding::{Category, Class, Finding, Severity, Target};
use crate::span::SourceSpan;
use crate::yaml;

pub const BUILTIN_CATALOG: &str = include_str!("builtin.yaml");

/// Detectors implemented by the analyses. A catalog entry may bind any of
/// them to its rule id.
pub const DETECTORS: &[&str] = &[
    "dangling_requirement",
    "capability_mismatch",
    "undefined_type",
    "inheritance_cycle",
    "missing_property",
    "property_constraint",
    "dependency_cycle",
    "duplicate_template",
    "workflow_deadlock",
    "dead_transition",
    "perf_goal",
    "hardcoded_secret",
    "empty_password",
    "admin_by_default",
    "unrestricted_ip",
    "plain_http",
    "suspicious_comment",
    "unverified_download",
    "weak_crypto",
    "unnamed_task",
    "command_instead_of_module",
    "ignore_errors",
    "deprecated_module",
    "literal_bool_compare",
    "long_play",
    "duplicate_task",
    "monolithic_playbook",
    "god_node",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Integer,
    Float,
    Boolean,
    List,
    Map,
}

impl ParamKind {
    pub fn accepts(self, value: &Json) -> bool {
        match self {
            ParamKind::String => value.is_string(),
            ParamKind::Integer => value.is_i64() || value.is_u64(),
            ParamKind::Float => value.is_number(),
            ParamKind::Boolean => value.is_boolean(),
            ParamKind::List => value.is_array(),
            ParamKind::Map => value.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub detector: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<ParamDecl>,
}

/// One edit directive. Paths are YAML pointers relative to the finding's
/// subject; the empty path is the subject itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Directive {
    SetKey {
        path: String,
        value: String,
        /// Insert the value verbatim instead of as a quoted scalar.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        raw: bool,
    },
    RemoveKey {
        path: String,
    },
    InsertSibling {
        path: String,
        node: Json,
    },
    RenameKey {
        path: String,
        new: String,
    },
}

impl Directive {
    fn template_strings(&self) -> Vec<&str> {
        match self {
            Directive::SetKey { path, value, .. } => vec![path, value],
            Directive::RemoveKey { path } => vec![path],
            Directive::InsertSibling { path, node } => {
                let mut out = vec![path.as_str()];
                json_strings(node, &mut out);
                out
            }
            Directive::RenameKey { path, new } => vec![path, new],
        }
    }
}

fn json_strings<'a>(value: &'a Json, out: &mut Vec<&'a str>) {
    match value {
        Json::String(s) => out.push(s),
        Json::Array(items) => items.iter().for_each(|v| json_strings(v, out)),
        Json::Object(map) => map.iter().for_each(|(k, v)| {
            out.push(k);
            json_strings(v, out);
        }),
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    #[serde(rename = "id")]
    pub res_id: String,
    pub description: String,
    pub auto_fixable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<ParamDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<Vec<Directive>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEntry {
    #[serde(rename = "id")]
    pub rule_id: String,
    pub class: Class,
    pub category: Category,
    pub targets: Vec<Target>,
    pub severity: Severity,
    pub title: String,
    pub description: String,
    pub detection: Detection,
    #[serde(default)]
    pub resolutions: Vec<Resolution>,
}

impl DefectEntry {
    pub fn applies_to(&self, target: Target) -> bool {
        self.targets.contains(&target)
    }

    pub fn parameter(&self, name: &str) -> Option<&ParamDecl> {
        self.detection.parameters.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: String,
    #[serde(rename = "rules")]
    pub entries: Vec<DefectEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogError {
    DuplicateId(String),
    BadRuleId(String),
    UnknownClass { rule: String, value: String },
    UnknownCategory { rule: String, value: String },
    UnknownTarget { rule: String, value: String },
    UnknownSeverity { rule: String, value: String },
    ErrorSeverity { rule: String },
    UnknownDetector { rule: String, detector: String },
    DanglingParameter { rule: String, resolution: String, name: String },
    TemplateMismatch { rule: String, resolution: String },
    BadDefault { rule: String, name: String },
}

impl fmt::Display for CatalogError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogError::DuplicateId(id) => write!(f, "duplicate rule id {id}"),
            CatalogError::BadRuleId(id) => write!(f, "rule id `{id}` does not match [EISWDP]NNN[a-z]"),
            CatalogError::UnknownClass { rule, value } => write!(f, "{rule}: unknown class `{value}`"),
            CatalogError::UnknownCategory { rule, value } => write!(f, "{rule}: unknown category `{value}`"),
            CatalogError::UnknownTarget { rule, value } => write!(f, "{rule}: unknown target `{value}`"),
            CatalogError::UnknownSeverity { rule, value } => write!(f, "{rule}: unknown severity `{value}`"),
            CatalogError::ErrorSeverity { rule } => write!(f, "{rule}: class error requires severity error"),
            CatalogError::UnknownDetector { rule, detector } => write!(f, "{rule}: unknown detector `{detector}`"),
            CatalogError::DanglingParameter { rule, resolution, name } => {
                write!(f, "{rule}/{resolution}: template uses undeclared parameter `{name}`")
            }
            CatalogError::TemplateMismatch { rule, resolution } => {
                write!(f, "{rule}/{resolution}: auto_fixable must be true exactly when a template is present")
            }
            CatalogError::BadDefault { rule, name } => write!(f, "{rule}: default of `{name}` has the wrong kind"),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadCatalogError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("catalog syntax: {0}")]
    CatalogSyntax(String),
    #[error("invalid catalog: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    CatalogInvalid(Vec<CatalogError>),
}

fn rule_id_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[EISWDP][0-9]{3}[a-z]?$").expect("valid regex"))
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("valid regex"))
}

/// Names referenced as `${name}` in a template string.
pub fn placeholders(text: &str) -> impl Iterator<Item = &str> {
    placeholder_regex().captures_iter(text).map(|c| c.get(1).expect("group").as_str())
}

/// Replace every `${name}` with its binding; `Err(name)` for the first unbound one.
pub fn substitute(text: &str, bindings: &BTreeMap<String, String>) -> Result<String, String> {
    let mut missing = None;
    let out = placeholder_regex().replace_all(text, |c: &regex::Captures<'_>| {
        let name = &c[1];
        match bindings.get(name) {
            Some(v) => v.clone(),
            None => {
                missing.get_or_insert_with(|| name.to_owned());
                String::new()
            }
        }
    });
    match missing {
        Some(name) => Err(name),
        None => Ok(out.into_owned()),
    }
}

impl Catalog {
    pub fn builtin() -> Catalog {
        Catalog::parse(BUILTIN_CATALOG).expect("built-in catalog is valid")
    }

    pub fn parse(text: &str) -> Result<Catalog, LoadCatalogError> {
        let root = yaml::parse(text).map_err(|e| LoadCatalogError::CatalogSyntax(e.to_string()))?;
        let mut json = root.to_json();
        let mut errors = check_enums(&mut json);
        if !errors.is_empty() {
            return Err(LoadCatalogError::CatalogInvalid(errors));
        }
        let catalog: Catalog =
            serde_json::from_value(json).map_err(|e| LoadCatalogError::CatalogSyntax(e.to_string()))?;
        errors = validate_catalog(&catalog);
        if errors.is_empty() {
            Ok(catalog)
        } else {
            Err(LoadCatalogError::CatalogInvalid(errors))
        }
    }

    pub fn to_yaml(&self) -> String {
        yaml::emit(&serde_json::to_value(self).expect("catalog serializes"))
    }

    pub fn get(&self, rule_id: &str) -> Option<&DefectEntry> {
        self.entries.iter().find(|e| e.rule_id == rule_id)
    }

    pub fn entries_for(&self, target: Target) -> impl Iterator<Item = &DefectEntry> {
        self.entries.iter().filter(move |e| e.applies_to(target))
    }

    /// Build a finding whose class, category and severity come from the entry.
    pub fn finding(
        &self,
        entry: &DefectEntry,
        message: impl Into<String>,
        span: SourceSpan,
        subject: impl Into<String>,
        data: BTreeMap<String, Json>,
    ) -> Finding {
        Finding {
            rule_id: entry.rule_id.clone(),
            class: entry.class,
            category: entry.category,
            severity: entry.severity,
            message: message.into(),
            span,
            subject: subject.into(),
            data,
        }
    }
}

/// Load a catalog from `path`, or the built-in one when `path` is `None`.
pub fn load_catalog(path: Option<&Path>) -> Result<Catalog, LoadCatalogError> {
    match path {
        None => Ok(Catalog::builtin()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|source| LoadCatalogError::Io { path: p.display().to_string(), source })?;
            Catalog::parse(&text)
        }
    }
}

pub fn lookup_resolutions<'a>(catalog: &'a Catalog, rule_id: &str) -> &'a [Resolution] {
    catalog.get(rule_id).map(|e| e.resolutions.as_slice()).unwrap_or_default()
}

/// Check closed vocabularies before typed deserialization, so that an unknown
/// category is reported as a catalog violation rather than a parse failure.
/// Also accepts a scalar `targets` (or `target`) and normalizes it to a list.
fn check_enums(json: &mut Json) -> Vec<CatalogError> {
    let mut errors = Vec::new();
    let Some(rules) = json.get_mut("rules").and_then(Json::as_array_mut) else {
        return errors;
    };
    for rule in rules {
        let Some(obj) = rule.as_object_mut() else { continue };
        let id = obj.get("id").and_then(Json::as_str).unwrap_or("?").to_owned();
        if let Some(t) = obj.remove("target") {
            obj.entry("targets").or_insert(t);
        }
        if let Some(t @ Json::String(_)) = obj.get("targets") {
            let t = t.clone();
            obj.insert("targets".into(), Json::Array(vec![t]));
        }
        let check =
            |field: &str, ok: fn(&str) -> bool, errors: &mut Vec<CatalogError>, obj: &serde_json::Map<String, Json>| {
                let values: Vec<&str> = match obj.get(field) {
                    Some(Json::String(s)) => vec![s.as_str()],
                    Some(Json::Array(items)) => items.iter().filter_map(Json::as_str).collect(),
                    _ => Vec::new(),
                };
                for v in values.into_iter().filter(|v| !ok(v)) {
                    let (rule, value) = (id.clone(), v.to_owned());
                    errors.push(match field {
                        "class" => CatalogError::UnknownClass { rule, value },
                        "category" => CatalogError::UnknownCategory { rule, value },
                        "targets" => CatalogError::UnknownTarget { rule, value },
                        _ => CatalogError::UnknownSeverity { rule, value },
                    });
                }
            };
        check("class", |s| s.parse::<Class>().is_ok(), &mut errors, obj);
        check("category", |s| s.parse::<Category>().is_ok(), &mut errors, obj);
        check("targets", |s| s.parse::<Target>().is_ok(), &mut errors, obj);
        check("severity", |s| s.parse::<Severity>().is_ok(), &mut errors, obj);
    }
    errors
}

pub fn validate_catalog(catalog: &Catalog) -> Vec<CatalogError> {
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for entry in &catalog.entries {
        let rule = entry.rule_id.clone();
        if !seen.insert(entry.rule_id.as_str()) {
            errors.push(CatalogError::DuplicateId(rule.clone()));
        }
        if !rule_id_regex().is_match(&entry.rule_id) {
            errors.push(CatalogError::BadRuleId(rule.clone()));
        }
        if entry.class == Class::Error && entry.severity != Severity::Error {
            errors.push(CatalogError::ErrorSeverity { rule: rule.clone() });
        }
        if !DETECTORS.contains(&entry.detection.detector.as_str()) {
            errors
                .push(CatalogError::UnknownDetector { rule: rule.clone(), detector: entry.detection.detector.clone() });
        }
        for p in &entry.detection.parameters {
            if p.default.as_ref().is_some_and(|d| !p.kind.accepts(d)) {
                errors.push(CatalogError::BadDefault { rule: rule.clone(), name: p.name.clone() });
            }
        }
        for res in &entry.resolutions {
            if res.auto_fixable != res.template.is_some() {
                errors.push(CatalogError::TemplateMismatch { rule: rule.clone(), resolution: res.res_id.clone() });
            }
            let declared: BTreeSet<&str> =
                res.parameters.iter().chain(&entry.detection.parameters).map(|p| p.name.as_str()).collect();
            let mut used: Vec<&str> = Vec::new();
            for d in res.template.iter().flatten() {
                for s in d.template_strings() {
                    used.extend(placeholders(s));
                }
            }
            for p in &res.parameters {
                if let Some(Json::String(s)) = &p.default {
                    used.extend(placeholders(s));
                }
                if p.default.as_ref().is_some_and(|d| !p.kind.accepts(d)) {
                    errors.push(CatalogError::BadDefault { rule: rule.clone(), name: p.name.clone() });
                }
            }
            let mut reported = BTreeSet::new();
            for name in used {
                if !declared.contains(name) && reported.insert(name) {
                    errors.push(CatalogError::DanglingParameter {
                        rule: rule.clone(),
                        resolution: res.res_id.clone(),
                        name: name.to_owned(),
                    });
                }
            }
        }
    }
    errors
}

/// Per-rule configuration: disabled rules and detector parameter overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleConfig {
    pub disabled: BTreeSet<String>,
    pub overrides: BTreeMap<String, BTreeMap<String, Json>>,
}

impl RuleConfig {
    pub fn is_enabled(&self, rule_id: &str) -> bool {
        !self.disabled.contains(rule_id)
    }

    /// Effective value of a detector parameter: override, else catalog default.
    pub fn param<'a>(&'a self, entry: &'a DefectEntry, name: &str) -> Option<&'a Json> {
        self.overrides
            .get(&entry.rule_id)
            .and_then(|m| m.get(name))
            .or_else(|| entry.parameter(name).and_then(|p| p.default.as_ref()))
    }

    pub fn param_str_list(&self, entry: &DefectEntry, name: &str) -> Vec<String> {
        match self.param(entry, name) {
            Some(Json::Array(items)) => items.iter().filter_map(|v| v.as_str().map(str::to_owned)).collect(),
            _ => Vec::new(),
        }
    }

    pub fn param_u64(&self, entry: &DefectEntry, name: &str) -> Option<u64> {
        self.param(entry, name).and_then(Json::as_u64)
    }

    pub fn param_str(&self, entry: &DefectEntry, name: &str) -> Option<String> {
        self.param(entry, name).and_then(Json::as_str).map(str::to_owned)
    }

    /// Reject overrides for unknown rules, undeclared parameters or wrong kinds,
    /// and disabling of unknown rules.
    pub fn validate(&self, catalog: &Catalog) -> Vec<String> {
        let mut problems = Vec::new();
        for rule in &self.disabled {
            if catalog.get(rule).is_none() {
                problems.push(format!("cannot disable unknown rule {rule}"));
            }
        }
        for (rule, params) in &self.overrides {
            let Some(entry) = catalog.get(rule) else {
                problems.push(format!("override for unknown rule {rule}"));
                continue;
            };
            for (name, value) in params {
                match entry.parameter(name) {
                    None => problems.push(format!("{rule} declares no parameter `{name}`")),
                    Some(p) if !p.kind.accepts(value) => {
                        problems.push(format!("{rule}.{name}: expected {:?}", p.kind).to_lowercase())
                    }
                    Some(_) => {}
                }
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_loads_and_is_valid() {
        let c = Catalog::builtin();
        assert!(validate_catalog(&c).is_empty());
        assert!(c.entries.len() >= 16);
        for id in
            ["S001", "S008", "I001", "I005", "D001", "D003", "D010", "E001", "E003a", "E007", "W101", "W102", "P001"]
        {
            assert!(c.get(id).is_some(), "{id}");
        }
        assert!(c.entries.iter().all(|e| e.class != Class::Bug));
    }

    #[test]
    fn lookup_examples() {
        let c = Catalog::builtin();
        let i001 = lookup_resolutions(&c, "I001");
        assert_eq!(i001.len(), 1);
        assert!(i001[0].auto_fixable);
        let s004 = lookup_resolutions(&c, "S004");
        assert_eq!(s004.len(), 1);
        assert!(!s004[0].auto_fixable);
        assert!(lookup_resolutions(&c, "Z999").is_empty());
    }

    #[test]
    fn round_trip_is_fixpoint() {
        let c = Catalog::builtin();
        let again = Catalog::parse(&c.to_yaml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_yaml(), again.to_yaml());
    }

    fn one_rule(body: &str) -> String {
        format!("version: '1'\nrules:\n{body}")
    }

    const RULE: &str = "  - id: S001\n    class: smell\n    category: security\n    targets: ansible\n    severity: high\n    title: t\n    description: d\n    detection: {detector: hardcoded_secret}\n";

    #[test]
    fn unknown_category_is_invalid() {
        let text = one_rule(&RULE.replace("category: security", "category: performance"));
        match Catalog::parse(&text) {
            Err(LoadCatalogError::CatalogInvalid(errs)) => {
                assert_eq!(
                    errs,
                    vec![CatalogError::UnknownCategory { rule: "S001".into(), value: "performance".into() }]
                )
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_invalid() {
        let text = one_rule(&format!("{RULE}{RULE}"));
        match Catalog::parse(&text) {
            Err(LoadCatalogError::CatalogInvalid(errs)) => {
                assert_eq!(errs, vec![CatalogError::DuplicateId("S001".into())])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_target_normalized() {
        let c = Catalog::parse(&one_rule(RULE)).unwrap();
        assert_eq!(c.entries[0].targets, vec![Target::Ansible]);
    }

    #[test]
    fn dangling_parameter_detected() {
        let mut c = Catalog::builtin();
        let s004 = c.entries.iter_mut().find(|e| e.rule_id == "S004").unwrap();
        s004.resolutions[0].auto_fixable = true;
        s004.resolutions[0].template =
            Some(vec![Directive::SetKey { path: "".into(), value: "${port}".into(), raw: false }]);
        assert_eq!(
            validate_catalog(&c),
            vec![CatalogError::DanglingParameter {
                rule: "S004".into(),
                resolution: "S004-R1".into(),
                name: "port".into()
            }]
        );
    }

    #[test]
    fn unknown_detector_detected() {
        let mut c = Catalog::builtin();
        c.entries[0].detection.detector = "telepathy".into();
        let errs = validate_catalog(&c);
        assert!(matches!(&errs[..], [CatalogError::UnknownDetector { detector, .. }] if detector == "telepathy"));
    }

    #[test]
    fn error_class_requires_error_severity() {
        let mut c = Catalog::builtin();
        let e = c.entries.iter_mut().find(|e| e.rule_id == "E001").unwrap();
        e.severity = Severity::High;
        assert_eq!(validate_catalog(&c), vec![CatalogError::ErrorSeverity { rule: "E001".into() }]);
    }

    #[test]
    fn bad_rule_id() {
        let mut c = Catalog::builtin();
        c.entries[0].rule_id = "X12".into();
        assert_eq!(validate_catalog(&c), vec![CatalogError::BadRuleId("X12".into())]);
    }

    #[test]
    fn substitute_placeholders() {
        let b: BTreeMap<String, String> = [("module".to_string(), "apt".to_string())].into();
        assert_eq!(substitute("${module} task", &b).unwrap(), "apt task");
        assert_eq!(substitute("${nope}", &b).unwrap_err(), "nope");
    }

    #[test]
    fn config_overrides_and_validation() {
        let c = Catalog::builtin();
        let mut cfg = RuleConfig::default();
        let d001 = c.get("D001").unwrap();
        assert_eq!(cfg.param_u64(d001, "max_tasks"), Some(20));
        cfg.overrides.entry("D001".into()).or_default().insert("max_tasks".into(), Json::from(5));
        assert_eq!(cfg.param_u64(d001, "max_tasks"), Some(5));
        assert!(cfg.validate(&c).is_empty());
        cfg.overrides.entry("D001".into()).or_default().insert("bogus".into(), Json::from(1));
        cfg.disabled.insert("Q123".into());
        assert_eq!(cfg.validate(&c).len(), 2);
    }
}

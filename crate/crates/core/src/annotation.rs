//! Cause / trigger / effect annotations, the standoff file format and the
//! machine-checkable part of the annotation guidelines.
//!
//! Offsets count Unicode code points of the normalised text. Chained
//! relations are stored as two entities with identical fragments and
//! different labels (one `Effect`, one `Cause`).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Cause,
    Effect,
    Trigger,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Cause, Label::Effect, Label::Trigger];
    /// Row order used by agreement and evaluation tables.
    pub const REPORT_ORDER: [Label; 3] = [Label::Trigger, Label::Cause, Label::Effect];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Cause => "Cause",
            Label::Effect => "Effect",
            Label::Trigger => "Trigger",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Cause => 0,
            Label::Effect => 1,
            Label::Trigger => 2,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "Cause" => Ok(Label::Cause),
            "Effect" => Ok(Label::Effect),
            "Trigger" => Ok(Label::Trigger),
            other => Err(format!("unknown entity label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    /// Cause → Trigger
    #[serde(rename = "CAUSE_OF")]
    CauseOf,
    /// Trigger → Effect
    #[serde(rename = "LEADS_TO")]
    LeadsTo,
}

impl RelationType {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::CauseOf => "CAUSE_OF",
            RelationType::LeadsTo => "LEADS_TO",
        }
    }

    /// Required `(arg1, arg2)` labels.
    pub fn signature(self) -> (Label, Label) {
        match self {
            RelationType::CauseOf => (Label::Cause, Label::Trigger),
            RelationType::LeadsTo => (Label::Trigger, Label::Effect),
        }
    }
}

impl FromStr for RelationType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "CAUSE_OF" => Ok(RelationType::CauseOf),
            "LEADS_TO" => Ok(RelationType::LeadsTo),
            other => Err(format!("unknown relation type {other:?}")),
        }
    }
}

/// Subset of {Cause, Effect, Trigger} held by one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn of(labels: &[Label]) -> Self {
        let mut s = Self::EMPTY;
        for &l in labels {
            s.insert(l);
        }
        s
    }

    pub fn contains(self, label: Label) -> bool {
        self.0 & (1 << label.index()) != 0
    }

    pub fn insert(&mut self, label: Label) {
        self.0 |= 1 << label.index();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn labels(self) -> Vec<Label> {
        Label::ALL.into_iter().filter(|&l| self.contains(l)).collect()
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(LabelSet::of(&Vec::<Label>::deserialize(d)?))
    }
}

/// Half-open code point range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fragment {
    pub start: usize,
    pub end: usize,
}

impl Fragment {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: Label,
    pub fragments: Vec<Fragment>,
    pub surface: String,
}

impl Entity {
    /// Builds an entity whose surface is read from `text`.
    pub fn from_text(id: impl Into<String>, label: Label, fragments: Vec<Fragment>, text: &str) -> Self {
        let chars: Vec<char> = text.chars().collect();
        Self {
            id: id.into(),
            label,
            surface: surface_of(&chars, &fragments),
            fragments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: String,
    pub kind: RelationType,
    pub arg1: String,
    pub arg2: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub text_id: String,
    pub annotator_id: String,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

impl AnnotationSet {
    pub fn empty(text_id: impl Into<String>, annotator_id: impl Into<String>) -> Self {
        Self {
            text_id: text_id.into(),
            annotator_id: annotator_id.into(),
            ..Self::default()
        }
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty()
    }

    /// Sorts entities and relations by numeric id.
    pub fn sort_by_id(&mut self) {
        self.entities.sort_by_key(|e| id_number(&e.id));
        self.relations.sort_by_key(|r| id_number(&r.id));
    }
}

fn id_number(id: &str) -> (u64, String) {
    (id[1.min(id.len())..].parse().unwrap_or(u64::MAX), id.to_string())
}

/// Surface string of a fragment list: fragment texts joined by one space.
/// Line breaks inside a fragment are written as spaces so the surface fits on
/// one standoff line.
pub fn surface_of(chars: &[char], fragments: &[Fragment]) -> String {
    fragments
        .iter()
        .map(|f| {
            let end = f.end.min(chars.len());
            let start = f.start.min(end);
            chars[start..end]
                .iter()
                .map(|&c| if c == '\n' || c == '\r' || c == '\t' { ' ' } else { c })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn valid_id(id: &str, prefix: char) -> bool {
    id.len() > 1 && id.starts_with(prefix) && id[1..].bytes().all(|b| b.is_ascii_digit())
}

/// Parses a standoff annotation file against its base text. Text and
/// annotator ids are left empty.
pub fn parse_standoff(ann_text: &str, base_text: &str) -> Result<AnnotationSet> {
    let chars: Vec<char> = base_text.chars().collect();
    let mut set = AnnotationSet::default();
    let mut entity_ids = HashSet::new();
    let mut relation_ids = HashSet::new();
    let mut relation_lines = Vec::new();

    for (i, raw) in ann_text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut cols = line.splitn(3, '\t');
        let id = cols.next().unwrap_or_default();
        let body = cols
            .next()
            .ok_or_else(|| parse_err(format!("missing tab after id in {line:?}")))?;
        if valid_id(id, 'T') {
            let surface = cols
                .next()
                .ok_or_else(|| parse_err("entity line lacks surface column".to_string()))?;
            let (label, spans) = body
                .split_once(' ')
                .ok_or_else(|| parse_err(format!("malformed entity body {body:?}")))?;
            let label = Label::from_str(label).map_err(parse_err)?;
            let mut fragments = Vec::new();
            for span in spans.split(';') {
                let nums: Vec<&str> = span.split(' ').collect();
                let [start, end] = nums.as_slice() else {
                    return Err(parse_err(format!("malformed span {span:?}")));
                };
                let start: usize = start
                    .parse()
                    .map_err(|_| parse_err(format!("bad offset {start:?}")))?;
                let end: usize = end
                    .parse()
                    .map_err(|_| parse_err(format!("bad offset {end:?}")))?;
                if end > chars.len() || start > end {
                    return Err(Error::Range {
                        line: line_no,
                        message: format!(
                            "span {start}-{end} outside text of length {}",
                            chars.len()
                        ),
                    });
                }
                fragments.push(Fragment::new(start, end));
            }
            let expected = surface_of(&chars, &fragments);
            if expected != surface {
                return Err(Error::Integrity(format!(
                    "line {line_no}: surface {surface:?} does not match text {expected:?}"
                )));
            }
            if !entity_ids.insert(id.to_string()) {
                return Err(Error::Integrity(format!("duplicate entity id {id}")));
            }
            set.entities.push(Entity {
                id: id.to_string(),
                label,
                fragments,
                surface: surface.to_string(),
            });
        } else if valid_id(id, 'R') {
            if cols.next().is_some_and(|rest| !rest.is_empty()) {
                return Err(parse_err("relation line has extra columns".to_string()));
            }
            let parts: Vec<&str> = body.split(' ').collect();
            let [kind, a1, a2] = parts.as_slice() else {
                return Err(parse_err(format!("malformed relation body {body:?}")));
            };
            let kind = RelationType::from_str(kind).map_err(parse_err)?;
            let arg = |s: &str, prefix: &str| {
                s.strip_prefix(prefix)
                    .filter(|a| valid_id(a, 'T'))
                    .map(str::to_string)
                    .ok_or_else(|| parse_err(format!("expected {prefix}T<n>, got {s:?}")))
            };
            let (arg1, arg2) = (arg(a1, "Arg1:")?, arg(a2, "Arg2:")?);
            if !relation_ids.insert(id.to_string()) {
                return Err(Error::Integrity(format!("duplicate relation id {id}")));
            }
            relation_lines.push(line_no);
            set.relations.push(Relation {
                id: id.to_string(),
                kind,
                arg1,
                arg2,
            });
        } else {
            return Err(parse_err(format!("unrecognised annotation id {id:?}")));
        }
    }

    for rel in &set.relations {
        for arg in [&rel.arg1, &rel.arg2] {
            if !entity_ids.contains(arg) {
                return Err(Error::Integrity(format!(
                    "relation {} references undefined entity {arg}",
                    rel.id
                )));
            }
        }
    }
    set.sort_by_id();
    Ok(set)
}

/// Standoff text for `set`: entities in id order, then relations.
pub fn serialize_standoff(set: &AnnotationSet) -> String {
    let mut entities: Vec<&Entity> = set.entities.iter().collect();
    entities.sort_by_key(|e| id_number(&e.id));
    let mut relations: Vec<&Relation> = set.relations.iter().collect();
    relations.sort_by_key(|r| id_number(&r.id));

    let mut out = String::new();
    for e in entities {
        let spans = e
            .fragments
            .iter()
            .map(|f| format!("{} {}", f.start, f.end))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!("{}\t{} {}\t{}\n", e.id, e.label, spans, e.surface));
    }
    for r in relations {
        out.push_str(&format!(
            "{}\t{} Arg1:{} Arg2:{}\n",
            r.id,
            r.kind.as_str(),
            r.arg1,
            r.arg2
        ));
    }
    out
}

/// What a guideline violation was detected by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Relation arguments must be entities of the same text.
    TextLevel,
    /// Fragments sorted, disjoint, non-empty, inside the text, surface intact.
    Fragments,
    /// Every entity takes part in a complete cause–trigger–effect relation.
    CompleteRelation,
    /// Relation arguments carry the labels required by the relation type.
    ArgumentTyping,
}

impl Check {
    pub fn rule_id(self) -> u8 {
        match self {
            Check::TextLevel => 1,
            Check::Fragments => 5,
            Check::CompleteRelation | Check::ArgumentTyping => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: u8,
    pub check: Check,
    pub message: String,
    pub offending: Vec<String>,
}

impl Violation {
    fn new(check: Check, message: String, offending: Vec<String>) -> Self {
        Self {
            rule_id: check.rule_id(),
            check,
            message,
            offending,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleStatus {
    /// Checked by [`validate_guidelines`].
    Checked,
    /// Allows a structure (chaining, nesting); nothing to violate.
    Permissive,
    /// Annotator-facing instruction that needs human judgement.
    Manual,
}

/// How each of the twelve guidelines is handled by the validator.
pub fn rule_status(rule: u8) -> Option<RuleStatus> {
    match rule {
        1 | 5 | 6 => Some(RuleStatus::Checked),
        3 | 4 => Some(RuleStatus::Permissive),
        2 | 7..=12 => Some(RuleStatus::Manual),
        _ => None,
    }
}

/// Runs the machine-checkable guideline predicates. An empty result means the
/// set passed every check.
pub fn validate_guidelines(set: &AnnotationSet, text: &str) -> Vec<Violation> {
    let chars: Vec<char> = text.chars().collect();
    let by_id: HashMap<&str, &Entity> = set.entities.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut out = Vec::new();

    for e in &set.entities {
        if let Some(problem) = fragment_problem(e, &chars) {
            out.push(Violation::new(
                Check::Fragments,
                format!("entity {}: {problem}", e.id),
                vec![e.id.clone()],
            ));
        }
    }

    for r in &set.relations {
        let missing: Vec<String> = [&r.arg1, &r.arg2]
            .into_iter()
            .filter(|a| !by_id.contains_key(a.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            let mut offending = vec![r.id.clone()];
            offending.extend(missing.iter().cloned());
            out.push(Violation::new(
                Check::TextLevel,
                format!(
                    "relation {} links entities outside this text: {}",
                    r.id,
                    missing.join(", ")
                ),
                offending,
            ));
            continue;
        }
        let (want1, want2) = r.kind.signature();
        let (a1, a2) = (by_id[r.arg1.as_str()], by_id[r.arg2.as_str()]);
        if a1.label != want1 || a2.label != want2 {
            out.push(Violation::new(
                Check::ArgumentTyping,
                format!(
                    "relation {} {} expects {want1} → {want2}, found {} → {}",
                    r.id,
                    r.kind.as_str(),
                    a1.label,
                    a2.label
                ),
                vec![r.id.clone(), a1.id.clone(), a2.id.clone()],
            ));
        }
    }

    let has = |kind: RelationType, first: bool, id: &str| {
        set.relations.iter().any(|r| {
            r.kind == kind && if first { r.arg1 == id } else { r.arg2 == id }
        })
    };
    for e in &set.entities {
        let missing = match e.label {
            Label::Trigger => {
                let mut m = Vec::new();
                if !has(RelationType::CauseOf, false, &e.id) {
                    m.push("a cause");
                }
                if !has(RelationType::LeadsTo, true, &e.id) {
                    m.push("an effect");
                }
                m
            }
            Label::Cause if !has(RelationType::CauseOf, true, &e.id) => vec!["a trigger"],
            Label::Effect if !has(RelationType::LeadsTo, false, &e.id) => vec!["a trigger"],
            _ => Vec::new(),
        };
        if !missing.is_empty() {
            out.push(Violation::new(
                Check::CompleteRelation,
                format!(
                    "{} {} ({:?}) is not linked to {}",
                    e.label,
                    e.id,
                    e.surface,
                    missing.join(" or ")
                ),
                vec![e.id.clone()],
            ));
        }
    }
    out
}

fn fragment_problem(e: &Entity, chars: &[char]) -> Option<String> {
    if e.fragments.is_empty() {
        return Some("no fragments".to_string());
    }
    for f in &e.fragments {
        if f.start >= f.end {
            return Some(format!("empty or reversed fragment {}-{}", f.start, f.end));
        }
        if f.end > chars.len() {
            return Some(format!(
                "fragment {}-{} beyond text length {}",
                f.start,
                f.end,
                chars.len()
            ));
        }
    }
    for w in e.fragments.windows(2) {
        if w[1].start < w[0].end {
            return Some(format!(
                "fragments {}-{} and {}-{} overlap or are unsorted",
                w[0].start, w[0].end, w[1].start, w[1].end
            ));
        }
    }
    let expected = surface_of(chars, &e.fragments);
    (expected != e.surface).then(|| format!("surface {:?} does not match {expected:?}", e.surface))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISRUPTED: &str = "The root cause for back side defect are humidity residues";

    #[test]
    fn parses_contiguous_trigger() {
        let set = parse_standoff("T1\tTrigger 13 19\tdue to\n", "Die chipping due to dicing").unwrap();
        assert_eq!(
            set.entities,
            vec![Entity {
                id: "T1".into(),
                label: Label::Trigger,
                fragments: vec![Fragment::new(13, 19)],
                surface: "due to".into(),
            }]
        );
    }

    #[test]
    fn parses_discontinuous_trigger() {
        let set = parse_standoff("T2\tTrigger 0 18;36 39\tThe root cause for are\n", DISRUPTED).unwrap();
        assert_eq!(set.entities[0].fragments.len(), 2);
        assert_eq!(set.entities[0].surface, "The root cause for are");
    }

    #[test]
    fn dangling_relation_is_integrity_error() {
        let err = parse_standoff(
            "T1\tTrigger 13 19\tdue to\nR1\tCAUSE_OF Arg1:T9 Arg2:T1\n",
            "Die chipping due to dicing",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "Die chipping due to dicing";
        match parse_standoff("T1\tTrigger 13 19\tdue to\nT2 Cause 20 26 dicing\n", text) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_standoff("T1\tTrigger 13 99\tdue to\n", text) {
            Err(Error::Range { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_standoff("T1\tTrigger 13 19\tdue\n", text),
            Err(Error::Integrity(_))
        ));
        assert!(matches!(
            parse_standoff("T1\tMechanism 13 19\tdue to\n", text),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn serialize_shapes() {
        assert_eq!(serialize_standoff(&AnnotationSet::default()), "");
        let set = parse_standoff("T1\tTrigger 13 19\tdue to\n", "Die chipping due to dicing").unwrap();
        assert_eq!(serialize_standoff(&set), "T1\tTrigger 13 19\tdue to\n");
    }

    fn triple(text: &str) -> AnnotationSet {
        let ann = "T1\tEffect 0 12\tDie chipping\nT2\tTrigger 13 19\tdue to\nT3\tCause 20 26\tdicing\n\
                   R1\tCAUSE_OF Arg1:T3 Arg2:T2\nR2\tLEADS_TO Arg1:T2 Arg2:T1\n";
        parse_standoff(ann, text).unwrap()
    }

    #[test]
    fn complete_triple_has_no_violations() {
        let text = "Die chipping due to dicing";
        assert!(validate_guidelines(&triple(text), text).is_empty());
    }

    #[test]
    fn trigger_without_effect_link_violates_rule_six() {
        let text = "Die chipping due to dicing";
        let mut set = triple(text);
        set.relations.retain(|r| r.kind == RelationType::CauseOf);
        let v = validate_guidelines(&set, text);
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| v.rule_id == 6 && v.check == Check::CompleteRelation));
        let ids: HashSet<&str> = v.iter().map(|v| v.offending[0].as_str()).collect();
        assert_eq!(ids, HashSet::from(["T1", "T2"]));
    }

    #[test]
    fn mistyped_relation_is_flagged() {
        let text = "Die chipping due to dicing";
        let mut set = triple(text);
        set.relations[0].arg1 = "T1".into();
        let v = validate_guidelines(&set, text);
        assert!(v.iter().any(|v| v.check == Check::ArgumentTyping));
    }

    #[test]
    fn co_extensive_chain_entities_are_not_flagged() {
        let text = "A leads to B which causes C";
        let set = AnnotationSet {
            entities: vec![
                Entity::from_text("T1", Label::Cause, vec![Fragment::new(0, 1)], text),
                Entity::from_text("T2", Label::Trigger, vec![Fragment::new(2, 10)], text),
                Entity::from_text("T3", Label::Effect, vec![Fragment::new(11, 12)], text),
                Entity::from_text("T4", Label::Cause, vec![Fragment::new(11, 12)], text),
                Entity::from_text("T5", Label::Trigger, vec![Fragment::new(19, 25)], text),
                Entity::from_text("T6", Label::Effect, vec![Fragment::new(26, 27)], text),
            ],
            relations: vec![
                Relation { id: "R1".into(), kind: RelationType::CauseOf, arg1: "T1".into(), arg2: "T2".into() },
                Relation { id: "R2".into(), kind: RelationType::LeadsTo, arg1: "T2".into(), arg2: "T3".into() },
                Relation { id: "R3".into(), kind: RelationType::CauseOf, arg1: "T4".into(), arg2: "T5".into() },
                Relation { id: "R4".into(), kind: RelationType::LeadsTo, arg1: "T5".into(), arg2: "T6".into() },
            ],
            ..AnnotationSet::default()
        };
        assert!(validate_guidelines(&set, text).is_empty());
    }

    #[test]
    fn malformed_fragments_violate_rule_five() {
        let text = "Die chipping due to dicing";
        let mut set = triple(text);
        set.entities[1].fragments = vec![Fragment::new(16, 19), Fragment::new(13, 15)];
        let v = validate_guidelines(&set, text);
        assert!(v.iter().any(|v| v.rule_id == 5 && v.offending == vec!["T2".to_string()]));
    }

    #[test]
    fn rule_status_covers_all_guidelines() {
        for rule in 1..=12 {
            assert!(rule_status(rule).is_some());
        }
        assert_eq!(rule_status(13), None);
        for check in [Check::TextLevel, Check::Fragments, Check::CompleteRelation, Check::ArgumentTyping] {
            assert_eq!(rule_status(check.rule_id()), Some(RuleStatus::Checked));
        }
    }
}

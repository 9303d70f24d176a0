//! Aggregation of two annotators into model-ready instances, and fold plans.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::annotation::{parse_standoff, AnnotationSet, Entity, Fragment, Label, LabelSet, Relation, RelationType};
use crate::corpus::{SourceKind, TextUnit};
use crate::error::{contract, read_json, read_to_string, write_json, Error, Result};
use crate::iaa::project_to_tokens;
use crate::seed::{derive_seed, rng};
use crate::tokenize::{TokenizedText, Tokenizer};

pub const DATASET_SCHEMA: &str = "causal-dataset/v1";
pub const FOLD_COUNT: usize = 5;

type EntityKey = (Label, Vec<Fragment>);

fn entity_key(e: &Entity) -> EntityKey {
    (e.label, e.fragments.clone())
}

/// Renumbers entities `T1..` by (first fragment start, label, fragments) and
/// relations `R1..` by (arg1, arg2, type), dropping exact duplicates.
fn canonicalize(text_id: &str, annotator_id: &str, entities: Vec<Entity>, relations: Vec<(RelationType, EntityKey, EntityKey)>) -> AnnotationSet {
    let mut unique: BTreeMap<(usize, Label, Vec<Fragment>), Entity> = BTreeMap::new();
    for e in entities {
        let start = e.fragments.first().map_or(0, |f| f.start);
        unique.entry((start, e.label, e.fragments.clone())).or_insert(e);
    }
    let mut ids: HashMap<EntityKey, String> = HashMap::new();
    let mut out = AnnotationSet::empty(text_id, annotator_id);
    for (i, (_, mut e)) in unique.into_iter().enumerate() {
        e.id = format!("T{}", i + 1);
        ids.insert(entity_key(&e), e.id.clone());
        out.entities.push(e);
    }
    let index = |id: &str| id[1..].parse::<usize>().unwrap_or(usize::MAX);
    let mut rels: Vec<(usize, usize, RelationType)> = relations
        .into_iter()
        .filter_map(|(kind, a, b)| Some((index(ids.get(&a)?), index(ids.get(&b)?), kind)))
        .collect();
    rels.sort();
    rels.dedup();
    for (i, (a, b, kind)) in rels.into_iter().enumerate() {
        out.relations.push(Relation {
            id: format!("R{}", i + 1),
            kind,
            arg1: format!("T{a}"),
            arg2: format!("T{b}"),
        });
    }
    out
}

fn resolved_relations(set: &AnnotationSet) -> Vec<(RelationType, EntityKey, EntityKey)> {
    set.relations
        .iter()
        .filter_map(|r| Some((r.kind, entity_key(set.entity(&r.arg1)?), entity_key(set.entity(&r.arg2)?))))
        .collect()
}

/// Union of two annotators' sets. Entities are identified by (label,
/// fragments), relations by (type, resolved argument entities). When one side
/// is empty the other is returned as is.
pub fn aggregate_annotators(a: &AnnotationSet, b: &AnnotationSet) -> Result<AnnotationSet> {
    contract!(
        a.text_id == b.text_id,
        "aggregating annotations of different texts ({} vs {})",
        a.text_id,
        b.text_id
    );
    if b.is_empty() {
        return Ok(a.clone());
    }
    if a.is_empty() {
        return Ok(b.clone());
    }
    let mut names = [a.annotator_id.as_str(), b.annotator_id.as_str()];
    names.sort();
    let annotator = if names[0] == names[1] {
        names[0].to_string()
    } else {
        names.join("+")
    };
    let entities = a.entities.iter().chain(&b.entities).cloned().collect();
    let mut relations = resolved_relations(a);
    relations.extend(resolved_relations(b));
    Ok(canonicalize(&a.text_id, &annotator, entities, relations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    /// Annotated by both annotators and aggregated.
    Double,
    /// Annotated by one annotator only.
    Single,
}

/// A text with its annotations keyed by annotator id.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedText {
    pub unit: TextUnit,
    pub annotations: BTreeMap<String, AnnotationSet>,
}

/// Location of an annotator's standoff file for a text.
pub fn annotation_path(corpus_dir: &Path, annotator: &str, text_id: &str) -> PathBuf {
    corpus_dir.join(annotator).join(format!("{text_id}.ann"))
}

/// Attaches `<corpus>/<annotator>/<id>.ann` files to the corpus units. A
/// missing file means the annotator did not see the text; an empty file means
/// they found nothing.
pub fn load_annotations(corpus_dir: &Path, units: Vec<TextUnit>, annotators: &[&str]) -> Result<Vec<AnnotatedText>> {
    units
        .into_iter()
        .map(|unit| {
            let mut annotations = BTreeMap::new();
            for &who in annotators {
                let path = annotation_path(corpus_dir, who, &unit.id);
                if !path.exists() {
                    continue;
                }
                let ann = read_to_string(&path)?;
                let mut set = parse_standoff(&ann, &unit.text).map_err(|e| match e {
                    Error::Parse { line, message } => Error::Parse {
                        line,
                        message: format!("{}: {message}", path.display()),
                    },
                    Error::Range { line, message } => Error::Range {
                        line,
                        message: format!("{}: {message}", path.display()),
                    },
                    Error::Integrity(m) => Error::Integrity(format!("{}: {m}", path.display())),
                    other => other,
                })?;
                set.text_id = unit.id.clone();
                set.annotator_id = who.to_string();
                annotations.insert(who.to_string(), set);
            }
            Ok(AnnotatedText { unit, annotations })
        })
        .collect()
}

/// A text with its single gold annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedText {
    pub unit: TextUnit,
    pub partition: Partition,
    pub gold: AnnotationSet,
}

/// Aggregates every text seen by at least one of `annotators`. Texts with
/// both annotators form the double partition; the others pass through
/// unchanged as the single partition. Unannotated texts are dropped.
pub fn aggregate_corpus(texts: &[AnnotatedText], annotators: (&str, &str)) -> Result<Vec<AggregatedText>> {
    let mut out = Vec::new();
    let mut dropped = 0;
    for t in texts {
        let a = t.annotations.get(annotators.0);
        let b = t.annotations.get(annotators.1);
        let (partition, gold) = match (a, b) {
            (Some(a), Some(b)) => (Partition::Double, aggregate_annotators(a, b)?),
            (Some(x), None) | (None, Some(x)) => (Partition::Single, x.clone()),
            (None, None) => {
                dropped += 1;
                continue;
            }
        };
        out.push(AggregatedText {
            unit: t.unit.clone(),
            partition,
            gold,
        });
    }
    if dropped > 0 {
        log::warn!("{dropped} texts have no annotation and were left out");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SstInstance {
    pub text_id: String,
    pub source_kind: SourceKind,
    pub tokens: TokenizedText,
    pub labels: Vec<LabelSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgClass {
    #[default]
    None,
    Cause,
    Effect,
}

impl ArgClass {
    pub const ALL: [ArgClass; 3] = [ArgClass::None, ArgClass::Cause, ArgClass::Effect];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// Token indices of one trigger entity and the argument class of every token
/// with respect to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerGroup {
    pub tokens: Vec<usize>,
    pub arguments: Vec<ArgClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MstInstance {
    pub text_id: String,
    pub source_kind: SourceKind,
    pub tokens: TokenizedText,
    pub groups: Vec<TriggerGroup>,
}

impl MstInstance {
    /// Sorted union of all trigger tokens.
    pub fn trigger_tokens(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.groups.iter().flat_map(|g| g.tokens.iter().copied()).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Whether tokens `i` and `j` belong to one gold trigger entity.
    pub fn same_group(&self, i: usize, j: usize) -> bool {
        self.groups.iter().any(|g| g.tokens.contains(&i) && g.tokens.contains(&j))
    }
}

fn entity_tokens(e: &Entity, tokens: &TokenizedText) -> Vec<usize> {
    tokens
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| e.fragments.iter().any(|f| f.overlaps(t.start, t.end)))
        .map(|(i, _)| i)
        .collect()
}

pub fn sst_instance(text: &AggregatedText, tokenizer: &dyn Tokenizer) -> SstInstance {
    let tokens = tokenizer.tokenize_text(&text.unit.text);
    let (vector, _) = project_to_tokens(&text.gold, &tokens);
    SstInstance {
        text_id: text.unit.id.clone(),
        source_kind: text.unit.source_kind,
        labels: vector.label_sets(),
        tokens,
    }
}

pub fn build_sst_instances(texts: &[AggregatedText], tokenizer: &dyn Tokenizer) -> Vec<SstInstance> {
    texts.iter().map(|t| sst_instance(t, tokenizer)).collect()
}

/// One group per trigger entity. Tokens of causes linked to the trigger get
/// `Cause`, tokens of linked effects get `Effect`; a token that would be both
/// keeps `Cause`.
pub fn mst_instance(text: &AggregatedText, tokenizer: &dyn Tokenizer) -> Result<MstInstance> {
    let tokens = tokenizer.tokenize_text(&text.unit.text);
    let set = &text.gold;
    let mut groups = Vec::new();
    for trigger in set.entities.iter().filter(|e| e.label == Label::Trigger) {
        let linked: Vec<&Relation> = set
            .relations
            .iter()
            .filter(|r| {
                (r.kind == RelationType::CauseOf && r.arg2 == trigger.id)
                    || (r.kind == RelationType::LeadsTo && r.arg1 == trigger.id)
            })
            .collect();
        contract!(
            !linked.is_empty(),
            "trigger {} of text {} has no relations",
            trigger.id,
            set.text_id
        );
        let members = entity_tokens(trigger, &tokens);
        if members.is_empty() {
            log::warn!("trigger {} of text {} covers no token", trigger.id, set.text_id);
            continue;
        }
        let mut arguments = vec![ArgClass::None; tokens.len()];
        for r in &linked {
            let (other, class) = match r.kind {
                RelationType::CauseOf => (&r.arg1, ArgClass::Cause),
                RelationType::LeadsTo => (&r.arg2, ArgClass::Effect),
            };
            let Some(entity) = set.entity(other) else { continue };
            for i in entity_tokens(entity, &tokens) {
                if arguments[i] != ArgClass::Cause {
                    arguments[i] = class;
                }
            }
        }
        groups.push(TriggerGroup {
            tokens: members,
            arguments,
        });
    }
    Ok(MstInstance {
        text_id: set.text_id.clone(),
        source_kind: text.unit.source_kind,
        tokens,
        groups,
    })
}

pub fn build_mst_instances(texts: &[AggregatedText], tokenizer: &dyn Tokenizer) -> Result<Vec<MstInstance>> {
    texts.iter().map(|t| mst_instance(t, tokenizer)).collect()
}

/// Maximal runs of consecutive indices in a sorted list.
pub fn contiguous_runs(sorted: &[usize]) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for &i in sorted {
        match runs.last_mut() {
            Some(run) if i > 0 && run.last() == Some(&(i - 1)) => run.push(i),
            _ => runs.push(vec![i]),
        }
    }
    runs
}

/// Character fragments of a token index set: one fragment per run of
/// consecutive tokens.
pub fn token_fragments(tokens: &TokenizedText, indices: &[usize]) -> Vec<Fragment> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    contiguous_runs(&sorted)
        .iter()
        .map(|run| Fragment::new(tokens.tokens[run[0]].start, tokens.tokens[run[run.len() - 1]].end))
        .collect()
}

/// Rebuilds an annotation from an MST instance: one trigger entity per group,
/// one cause or effect entity per contiguous argument run.
pub fn decode_mst_instance(instance: &MstInstance, text: &str) -> AnnotationSet {
    let mut entities = Vec::new();
    let mut relations = Vec::new();
    for group in &instance.groups {
        let trigger = Entity::from_text("", Label::Trigger, token_fragments(&instance.tokens, &group.tokens), text);
        for (class, label) in [(ArgClass::Cause, Label::Cause), (ArgClass::Effect, Label::Effect)] {
            let idx: Vec<usize> = (0..group.arguments.len()).filter(|&i| group.arguments[i] == class).collect();
            for run in contiguous_runs(&idx) {
                let e = Entity::from_text("", label, token_fragments(&instance.tokens, &run), text);
                let rel = match label {
                    Label::Cause => (RelationType::CauseOf, entity_key(&e), entity_key(&trigger)),
                    _ => (RelationType::LeadsTo, entity_key(&trigger), entity_key(&e)),
                };
                relations.push(rel);
                entities.push(e);
            }
        }
        entities.push(trigger);
    }
    canonicalize(&instance.text_id, "decoded", entities, relations)
}

/// Both views of one text, as stored in the dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub text_id: String,
    pub source_kind: SourceKind,
    pub partition: Partition,
    pub text: String,
    pub tokens: TokenizedText,
    pub sst_labels: Vec<LabelSet>,
    pub mst_groups: Vec<TriggerGroup>,
}

impl DatasetRecord {
    pub fn sst(&self) -> SstInstance {
        SstInstance {
            text_id: self.text_id.clone(),
            source_kind: self.source_kind,
            tokens: self.tokens.clone(),
            labels: self.sst_labels.clone(),
        }
    }

    pub fn mst(&self) -> MstInstance {
        MstInstance {
            text_id: self.text_id.clone(),
            source_kind: self.source_kind,
            tokens: self.tokens.clone(),
            groups: self.mst_groups.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: String,
    pub tokenizer_id: String,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn build(texts: &[AggregatedText], tokenizer: &dyn Tokenizer) -> Result<Self> {
        let mut records = Vec::with_capacity(texts.len());
        for t in texts {
            let sst = sst_instance(t, tokenizer);
            let mst = mst_instance(t, tokenizer)?;
            records.push(DatasetRecord {
                text_id: t.unit.id.clone(),
                source_kind: t.unit.source_kind,
                partition: t.partition,
                text: t.unit.text.clone(),
                tokens: sst.tokens,
                sst_labels: sst.labels,
                mst_groups: mst.groups,
            });
        }
        Ok(Self {
            schema: DATASET_SCHEMA.to_string(),
            tokenizer_id: tokenizer.id().to_string(),
            records,
        })
    }

    pub fn get(&self, id: &str) -> Option<&DatasetRecord> {
        self.records.iter().find(|r| r.text_id == id)
    }

    /// Records with the given ids, in the order of `ids`.
    pub fn select(&self, ids: &[String]) -> Result<Vec<DatasetRecord>> {
        let index: HashMap<&str, &DatasetRecord> = self.records.iter().map(|r| (r.text_id.as_str(), r)).collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| Error::Validation(format!("fold plan names unknown text {id}")))
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let ds: Dataset = read_json(path)?;
        if ds.schema != DATASET_SCHEMA {
            return Err(Error::Validation(format!("unsupported dataset schema {}", ds.schema)));
        }
        Ok(ds)
    }
}

/// Held-out test ids plus five train/dev partitions of the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub test_fraction: f64,
    pub test_ids: Vec<String>,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn dev_ids(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    pub fn train_ids(&self, fold: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != fold)
            .flat_map(|(_, ids)| ids.iter().cloned())
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Seeded plan stratified by source kind. The test share of each source is
/// `test_fraction` of its size, rounded so the total matches
/// `round(test_fraction · n)`; the rest is dealt round-robin into five folds.
pub fn make_folds(items: &[(String, SourceKind)], seed: u64, test_fraction: f64) -> Result<FoldPlan> {
    contract!(items.len() >= 10, "need at least 10 texts for a fold plan, got {}", items.len());
    contract!(
        (0.0..1.0).contains(&test_fraction),
        "test fraction {test_fraction} outside [0, 1)"
    );
    let mut strata: Vec<Vec<String>> = SourceKind::ALL
        .iter()
        .enumerate()
        .map(|(s, &kind)| {
            let mut ids: Vec<String> = items.iter().filter(|(_, k)| *k == kind).map(|(id, _)| id.clone()).collect();
            ids.sort();
            ids.shuffle(&mut rng(derive_seed(seed, &[s as u64])));
            ids
        })
        .collect();
    let total = (test_fraction * items.len() as f64).round() as usize;
    let exact: Vec<f64> = strata.iter().map(|s| test_fraction * s.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut missing = total.saturating_sub(quota.iter().sum());
    for &s in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if quota[s] < strata[s].len() {
            quota[s] += 1;
            missing -= 1;
        }
    }
    let mut test_ids = Vec::new();
    let mut rest = Vec::new();
    for (s, ids) in strata.iter_mut().enumerate() {
        let tail = ids.split_off(quota[s]);
        test_ids.append(ids);
        rest.extend(tail);
    }
    let mut folds = vec![Vec::new(); FOLD_COUNT];
    for (i, id) in rest.into_iter().enumerate() {
        folds[i % FOLD_COUNT].push(id);
    }
    Ok(FoldPlan {
        seed,
        test_fraction,
        test_ids,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Location, Provenance};
    use crate::tokenize::WhitespacePunct;

    fn unit(id: &str, text: &str) -> TextUnit {
        TextUnit {
            id: id.into(),
            text: text.into(),
            source_kind: SourceKind::Fmea,
            provenance: Provenance {
                file: "t.csv".into(),
                section: 0,
                location: Location::Cell {
                    row: 0,
                    column: "cause".into(),
                },
            },
        }
    }

    fn set(id: &str, who: &str, ann: &str, text: &str) -> AnnotationSet {
        let mut s = parse_standoff(ann, text).unwrap();
        s.text_id = id.into();
        s.annotator_id = who.into();
        s
    }

    const SIMPLE: &str = "B due to A";
    const SIMPLE_ANN: &str = "T1\tEffect 0 1\tB\nT2\tTrigger 2 8\tdue to\nT3\tCause 9 10\tA\nR1\tCAUSE_OF Arg1:T3 Arg2:T2\nR2\tLEADS_TO Arg1:T2 Arg2:T1\n";

    #[test]
    fn identical_sets_deduplicate() {
        let a = set("x", "a", SIMPLE_ANN, SIMPLE);
        let b = set("x", "b", SIMPLE_ANN, SIMPLE);
        let agg = aggregate_annotators(&a, &b).unwrap();
        assert_eq!(agg.entities.len(), 3);
        assert_eq!(agg.relations.len(), 2);
        assert_eq!(agg.annotator_id, "a+b");
    }

    #[test]
    fn disagreement_keeps_both_versions() {
        let text = "Crack due to bad dicing";
        let a = set(
            "x",
            "a",
            "T1\tEffect 0 5\tCrack\nT2\tTrigger 6 12\tdue to\nT3\tCause 13 16\tbad\nR1\tCAUSE_OF Arg1:T3 Arg2:T2\nR2\tLEADS_TO Arg1:T2 Arg2:T1\n",
            text,
        );
        let b = set(
            "x",
            "b",
            "T1\tEffect 0 5\tCrack\nT2\tTrigger 6 12\tdue to\nT3\tCause 13 23\tbad dicing\nR1\tCAUSE_OF Arg1:T3 Arg2:T2\nR2\tLEADS_TO Arg1:T2 Arg2:T1\n",
            text,
        );
        let agg = aggregate_annotators(&a, &b).unwrap();
        let causes = agg.entities.iter().filter(|e| e.label == Label::Cause).count();
        assert_eq!(causes, 2);
        let cause_of = agg.relations.iter().filter(|r| r.kind == RelationType::CauseOf).count();
        assert_eq!(cause_of, 2);
    }

    #[test]
    fn empty_annotator_yields_other_set() {
        let a = set("x", "a", SIMPLE_ANN, SIMPLE);
        let b = AnnotationSet::empty("x", "a");
        let agg = aggregate_annotators(&a, &b).unwrap();
        assert_eq!(agg.entities, a.entities);
        assert_eq!(agg.relations, a.relations);
    }

    #[test]
    fn different_texts_are_rejected() {
        let a = AnnotationSet::empty("x", "a");
        let b = AnnotationSet::empty("y", "b");
        assert!(aggregate_annotators(&a, &b).is_err());
    }

    fn aggregated(text: &str, ann: &str) -> AggregatedText {
        AggregatedText {
            unit: unit("x", text),
            partition: Partition::Double,
            gold: set("x", "a", ann, text),
        }
    }

    #[test]
    fn simple_mst_instance() {
        let inst = mst_instance(&aggregated(SIMPLE, SIMPLE_ANN), &WhitespacePunct).unwrap();
        assert_eq!(inst.groups.len(), 1);
        assert_eq!(inst.groups[0].tokens, vec![1, 2]);
        assert_eq!(
            inst.groups[0].arguments,
            vec![ArgClass::Effect, ArgClass::None, ArgClass::None, ArgClass::Cause]
        );
    }

    #[test]
    fn shared_cause_is_labelled_under_both_triggers() {
        let text = "A causes B and leads to C";
        let ann = "T1\tCause 0 1\tA\nT2\tTrigger 2 8\tcauses\nT3\tEffect 9 10\tB\nT4\tTrigger 15 23\tleads to\nT5\tEffect 24 25\tC\n\
R1\tCAUSE_OF Arg1:T1 Arg2:T2\nR2\tLEADS_TO Arg1:T2 Arg2:T3\nR3\tCAUSE_OF Arg1:T1 Arg2:T4\nR4\tLEADS_TO Arg1:T4 Arg2:T5\n";
        let inst = mst_instance(&aggregated(text, ann), &WhitespacePunct).unwrap();
        assert_eq!(inst.groups.len(), 2);
        assert!(inst.groups.iter().all(|g| g.arguments[0] == ArgClass::Cause));
    }

    #[test]
    fn unlinked_trigger_is_a_contract_violation() {
        let ann = "T1\tTrigger 2 8\tdue to\n";
        assert!(mst_instance(&aggregated(SIMPLE, ann), &WhitespacePunct).is_err());
    }

    #[test]
    fn unannotated_text_is_negative_instance() {
        let inst = sst_instance(&aggregated("nothing causal here", ""), &WhitespacePunct);
        assert_eq!(inst.labels.len(), 3);
        assert!(inst.labels.iter().all(|l| l.is_empty()));
    }

    #[test]
    fn mst_decode_round_trip() {
        let agg = aggregated(SIMPLE, SIMPLE_ANN);
        let inst = mst_instance(&agg, &WhitespacePunct).unwrap();
        let back = decode_mst_instance(&inst, SIMPLE);
        assert_eq!(back.entities, agg.gold.entities);
        assert_eq!(back.relations.len(), 2);
    }

    #[test]
    fn fold_sizes() {
        let items: Vec<(String, SourceKind)> = (0..100)
            .map(|i| (format!("t{i:03}"), if i % 2 == 0 { SourceKind::Fmea } else { SourceKind::Slides }))
            .collect();
        let plan = make_folds(&items, 7, 0.2).unwrap();
        assert_eq!(plan.test_ids.len(), 20);
        assert!(plan.folds.iter().all(|f| f.len() == 16));
        assert_eq!(plan, make_folds(&items, 7, 0.2).unwrap());
        let fmea_test = plan.test_ids.iter().filter(|id| id[1..].parse::<usize>().unwrap() % 2 == 0).count();
        assert_eq!(fmea_test, 10);
    }

    #[test]
    fn too_few_ids() {
        let items: Vec<(String, SourceKind)> = (0..9).map(|i| (i.to_string(), SourceKind::Fmea)).collect();
        assert!(make_folds(&items, 1, 0.2).is_err());
    }

    #[test]
    fn runs() {
        assert_eq!(contiguous_runs(&[0, 1, 3, 4, 5, 7]), vec![vec![0, 1], vec![3, 4, 5], vec![7]]);
        assert!(contiguous_runs(&[]).is_empty());
    }
}

//! Seeded template corpus with gold causal annotations, for tests and demos.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::annotation::{AnnotationSet, Entity, Fragment, Label, Relation, RelationType};
use crate::corpus::{BBox, Location, Provenance, SourceKind, TextUnit};
use crate::dataset::{AggregatedText, Partition};
use crate::seed::{derive_seed, rng};

/// Event phrases. Every slot draws from the same pool, so roles follow
/// from position relative to the trigger.
pub const EVENTS: [&str; 40] = [
    "die chipping",
    "wafer crack",
    "bond wire lift",
    "high leakage current",
    "delamination at die edge",
    "dicing process condition",
    "contaminated saw blade",
    "wrong implantation dose",
    "the compensation was destroyed",
    "the lot was scrapped",
    "mold compound voids",
    "poor solder wetting",
    "oxide thickness variation",
    "resist residue on pads",
    "excessive wire sweep",
    "metal corrosion",
    "gate oxide breakdown",
    "particle contamination in chamber",
    "thermal mismatch stress",
    "moisture ingress",
    "electrostatic discharge event",
    "low shear strength",
    "misaligned mask layer",
    "insufficient cure time",
    "parametric drift at wafer test",
    "open contact",
    "short between adjacent leads",
    "lifted ball bond",
    "warpage of the substrate",
    "high chuck temperature",
    "worn probe needles",
    "incomplete etch",
    "copper migration",
    "humidity above limit",
    "package cracking",
    "yield loss",
    "customer return",
    "field failure",
    "wrong recipe selected",
    "tool maintenance overdue",
];

/// A text pattern. `{n}` is an event slot; `<k:words>` is part of trigger
/// `k`, and a trigger given in several pieces is discontinuous.
#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    pub pattern: &'static str,
    /// `(cause slot, trigger, effect slot)`.
    pub relations: &'static [(usize, usize, usize)],
}

pub const TEMPLATES: [Template; 27] = [
    Template { name: "due-to", pattern: "{0} <0:due to> {1}", relations: &[(1, 0, 0)] },
    Template { name: "leads-to", pattern: "{0} <0:leads to> {1}", relations: &[(0, 0, 1)] },
    Template { name: "therefore", pattern: "{0}, <0:therefore> {1}", relations: &[(0, 0, 1)] },
    Template { name: "caused-by", pattern: "{0} <0:caused by> {1}", relations: &[(1, 0, 0)] },
    Template { name: "results-in", pattern: "{0} <0:results in> {1}", relations: &[(0, 0, 1)] },
    Template { name: "because-of", pattern: "{0} <0:because of> {1}", relations: &[(1, 0, 0)] },
    Template { name: "causes", pattern: "{0} <0:causes> {1}", relations: &[(0, 0, 1)] },
    Template { name: "as-a-result-of", pattern: "{0} <0:as a result of> {1}", relations: &[(1, 0, 0)] },
    Template { name: "induces", pattern: "{0} <0:induces> {1}", relations: &[(0, 0, 1)] },
    Template { name: "owing-to", pattern: "{0} <0:owing to> {1}", relations: &[(1, 0, 0)] },
    Template { name: "fronted-due-to", pattern: "<0:Due to> {0}, {1}", relations: &[(0, 0, 1)] },
    Template { name: "attributed-to", pattern: "{0} <0:is attributed to> {1}", relations: &[(1, 0, 0)] },
    Template { name: "hence", pattern: "{0}, <0:hence> {1}", relations: &[(0, 0, 1)] },
    Template { name: "resulting-from", pattern: "{0} <0:resulting from> {1}", relations: &[(1, 0, 0)] },
    Template { name: "triggers", pattern: "{0} <0:triggers> {1}", relations: &[(0, 0, 1)] },
    Template {
        name: "chained-due-to-therefore",
        pattern: "<0:Due to> {0}, {1}, and <1:therefore>, {2}",
        relations: &[(0, 0, 1), (1, 1, 2)],
    },
    Template {
        name: "chained-leads-to-which-causes",
        pattern: "{0} <0:leads to> {1}, which <1:causes> {2}",
        relations: &[(0, 0, 1), (1, 1, 2)],
    },
    Template {
        name: "chained-due-to-caused-by",
        pattern: "{0} <0:due to> {1} <1:caused by> {2}",
        relations: &[(1, 0, 0), (2, 1, 1)],
    },
    Template {
        name: "disrupted-leads-eventually-to",
        pattern: "{0} <0:leads> eventually <0:to> {1}",
        relations: &[(0, 0, 1)],
    },
    Template {
        name: "disrupted-due-mainly-to",
        pattern: "{0} <0:due> mainly <0:to> {1}",
        relations: &[(1, 0, 0)],
    },
    Template {
        name: "disrupted-results-directly-in",
        pattern: "{0} <0:results> directly <0:in> {1}",
        relations: &[(0, 0, 1)],
    },
    Template {
        name: "two-relations",
        pattern: "{0} <0:due to> {1}; {2} <1:leads to> {3}",
        relations: &[(1, 0, 0), (2, 1, 3)],
    },
    Template { name: "negative-observed-after", pattern: "{0} observed after {1}", relations: &[] },
    Template { name: "negative-and", pattern: "{0} and {1}", relations: &[] },
    Template { name: "negative-check-during", pattern: "check {0} during {1}", relations: &[] },
    Template { name: "negative-single", pattern: "{0}", relations: &[] },
    Template { name: "negative-reported-with", pattern: "{0} reported together with {1}", relations: &[] },
];

enum Piece<'a> {
    Text(&'a str),
    Slot(usize),
    Trigger(usize, &'a str),
}

fn pieces(pattern: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while !rest.is_empty() {
        let next = rest.find(['{', '<']).unwrap_or(rest.len());
        if next > 0 {
            out.push(Piece::Text(&rest[..next]));
            rest = &rest[next..];
            continue;
        }
        if let Some(body) = rest.strip_prefix('{') {
            let end = body.find('}').expect("closed slot");
            out.push(Piece::Slot(body[..end].parse().expect("slot index")));
            rest = &body[end + 1..];
        } else {
            let body = &rest[1..];
            let end = body.find('>').expect("closed trigger");
            let (k, words) = body[..end].split_once(':').expect("trigger index");
            out.push(Piece::Trigger(k.parse().expect("trigger index"), words));
            rest = &body[end + 1..];
        }
    }
    out
}

impl Template {
    pub fn slots(&self) -> usize {
        pieces(self.pattern)
            .iter()
            .filter_map(|p| if let Piece::Slot(i) = p { Some(i + 1) } else { None })
            .max()
            .unwrap_or(0)
    }

    pub fn is_negative(&self) -> bool {
        self.relations.is_empty()
    }

    /// Fills the slots and returns the text with its annotation.
    pub fn render(&self, text_id: &str, fillers: &[&str]) -> (String, AnnotationSet) {
        assert_eq!(fillers.len(), self.slots(), "one filler per slot");
        let mut text = String::new();
        let mut slot_spans = vec![Fragment::new(0, 0); fillers.len()];
        let mut trigger_frags: Vec<Vec<Fragment>> = Vec::new();
        for p in pieces(self.pattern) {
            let start = text.chars().count();
            match p {
                Piece::Text(t) => text.push_str(t),
                Piece::Slot(i) => {
                    let mut f = fillers[i].to_string();
                    if start == 0 {
                        capitalize(&mut f);
                    }
                    text.push_str(&f);
                    slot_spans[i] = Fragment::new(start, start + f.chars().count());
                }
                Piece::Trigger(k, words) => {
                    text.push_str(words);
                    if trigger_frags.len() <= k {
                        trigger_frags.resize(k + 1, Vec::new());
                    }
                    trigger_frags[k].push(Fragment::new(start, start + words.chars().count()));
                }
            }
        }
        let mut set = AnnotationSet::empty(text_id, "synthetic");
        let mut next = 1;
        let mut entity = |label: Label, fragments: Vec<Fragment>, set: &mut AnnotationSet| -> String {
            let id = format!("T{next}");
            next += 1;
            set.entities.push(Entity::from_text(id.clone(), label, fragments, &text));
            id
        };
        let triggers: Vec<String> = trigger_frags
            .into_iter()
            .map(|f| entity(Label::Trigger, f, &mut set))
            .collect();
        let mut causes = vec![None; fillers.len()];
        let mut effects = vec![None; fillers.len()];
        for &(c, _, e) in self.relations {
            if causes[c].is_none() {
                causes[c] = Some(entity(Label::Cause, vec![slot_spans[c]], &mut set));
            }
            if effects[e].is_none() {
                effects[e] = Some(entity(Label::Effect, vec![slot_spans[e]], &mut set));
            }
        }
        for (r, &(c, t, e)) in self.relations.iter().enumerate() {
            set.relations.push(Relation {
                id: format!("R{}", 2 * r + 1),
                kind: RelationType::CauseOf,
                arg1: causes[c].clone().expect("cause entity"),
                arg2: triggers[t].clone(),
            });
            set.relations.push(Relation {
                id: format!("R{}", 2 * r + 2),
                kind: RelationType::LeadsTo,
                arg1: triggers[t].clone(),
                arg2: effects[e].clone().expect("effect entity"),
            });
        }
        (text, set)
    }
}

fn capitalize(s: &mut String) {
    if let Some(c) = s.chars().next() {
        let upper: String = c.to_uppercase().collect();
        s.replace_range(..c.len_utf8(), &upper);
    }
}

/// `n` texts cycling through shuffled rounds of all templates. About 60% are
/// FMEA cells and the rest slide boxes; ids are `<prefix>-<i>`.
pub fn generate(n: usize, seed: u64, prefix: &str) -> Vec<AggregatedText> {
    let mut r = rng(derive_seed(seed, &[0x5e]));
    let mut order: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if order.is_empty() {
            order = (0..TEMPLATES.len()).collect();
            order.shuffle(&mut r);
        }
        let t = &TEMPLATES[order.pop().expect("refilled")];
        let fillers: Vec<&str> = EVENTS.choose_multiple(&mut r, t.slots()).copied().collect();
        let id = format!("{prefix}-{i:04}");
        let (text, gold) = t.render(&id, &fillers);
        let (source_kind, location) = if r.gen_bool(0.6) {
            (
                SourceKind::Fmea,
                Location::Cell {
                    row: i,
                    column: "cause".into(),
                },
            )
        } else {
            (
                SourceKind::Slides,
                Location::Box {
                    index: i,
                    bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
                },
            )
        };
        out.push(AggregatedText {
            unit: TextUnit {
                id,
                text,
                source_kind,
                provenance: Provenance {
                    file: "synthetic".into(),
                    section: 0,
                    location,
                },
            },
            partition: Partition::Double,
            gold,
        });
    }
    out
}

/// Disjoint train, dev and test corpora drawn with independent seeds.
pub fn generate_splits(
    train: usize,
    dev: usize,
    test: usize,
    seed: u64,
) -> (Vec<AggregatedText>, Vec<AggregatedText>, Vec<AggregatedText>) {
    (
        generate(train, derive_seed(seed, &[1]), "train"),
        generate(dev, derive_seed(seed, &[2]), "dev"),
        generate(test, derive_seed(seed, &[3]), "test"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::validate_guidelines;

    #[test]
    fn chained_template_marks_middle_twice() {
        let t = TEMPLATES.iter().find(|t| t.name == "chained-due-to-therefore").unwrap();
        let (text, set) = t.render(
            "g3",
            &["a wrong implantation dose", "the compensation was destroyed", "the lot was scrapped"],
        );
        assert_eq!(
            text,
            "Due to a wrong implantation dose, the compensation was destroyed, and therefore, the lot was scrapped"
        );
        let middle: Vec<&Entity> = set
            .entities
            .iter()
            .filter(|e| e.surface == "the compensation was destroyed")
            .collect();
        assert_eq!(middle.len(), 2);
        assert_eq!(set.relations.len(), 4);
    }

    #[test]
    fn disrupted_trigger_has_two_fragments() {
        let t = TEMPLATES.iter().find(|t| t.name == "disrupted-due-mainly-to").unwrap();
        let (_, set) = t.render("d", &["yield loss", "metal corrosion"]);
        let trig = set.entities.iter().find(|e| e.label == Label::Trigger).unwrap();
        assert_eq!(trig.fragments.len(), 2);
        assert_eq!(trig.surface, "due to");
    }

    #[test]
    fn every_template_is_guideline_clean() {
        for (i, t) in TEMPLATES.iter().enumerate() {
            let fillers: Vec<&str> = EVENTS[i..i + t.slots()].to_vec();
            let (text, set) = t.render("x", &fillers);
            assert!(validate_guidelines(&set, &text).is_empty(), "{}: {text}", t.name);
        }
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(generate(30, 7, "s"), generate(30, 7, "s"));
        assert_ne!(generate(30, 7, "s"), generate(30, 8, "s"));
        let kinds = ["chained", "disrupted", "negative"];
        assert!(kinds.iter().all(|k| TEMPLATES.iter().any(|t| t.name.starts_with(k))));
        assert!(TEMPLATES.len() >= 20);
    }
}

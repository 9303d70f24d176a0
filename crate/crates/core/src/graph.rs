//! Causal graphs built from extractions, and merged-cell split proposals.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::annotation::{surface_of, Fragment, Label, LabelSet};
use crate::corpus::{Provenance, TextUnit};
use crate::dataset::{contiguous_runs, token_fragments};
use crate::error::{read_json, Error, Result};
use crate::mst::{ExtractedRelation, MstModel, MstPrediction, StageScores};
use crate::scalar::Scalar;
use crate::sst::SstModel;
use crate::tokenize::{resolve_tokenizer, TokenizedText, Tokenizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: String,
    /// Roles the event plays; a chain node is both Cause and Effect.
    pub role: Vec<Label>,
    pub fragments: Vec<Fragment>,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub cause: String,
    pub effect: String,
    pub trigger_surface: String,
    pub scores: StageScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGraph {
    pub id: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub texts: Vec<TextGraph>,
}

impl CausalGraph {
    pub fn node_count(&self) -> usize {
        self.texts.iter().map(|t| t.nodes.len()).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.texts.iter().map(|t| t.edges.len()).sum()
    }
}

/// Collects nodes keyed by fragment list. Identical fragments give one node.
struct NodeTable<'t> {
    text_id: &'t str,
    chars: Vec<char>,
    nodes: Vec<Node>,
}

impl<'t> NodeTable<'t> {
    fn new(text_id: &'t str, text: &str) -> Self {
        Self {
            text_id,
            chars: text.chars().collect(),
            nodes: Vec::new(),
        }
    }

    fn node(&mut self, fragments: Vec<Fragment>, role: Label) -> usize {
        if let Some(i) = self.nodes.iter().position(|n| n.fragments == fragments) {
            if !self.nodes[i].role.contains(&role) {
                self.nodes[i].role.push(role);
                self.nodes[i].role.sort();
            }
            return i;
        }
        self.nodes.push(Node {
            node_id: String::new(),
            role: vec![role],
            surface: surface_of(&self.chars, &fragments),
            fragments,
        });
        self.nodes.len() - 1
    }

    /// Orders nodes by position and assigns `<text id>:<first offset>` ids,
    /// with a `#k` suffix when two nodes start at the same offset.
    fn finish(mut self) -> (Vec<Node>, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| {
            let key = |n: &Node| n.fragments.iter().map(|f| (f.start, f.end)).collect::<Vec<_>>();
            key(&self.nodes[a]).cmp(&key(&self.nodes[b]))
        });
        let mut remap = vec![0; order.len()];
        let mut out: Vec<Node> = Vec::with_capacity(order.len());
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
            let mut n = std::mem::replace(
                &mut self.nodes[old],
                Node {
                    node_id: String::new(),
                    role: Vec::new(),
                    fragments: Vec::new(),
                    surface: String::new(),
                },
            );
            let start = n.fragments.first().map_or(0, |f| f.start);
            let base = format!("{}:{start}", self.text_id);
            let clashes = out.iter().filter(|m| m.node_id.split('#').next() == Some(base.as_str())).count();
            n.node_id = if clashes == 0 { base } else { format!("{base}#{clashes}") };
            out.push(n);
        }
        (out, remap)
    }
}

/// Graph of one text from MST relations. Each relation contributes one cause
/// node (all cause runs as fragments), one effect node and an edge.
pub fn text_graph(text_id: &str, text: &str, prediction: &MstPrediction) -> TextGraph {
    let tokens = &prediction.tokens;
    let mut table = NodeTable::new(text_id, text);
    let mut raw_edges = Vec::new();
    for r in &prediction.relations {
        let cause = table.node(token_fragments(tokens, &r.causes.concat()), Label::Cause);
        let effect = table.node(token_fragments(tokens, &r.effects.concat()), Label::Effect);
        let trigger_surface = surface_of(&table.chars, &token_fragments(tokens, &r.trigger));
        raw_edges.push((cause, effect, trigger_surface, r.scores));
    }
    let (nodes, remap) = table.finish();
    let edges = raw_edges
        .into_iter()
        .map(|(c, e, trigger_surface, scores)| Edge {
            cause: nodes[remap[c]].node_id.clone(),
            effect: nodes[remap[e]].node_id.clone(),
            trigger_surface,
            scores,
        })
        .collect();
    TextGraph {
        id: text_id.to_string(),
        nodes,
        edges,
    }
}

/// Nodes only: contiguous Cause and Effect token runs of an SST prediction.
pub fn sst_text_graph(text_id: &str, text: &str, tokens: &TokenizedText, labels: &[LabelSet]) -> TextGraph {
    let mut table = NodeTable::new(text_id, text);
    for label in [Label::Cause, Label::Effect] {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].contains(label)).collect();
        for run in contiguous_runs(&idx) {
            table.node(token_fragments(tokens, &run), label);
        }
    }
    let (nodes, _) = table.finish();
    TextGraph {
        id: text_id.to_string(),
        nodes,
        edges: Vec::new(),
    }
}

/// A trained tagger of either kind.
#[derive(Debug, Clone)]
pub enum Tagger<T> {
    Sst(SstModel<T>),
    Mst(MstModel<T>),
}

impl<T: Scalar> Tagger<T> {
    /// Loads a model directory written by either tagger's `save`.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: serde_json::Value = read_json(&dir.join("model.json"))?;
        match meta["kind"].as_str() {
            Some("sst") => Ok(Tagger::Sst(SstModel::load(dir)?)),
            Some("mst") => Ok(Tagger::Mst(MstModel::load(dir)?)),
            _ => Err(Error::Validation(format!("{} holds no known model kind", dir.display()))),
        }
    }

    pub fn tokenizer(&self) -> Result<Arc<dyn Tokenizer>> {
        let id = match self {
            Tagger::Sst(m) => &m.encoder.tokenizer_id,
            Tagger::Mst(m) => &m.encoder.tokenizer_id,
        };
        resolve_tokenizer(id)
    }
}

/// Runs `model` over `texts` and assembles the graph, ordered by text id.
pub fn extract<T: Scalar>(texts: &[TextUnit], model: &Tagger<T>) -> Result<CausalGraph> {
    let tokenizer = model.tokenizer()?;
    let mut sorted: Vec<&TextUnit> = texts.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut graph = CausalGraph::default();
    for unit in sorted {
        let tokens = tokenizer.tokenize_text(&unit.text);
        let g = match model {
            Tagger::Sst(m) => sst_text_graph(&unit.id, &unit.text, &tokens, &m.predict_tokens(&tokens)?),
            Tagger::Mst(m) => text_graph(&unit.id, &unit.text, &m.predict(&tokens)?),
        };
        graph.texts.push(g);
    }
    Ok(graph)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvent {
    pub text: String,
    /// Character offsets into the cell text.
    pub start: usize,
    pub end: usize,
    pub fragments: Vec<Fragment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEdge {
    pub cause: usize,
    pub effect: usize,
    pub trigger_surface: String,
}

/// How a merged cell would break into atomic events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSplitProposal {
    pub text_id: String,
    pub provenance: Provenance,
    pub events: Vec<SplitEvent>,
    pub edges: Vec<SplitEdge>,
    /// Lowest stage score over all relations.
    pub confidence: f64,
}

/// Events of the cell's relations, one per distinct fragment list. An event
/// spanning several fragments takes the cell text from the first start to
/// the last end. `None` when there are no relations.
pub fn split_merged_cell(cell: &TextUnit, prediction: &MstPrediction) -> Option<CellSplitProposal> {
    if prediction.relations.is_empty() {
        return None;
    }
    let graph = text_graph(&cell.id, &cell.text, prediction);
    let chars: Vec<char> = cell.text.chars().collect();
    let events: Vec<SplitEvent> = graph
        .nodes
        .iter()
        .map(|n| {
            let start = n.fragments.first().map_or(0, |f| f.start);
            let end = n.fragments.last().map_or(0, |f| f.end);
            SplitEvent {
                text: chars[start..end].iter().collect(),
                start,
                end,
                fragments: n.fragments.clone(),
            }
        })
        .collect();
    let index = |id: &str| graph.nodes.iter().position(|n| n.node_id == id).expect("edge endpoint");
    let edges = graph
        .edges
        .iter()
        .map(|e| SplitEdge {
            cause: index(&e.cause),
            effect: index(&e.effect),
            trigger_surface: e.trigger_surface.clone(),
        })
        .collect();
    let confidence = prediction
        .relations
        .iter()
        .map(|r: &ExtractedRelation| r.scores.min())
        .fold(1.0, f64::min);
    Some(CellSplitProposal {
        text_id: cell.id.clone(),
        provenance: cell.provenance.clone(),
        events,
        edges,
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Location, SourceKind};
    use crate::tokenize::WhitespacePunct;

    const G2: &str =
        "Die chipping/crack due to dicing process condition/parameters and the wafer condition in kerf area";

    fn scores() -> StageScores {
        StageScores {
            trigger: 0.9,
            grouping: 1.0,
            arguments: 0.8,
        }
    }

    fn cell(text: &str) -> TextUnit {
        TextUnit {
            id: "fmea-1".into(),
            text: text.into(),
            source_kind: SourceKind::Fmea,
            provenance: Provenance {
                file: "t.csv".into(),
                section: 0,
                location: Location::Cell {
                    row: 1,
                    column: "cause".into(),
                },
            },
        }
    }

    fn prediction(text: &str, relations: Vec<ExtractedRelation>) -> MstPrediction {
        let tokens = WhitespacePunct.tokenize_text(text);
        MstPrediction {
            trigger_probs: vec![0.0; tokens.len()],
            tokens,
            groups: Vec::new(),
            relations,
        }
    }

    fn relation(trigger: Vec<usize>, causes: Vec<usize>, effects: Vec<usize>) -> ExtractedRelation {
        ExtractedRelation {
            trigger,
            causes: contiguous_runs(&causes),
            effects: contiguous_runs(&effects),
            scores: scores(),
        }
    }

    #[test]
    fn guideline_two_cell_splits_in_two() {
        let p = prediction(G2, vec![relation(vec![4, 5], (6..18).collect(), (0..4).collect())]);
        let s = split_merged_cell(&cell(G2), &p).unwrap();
        let texts: Vec<&str> = s.events.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "Die chipping/crack",
                "dicing process condition/parameters and the wafer condition in kerf area"
            ]
        );
        assert_eq!(s.edges.len(), 1);
        assert_eq!((s.edges[0].cause, s.edges[0].effect), (1, 0));
        assert_eq!(s.edges[0].trigger_surface, "due to");
        assert!((s.confidence - 0.8).abs() < 1e-12);
        for e in &s.events {
            assert!(G2.contains(&e.text));
        }
    }

    #[test]
    fn chain_shares_middle_node() {
        let text = "A leads to B , which causes C";
        let p = prediction(text, vec![relation(vec![1, 2], vec![0], vec![3]), relation(vec![6], vec![3], vec![7])]);
        let g = text_graph("t", text, &p);
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.edges[0].effect, g.edges[1].cause);
        assert_eq!(g.nodes[1].role, vec![Label::Cause, Label::Effect]);
        assert_eq!(g.nodes[1].node_id, "t:11");
    }

    #[test]
    fn relation_free_cell_has_no_proposal() {
        assert!(split_merged_cell(&cell("no relation"), &prediction("no relation", vec![])).is_none());
    }

    #[test]
    fn same_relations_same_graph() {
        let p = prediction(G2, vec![relation(vec![4, 5], vec![6, 7], vec![0])]);
        assert_eq!(text_graph("x", G2, &p), text_graph("x", G2, &p));
    }
}

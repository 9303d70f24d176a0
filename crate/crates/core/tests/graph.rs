use causal_core::annotation::Label;
use causal_core::corpus::{SourceKind, TextUnit};
use causal_core::dataset::{mst_instance, sst_instance, AggregatedText};
use causal_core::encoder::{Encoder, TinyConfig};
use causal_core::graph::{extract, split_merged_cell, Tagger};
use causal_core::mst::{predict_mst, train_mst, MstConfig, MstModel};
use causal_core::sst::{train_sst, SstConfig};
use causal_core::synthetic::{generate, TEMPLATES};
use causal_core::tokenize::WhitespacePunct;
use causal_core::train::TrainConfig;

const CHAINED: &str =
    "Due to a wrong implantation dose, the compensation was destroyed, and therefore, the lot was disregarded.";

fn chained_cell() -> AggregatedText {
    let t = TEMPLATES.iter().find(|t| t.name == "chained-due-to-therefore").unwrap();
    let mut text = generate(1, 0, "cell").remove(0);
    let (body, gold) = t.render(
        &text.unit.id,
        &["a wrong implantation dose", "the compensation was destroyed", "the lot was disregarded."],
    );
    assert_eq!(body, CHAINED);
    text.unit.text = body;
    text.unit.source_kind = SourceKind::Fmea;
    text.gold = gold;
    text
}

fn overfit_mst(text: &AggregatedText) -> MstModel<f32> {
    let inst = mst_instance(text, &WhitespacePunct).unwrap();
    let words: Vec<String> = inst.tokens.tokens.iter().map(|t| t.text.clone()).collect();
    let encoder = Encoder::tiny(words.iter().map(String::as_str), TinyConfig::default(), 11).unwrap();
    let config = MstConfig {
        train: TrainConfig {
            max_epochs: 200,
            batch_size: 1,
            ..TrainConfig::default()
        },
        ..MstConfig::default()
    };
    train_mst(&[inst], &[], encoder, &config).unwrap().0
}

#[test]
fn chained_sentence_shares_the_middle_node() {
    let text = chained_cell();
    let model = Tagger::Mst(overfit_mst(&text));
    let graph = extract(std::slice::from_ref(&text.unit), &model).unwrap();
    let g = &graph.texts[0];
    assert_eq!(g.nodes.len(), 3, "{:#?}", g.nodes);
    assert_eq!(g.edges.len(), 2);
    let middle = g.nodes.iter().find(|n| n.surface == "the compensation was destroyed").unwrap();
    assert!(middle.role.contains(&Label::Cause) && middle.role.contains(&Label::Effect));
    assert_eq!(g.edges[0].effect, middle.node_id);
    assert_eq!(g.edges[1].cause, middle.node_id);
    for e in &g.edges {
        assert!(g.nodes.iter().any(|n| n.node_id == e.cause));
        assert!(g.nodes.iter().any(|n| n.node_id == e.effect));
        assert!(!e.trigger_surface.is_empty());
    }
    assert_eq!(extract(std::slice::from_ref(&text.unit), &model).unwrap(), graph);
}

#[test]
fn chained_cell_splits_into_three_events() {
    let text = chained_cell();
    let model = overfit_mst(&text);
    let prediction = predict_mst(&model, &text.unit.text, &WhitespacePunct).unwrap();
    let proposal = split_merged_cell(&text.unit, &prediction).unwrap();
    assert_eq!(proposal.events.len(), 3);
    assert_eq!(proposal.edges.len(), 2);
    let chars: Vec<char> = text.unit.text.chars().collect();
    for ev in &proposal.events {
        let sub: String = chars[ev.start..ev.end].iter().collect();
        assert_eq!(sub, ev.text);
    }
    assert!(proposal.confidence > 0.0 && proposal.confidence <= 1.0);
}

#[test]
fn sst_graphs_have_no_edges() {
    let texts = generate(40, 2, "s");
    let instances: Vec<_> = texts.iter().map(|t| sst_instance(t, &WhitespacePunct)).collect();
    let words: Vec<String> = instances
        .iter()
        .flat_map(|i| i.tokens.tokens.iter().map(|t| t.text.clone()))
        .collect();
    let encoder = Encoder::<f32>::tiny(words.iter().map(String::as_str), TinyConfig::default(), 1).unwrap();
    let mut config = SstConfig::default();
    config.train.max_epochs = 3;
    let (model, _) = train_sst(&instances, &[], encoder, &config).unwrap();
    let units: Vec<TextUnit> = texts.iter().map(|t| t.unit.clone()).collect();
    let tagger = Tagger::Sst(model);
    let graph = extract(&units, &tagger).unwrap();
    assert_eq!(graph.texts.len(), 40);
    assert_eq!(graph.edge_count(), 0);
    assert!(graph.texts.windows(2).all(|w| w[0].id < w[1].id));
    assert!(extract(&[], &tagger).unwrap().texts.is_empty());
}

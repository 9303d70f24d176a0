//! Multi-stage tagger: trigger detection, trigger grouping, attention
//! aggregation and per-trigger argument detection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{Label, LabelSet};
use crate::dataset::{contiguous_runs, ArgClass, MstInstance};
use crate::encoder::{encoder_dir, Encoder};
use crate::error::{contract, read_json, write_json, Error, Result};
use crate::eval::Counts;
use crate::scalar::{sigmoid, Scalar};
use crate::seed::{derive_seed, rng};
use crate::tensor::{
    collect_grads, join, save_safetensors, softmax_in_place, Graph, Linear, Matrix, Mlp, Module, TensorFile, Var,
};
use crate::tokenize::{TokenizedText, Tokenizer};
use crate::train::{fit, TrainConfig, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MstConfig {
    pub trigger_threshold: f64,
    pub group_threshold: f64,
    /// Weights of the trigger, grouping and argument losses.
    pub lambdas: [f64; 3],
    /// Weight of positive terms in the trigger and grouping losses.
    pub pos_weight: f64,
    pub train: TrainConfig,
}

impl Default for MstConfig {
    fn default() -> Self {
        Self {
            trigger_threshold: 0.5,
            group_threshold: 0.5,
            lambdas: [1.0; 3],
            pos_weight: 1.0,
            train: TrainConfig::default(),
        }
    }
}

/// Additive attention `αᵢ ∝ exp(vᵀ tanh(W eᵢ))` over group members.
#[derive(Debug, Clone)]
pub struct AttentionPool<T> {
    pub w: Matrix<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> AttentionPool<T> {
    pub fn new<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let std = (1.0 / dim as f64).sqrt();
        Self {
            w: Matrix::randn(dim, dim, std, rng),
            v: Matrix::randn(1, dim, std, rng),
        }
    }

    /// Returns the `1 × d` combined embedding and the `1 × m` weights.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a, T>, members: Var) -> (Var, Var) {
        let w = g.param(&self.w);
        let v = g.param(&self.v);
        let hidden = g.matmul_t(members, w);
        let hidden = g.tanh(hidden);
        let scores = g.matmul_t(hidden, v);
        let scores = g.transpose(scores);
        let alpha = g.softmax_rows(scores);
        (g.matmul(alpha, members), alpha)
    }
}

impl<T: Scalar> Module<T> for AttentionPool<T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        f(join(p, "w"), &self.w);
        f(join(p, "v"), &self.v);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        f(join(p, "w"), &mut self.w);
        f(join(p, "v"), &mut self.v);
    }
}

#[derive(Debug, Clone)]
pub struct MstModel<T> {
    pub encoder: Encoder<T>,
    /// `d → 1`.
    pub trigger: Linear<T>,
    /// `2d → d → 1` on `[h_i; h_j]`.
    pub grouping: Mlp<T>,
    pub attention: AttentionPool<T>,
    /// `2d → d → 3` on `[h_t; c]`, classes in `ArgClass` order.
    pub arguments: Mlp<T>,
    pub config: MstConfig,
}

fn visit_heads<'s, T: Scalar>(m: &'s MstModel<T>, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
    m.trigger.visit(&join(p, "trigger"), f);
    m.grouping.visit(&join(p, "grouping"), f);
    m.attention.visit(&join(p, "attention"), f);
    m.arguments.visit(&join(p, "arguments"), f);
}

impl<T: Scalar> Module<T> for MstModel<T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.encoder.visit(&join(p, "encoder"), f);
        visit_heads(self, p, f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        self.encoder.visit_mut(&join(p, "encoder"), f);
        self.trigger.visit_mut(&join(p, "trigger"), f);
        self.grouping.visit_mut(&join(p, "grouping"), f);
        self.attention.visit_mut(&join(p, "attention"), f);
        self.arguments.visit_mut(&join(p, "arguments"), f);
    }
}

struct Heads<'m, T>(&'m MstModel<T>);

impl<T: Scalar> Module<T> for Heads<'_, T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        visit_heads(self.0, p, f);
    }

    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(String, &mut Matrix<T>)) {
        unreachable!("read-only view")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageScores {
    /// Lowest trigger probability among the group's tokens.
    pub trigger: f64,
    /// Lowest same-entity probability among linked pairs; 1 for one token.
    pub grouping: f64,
    /// Lowest winning-class probability among argument tokens.
    pub arguments: f64,
}

impl StageScores {
    pub fn min(&self) -> f64 {
        self.trigger.min(self.grouping).min(self.arguments)
    }
}

/// A complete relation: trigger tokens plus contiguous cause and effect runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedRelation {
    pub trigger: Vec<usize>,
    pub causes: Vec<Vec<usize>>,
    pub effects: Vec<Vec<usize>>,
    pub scores: StageScores,
}

/// Full cascade output for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MstPrediction {
    pub tokens: TokenizedText,
    pub trigger_probs: Vec<f64>,
    pub groups: Vec<Vec<usize>>,
    pub relations: Vec<ExtractedRelation>,
}

impl MstPrediction {
    /// Trigger from detection; Cause and Effect from any emitted relation.
    pub fn token_labels(&self, trigger_threshold: f64) -> Vec<LabelSet> {
        let mut out: Vec<LabelSet> = self
            .trigger_probs
            .iter()
            .map(|&p| {
                if p > trigger_threshold {
                    LabelSet::of(&[Label::Trigger])
                } else {
                    LabelSet::EMPTY
                }
            })
            .collect();
        for r in &self.relations {
            for &i in r.causes.iter().flatten() {
                out[i].insert(Label::Cause);
            }
            for &i in r.effects.iter().flatten() {
                out[i].insert(Label::Effect);
            }
        }
        out
    }
}

/// Gold token labels of an MST instance, unioned over its groups.
pub fn gold_token_labels(inst: &MstInstance) -> Vec<LabelSet> {
    let mut out = vec![LabelSet::EMPTY; inst.tokens.len()];
    for group in &inst.groups {
        for &i in &group.tokens {
            out[i].insert(Label::Trigger);
        }
        for (i, a) in group.arguments.iter().enumerate() {
            match a {
                ArgClass::Cause => out[i].insert(Label::Cause),
                ArgClass::Effect => out[i].insert(Label::Effect),
                ArgClass::None => {}
            }
        }
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of `items` under the given links; components sorted
/// by smallest member, members ascending.
pub fn components(items: &[usize], links: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let pos = |x: usize| sorted.binary_search(&x).expect("linked item present");
    let mut parent: Vec<usize> = (0..sorted.len()).collect();
    for &(a, b) in links {
        let (ra, rb) = (find(&mut parent, pos(a)), find(&mut parent, pos(b)));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; sorted.len()];
    for i in 0..sorted.len() {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(sorted[i]);
    }
    groups
}

impl<T: Scalar> MstModel<T> {
    pub fn new(encoder: Encoder<T>, config: MstConfig, seed: u64) -> Result<Self> {
        contract!(
            [config.trigger_threshold, config.group_threshold]
                .iter()
                .all(|&t| t > 0.0 && t < 1.0),
            "thresholds must lie in (0, 1)"
        );
        let d = encoder.dim();
        let mut r = rng(derive_seed(seed, &[0x4d]));
        Ok(Self {
            trigger: Linear::new(d, 1, &mut r),
            grouping: Mlp::new(2 * d, d, 1, &mut r),
            attention: AttentionPool::new(d, &mut r),
            arguments: Mlp::new(2 * d, d, 3, &mut r),
            encoder,
            config,
        })
    }

    fn pair_logits<'a>(&'a self, g: &mut Graph<'a, T>, h: Var, pairs: &[(usize, usize)]) -> Var {
        let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let l = g.gather_rows(h, &left);
        let r = g.gather_rows(h, &right);
        let x = g.concat_cols(l, r);
        self.grouping.forward(g, x)
    }

    fn argument_logits<'a>(&'a self, g: &mut Graph<'a, T>, h: Var, members: &[usize], n: usize) -> (Var, Var) {
        let e = g.gather_rows(h, members);
        let (c, alpha) = self.attention.forward(g, e);
        let c = g.broadcast_rows(c, n);
        let x = g.concat_cols(h, c);
        (self.arguments.forward(g, x), alpha)
    }

    /// Combined loss `λ₁·L_trigger + λ₂·L_group + λ₃·L_args` with gold
    /// triggers and groups feeding the later stages, and its gradients.
    pub fn loss_grads(&self, inst: &MstInstance) -> Result<(T, Vec<Matrix<T>>)> {
        let enc = self.encoder.encode_ids(&inst.tokens)?;
        let mut g = Graph::new();
        let n = enc.kept;
        if n == 0 {
            return Ok((T::zero(), collect_grads(&g, self)));
        }
        let [l1, l2, l3] = self.config.lambdas.map(T::lit);
        let pw = T::lit(self.config.pos_weight);
        let h = self.encoder.encode(&mut g, &enc);

        let mut trigger_targets = vec![T::zero(); n];
        let groups: Vec<(Vec<usize>, &[ArgClass])> = inst
            .groups
            .iter()
            .map(|grp| (grp.tokens.iter().copied().filter(|&i| i < n).collect::<Vec<_>>(), &grp.arguments[..n]))
            .filter(|(members, _)| !members.is_empty())
            .collect();
        for (members, _) in &groups {
            for &i in members {
                trigger_targets[i] = T::one();
            }
        }
        let logits = self.trigger.forward(&mut g, h);
        let lt = g.bce_with_logits(logits, &trigger_targets, pw);
        let mut total = g.scale(lt, l1);

        let gold: Vec<usize> = (0..n).filter(|&i| trigger_targets[i] > T::zero()).collect();
        let mut pairs = Vec::new();
        for (a, &i) in gold.iter().enumerate() {
            for &j in &gold[a + 1..] {
                pairs.push((i, j));
            }
        }
        if !pairs.is_empty() {
            let targets: Vec<T> = pairs
                .iter()
                .map(|&(i, j)| {
                    let same = groups.iter().any(|(m, _)| m.contains(&i) && m.contains(&j));
                    if same {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect();
            let pl = self.pair_logits(&mut g, h, &pairs);
            let lg = g.bce_with_logits(pl, &targets, pw);
            let lg = g.scale(lg, l2);
            total = g.add(total, lg);
        }

        for (members, args) in &groups {
            let (logits, _) = self.argument_logits(&mut g, h, members, n);
            let targets: Vec<usize> = args.iter().map(|a| a.index()).collect();
            let la = g.cross_entropy(logits, &targets);
            let la = g.scale(la, l3);
            total = g.add(total, la);
        }

        g.backward(total);
        let mut grads = collect_grads(&g, self);
        if !self.encoder.trainable {
            let k = self.encoder.matrix_count();
            grads[..k].iter_mut().for_each(|m| m.scale_assign(T::zero()));
        }
        Ok((g.scalar(total), grads))
    }

    /// Contextual embeddings of the kept tokens.
    pub fn embeddings(&self, tokens: &TokenizedText) -> Result<Matrix<T>> {
        Ok(self.encoder.embed(std::slice::from_ref(tokens))?.remove(0))
    }

    /// Per-token trigger probabilities.
    pub fn detect_triggers(&self, h: &Matrix<T>) -> Vec<f64> {
        if h.rows() == 0 {
            return Vec::new();
        }
        let mut g = Graph::new();
        let x = g.input(h.clone());
        let z = self.trigger.forward(&mut g, x);
        g.value(z).data().iter().map(|&v| sigmoid(v).as_f64()).collect()
    }

    /// Same-entity probability for every pair `i < j` of `indices`.
    pub fn pair_probabilities(&self, indices: &[usize], h: &Matrix<T>) -> Vec<((usize, usize), f64)> {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut pairs = Vec::new();
        for (a, &i) in sorted.iter().enumerate() {
            for &j in &sorted[a + 1..] {
                pairs.push((i, j));
            }
        }
        if pairs.is_empty() {
            return Vec::new();
        }
        let mut g = Graph::new();
        let x = g.input(h.clone());
        let z = self.pair_logits(&mut g, x, &pairs);
        pairs
            .into_iter()
            .zip(g.value(z).data().iter().map(|&v| sigmoid(v).as_f64()))
            .collect()
    }

    /// Partition of trigger tokens: pairs above the grouping threshold are
    /// linked and connected components returned.
    pub fn group_triggers(&self, indices: &[usize], h: &Matrix<T>) -> Vec<Vec<usize>> {
        let links: Vec<(usize, usize)> = self
            .pair_probabilities(indices, h)
            .into_iter()
            .filter(|&(_, p)| p > self.config.group_threshold)
            .map(|(pair, _)| pair)
            .collect();
        components(indices, &links)
    }

    /// Attention-weighted combination of group member embeddings and the
    /// weights used.
    pub fn aggregate_trigger(&self, members: &Matrix<T>) -> Result<(Matrix<T>, Vec<f64>)> {
        contract!(members.rows() > 0, "cannot aggregate an empty trigger group");
        let mut g = Graph::new();
        let e = g.input(members.clone());
        let (c, alpha) = self.attention.forward(&mut g, e);
        Ok((
            g.value(c).clone(),
            g.value(alpha).data().iter().map(|v| v.as_f64()).collect(),
        ))
    }

    /// Class and its probability for every token, given a combined trigger
    /// embedding.
    pub fn detect_arguments(&self, h: &Matrix<T>, combined: &Matrix<T>) -> Vec<(ArgClass, f64)> {
        let n = h.rows();
        if n == 0 {
            return Vec::new();
        }
        let mut g = Graph::new();
        let x = g.input(h.clone());
        let c = g.input(combined.clone());
        let c = g.broadcast_rows(c, n);
        let xc = g.concat_cols(x, c);
        let z = self.arguments.forward(&mut g, xc);
        let logits = g.value(z);
        (0..n)
            .map(|i| {
                let mut row: Vec<T> = logits.row(i).to_vec();
                softmax_in_place(&mut row);
                let (best, p) = row
                    .iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc });
                (ArgClass::from_index(best), p.as_f64())
            })
            .collect()
    }

    /// Runs the cascade. Groups without a cause run or an effect run are
    /// dropped; relations are ordered by first trigger token.
    pub fn predict(&self, tokens: &TokenizedText) -> Result<MstPrediction> {
        let h = self.embeddings(tokens)?;
        let mut trigger_probs = self.detect_triggers(&h);
        let candidates: Vec<usize> = (0..trigger_probs.len())
            .filter(|&i| trigger_probs[i] > self.config.trigger_threshold)
            .collect();
        let pair_probs = self.pair_probabilities(&candidates, &h);
        let links: Vec<(usize, usize)> = pair_probs
            .iter()
            .filter(|&&(_, p)| p > self.config.group_threshold)
            .map(|&(pair, _)| pair)
            .collect();
        let groups = components(&candidates, &links);
        let mut relations = Vec::new();
        for members in &groups {
            let rows = Matrix::from_vec(
                members.len(),
                h.cols(),
                members.iter().flat_map(|&i| h.row(i).iter().copied()).collect(),
            );
            let (combined, _) = self.aggregate_trigger(&rows)?;
            let classes = self.detect_arguments(&h, &combined);
            let pick = |class: ArgClass| -> Vec<usize> {
                (0..classes.len()).filter(|&i| classes[i].0 == class).collect()
            };
            let causes = contiguous_runs(&pick(ArgClass::Cause));
            let effects = contiguous_runs(&pick(ArgClass::Effect));
            if causes.is_empty() || effects.is_empty() {
                continue;
            }
            let grouping = pair_probs
                .iter()
                .filter(|((i, j), p)| members.contains(i) && members.contains(j) && *p > self.config.group_threshold)
                .map(|&(_, p)| p)
                .fold(1.0, f64::min);
            let arguments = causes
                .iter()
                .chain(&effects)
                .flatten()
                .map(|&i| classes[i].1)
                .fold(1.0, f64::min);
            let trigger = members.iter().map(|&i| trigger_probs[i]).fold(1.0, f64::min);
            relations.push(ExtractedRelation {
                trigger: members.clone(),
                causes,
                effects,
                scores: StageScores {
                    trigger,
                    grouping,
                    arguments,
                },
            });
        }
        relations.sort_by_key(|r| r.trigger[0]);
        trigger_probs.resize(tokens.len(), 0.0);
        Ok(MstPrediction {
            tokens: tokens.clone(),
            trigger_probs,
            groups,
            relations,
        })
    }

    /// Token counts for Trigger, Cause, Effect (union semantics) in
    /// `Label::REPORT_ORDER`.
    pub fn token_counts(&self, inst: &MstInstance) -> Result<[Counts; 3]> {
        let pred = self.predict(&inst.tokens)?.token_labels(self.config.trigger_threshold);
        let gold = gold_token_labels(inst);
        let mut out = [Counts::default(); 3];
        for (k, label) in Label::REPORT_ORDER.into_iter().enumerate() {
            out[k].add_labels(&pred, &gold, label);
        }
        Ok(out)
    }

    /// Pairwise grouping counts over gold trigger tokens, using the raw
    /// pair decision.
    pub fn grouping_counts(&self, inst: &MstInstance) -> Result<Counts> {
        let gold = inst.trigger_tokens();
        let mut c = Counts::default();
        if gold.len() < 2 {
            return Ok(c);
        }
        let h = self.embeddings(&inst.tokens)?;
        let gold: Vec<usize> = gold.into_iter().filter(|&i| i < h.rows()).collect();
        for ((i, j), p) in self.pair_probabilities(&gold, &h) {
            c.add(p > self.config.group_threshold, inst.same_group(i, j));
        }
        Ok(c)
    }

    /// Mean of pooled token F1 over Trigger, Cause and Effect.
    pub fn macro_f1(&self, instances: &[MstInstance]) -> Result<f64> {
        let mut counts = [Counts::default(); 3];
        for inst in instances {
            for (acc, c) in counts.iter_mut().zip(self.token_counts(inst)?) {
                acc.merge(&c);
            }
        }
        Ok(counts.iter().map(Counts::f1).sum::<f64>() / 3.0)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.encoder.save(&encoder_dir(dir))?;
        save_safetensors(&Heads(self), &dir.join("heads.safetensors"))?;
        write_json(
            &dir.join("model.json"),
            &serde_json::json!({ "kind": "mst", "config": self.config }),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: serde_json::Value = read_json(&dir.join("model.json"))?;
        if meta["kind"] != "mst" {
            return Err(Error::Validation(format!("{} is not an MST model", dir.display())));
        }
        let config: MstConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| Error::json(dir.join("model.json").display().to_string(), e))?;
        let encoder = Encoder::from_checkpoint(&encoder_dir(dir))?;
        let mut model = Self::new(encoder, config, 0)?;
        let tensors = TensorFile::<T>::read(&dir.join("heads.safetensors"))?;
        tensors.load_into(&mut model.trigger, |n| vec![join("trigger", n)])?;
        tensors.load_into(&mut model.grouping, |n| vec![join("grouping", n)])?;
        tensors.load_into(&mut model.attention, |n| vec![join("attention", n)])?;
        tensors.load_into(&mut model.arguments, |n| vec![join("arguments", n)])?;
        Ok(model)
    }
}

/// Tokenizes `text` and runs the cascade.
pub fn predict_mst<T: Scalar>(model: &MstModel<T>, text: &str, tokenizer: &dyn Tokenizer) -> Result<MstPrediction> {
    model.predict(&tokenizer.tokenize_text(text))
}

/// End-to-end training with teacher forcing, early-stopping on dev macro F1
/// when a dev set is given.
pub fn train_mst<T: Scalar>(
    train: &[MstInstance],
    dev: &[MstInstance],
    encoder: Encoder<T>,
    config: &MstConfig,
) -> Result<(MstModel<T>, TrainLog)> {
    contract!(!train.is_empty(), "MST training set is empty");
    contract!(
        train.iter().any(|i| !i.groups.is_empty()),
        "MST training set has no gold trigger groups"
    );
    let mut model = MstModel::new(encoder, config.clone(), config.train.seed)?;
    let mut dev_score = |m: &MstModel<T>| m.macro_f1(dev).unwrap_or(0.0);
    let log = fit(
        &mut model,
        train.len(),
        &config.train,
        |m: &MstModel<T>, i| m.loss_grads(&train[i]),
        if dev.is_empty() { None } else { Some(&mut dev_score) },
    )?;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SourceKind;
    use crate::dataset::TriggerGroup;
    use crate::encoder::TinyConfig;
    use crate::tokenize::WhitespacePunct;

    fn simple() -> MstInstance {
        let tokens = WhitespacePunct.tokenize_text("B due to A");
        MstInstance {
            text_id: "x".into(),
            source_kind: SourceKind::Fmea,
            tokens,
            groups: vec![TriggerGroup {
                tokens: vec![1, 2],
                arguments: vec![ArgClass::Effect, ArgClass::None, ArgClass::None, ArgClass::Cause],
            }],
        }
    }

    fn model(seed: u64) -> MstModel<f64> {
        let enc = Encoder::tiny(["b", "due", "to", "a"], TinyConfig::default(), seed).unwrap();
        MstModel::new(enc, MstConfig::default(), seed).unwrap()
    }

    #[test]
    fn components_partition() {
        assert_eq!(components(&[5, 1, 3], &[(1, 5)]), vec![vec![1, 5], vec![3]]);
        assert_eq!(components(&[4], &[]), vec![vec![4]]);
        assert!(components(&[], &[]).is_empty());
    }

    #[test]
    fn singleton_aggregation_is_identity() {
        let m = model(1);
        let e = Matrix::from_vec(1, 32, (0..32).map(|i| i as f64 / 7.0).collect());
        let (c, w) = m.aggregate_trigger(&e).unwrap();
        assert_eq!(c, e);
        assert_eq!(w, vec![1.0]);
        assert!(m.aggregate_trigger(&Matrix::zeros(0, 32)).is_err());
    }

    #[test]
    fn identical_members_average_to_themselves() {
        let m = model(2);
        let row: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let e = Matrix::from_vec(2, 32, [row.clone(), row.clone()].concat());
        let (c, w) = m.aggregate_trigger(&e).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
        for (a, b) in c.data().iter().zip(&row) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn untrained_argument_shape() {
        let m = model(3);
        let h = m.embeddings(&simple().tokens).unwrap();
        let out = m.detect_arguments(&h, &Matrix::zeros(1, 32));
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn empty_text_yields_nothing() {
        let m = model(3);
        let p = predict_mst(&m, "", &WhitespacePunct).unwrap();
        assert!(p.relations.is_empty() && p.trigger_probs.is_empty());
    }

    #[test]
    fn overfits_simple_relation() {
        let inst = simple();
        let enc = Encoder::<f32>::tiny(["b", "due", "to", "a"], TinyConfig::default(), 5).unwrap();
        let config = MstConfig {
            train: TrainConfig {
                max_epochs: 150,
                batch_size: 1,
                ..TrainConfig::default()
            },
            ..MstConfig::default()
        };
        let train = vec![inst.clone()];
        let (m, log) = train_mst(&train, &[], enc, &config).unwrap();
        assert!(log.epochs.last().unwrap().train_loss < 0.05);
        let p = m.predict(&inst.tokens).unwrap();
        assert_eq!(p.relations.len(), 1);
        let r = &p.relations[0];
        assert_eq!(r.trigger, vec![1, 2]);
        assert_eq!(r.causes, vec![vec![3]]);
        assert_eq!(r.effects, vec![vec![0]]);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(4);
        m.save(dir.path()).unwrap();
        let back = MstModel::<f64>::load(dir.path()).unwrap();
        let t = simple().tokens;
        assert_eq!(m.predict(&t).unwrap(), back.predict(&t).unwrap());
    }
}

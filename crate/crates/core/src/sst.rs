//! Single-stage multi-label token tagger.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{Label, LabelSet};
use crate::dataset::SstInstance;
use crate::encoder::{encoder_dir, EncodedIds, Encoder};
use crate::error::{contract, read_json, write_json, Error, Result};
use crate::eval::Counts;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng};
use crate::tensor::{collect_grads, join, save_safetensors, Graph, Linear, Matrix, Module, TensorFile, Var};
use crate::tokenize::{Token, TokenizedText, Tokenizer};
use crate::train::{fit, TrainConfig, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SstConfig {
    /// Decision thresholds in `Label::ALL` order (Cause, Effect, Trigger).
    pub thresholds: [f64; 3],
    /// Weight of positive terms in the binary cross-entropy.
    pub pos_weight: f64,
    pub train: TrainConfig,
}

impl Default for SstConfig {
    fn default() -> Self {
        Self {
            thresholds: [0.5; 3],
            pos_weight: 1.0,
            train: TrainConfig::default(),
        }
    }
}

/// Encoder plus one linear scorer per label.
#[derive(Debug, Clone)]
pub struct SstModel<T> {
    pub encoder: Encoder<T>,
    /// In `Label::ALL` order.
    pub heads: [Linear<T>; 3],
    pub config: SstConfig,
}

impl<T: Scalar> Module<T> for SstModel<T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.encoder.visit(&join(p, "encoder"), f);
        self.visit_heads(p, f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        self.encoder.visit_mut(&join(p, "encoder"), f);
        for (label, head) in Label::ALL.iter().zip(self.heads.iter_mut()) {
            head.visit_mut(&join(p, &format!("heads.{}", label.as_str().to_lowercase())), f);
        }
    }
}

/// Head parameters only, for checkpoints.
struct Heads<'m, T>(&'m SstModel<T>);

impl<T: Scalar> Module<T> for Heads<'_, T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.0.visit_heads(p, f);
    }

    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(String, &mut Matrix<T>)) {
        unreachable!("read-only view")
    }
}

/// Labels predicted for one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub token: String,
    pub start: usize,
    pub end: usize,
    pub labels: LabelSet,
}

impl<T: Scalar> SstModel<T> {
    pub fn new(encoder: Encoder<T>, config: SstConfig, seed: u64) -> Result<Self> {
        contract!(
            config.thresholds.iter().all(|&t| t > 0.0 && t < 1.0),
            "thresholds must lie in (0, 1)"
        );
        let mut r = rng(derive_seed(seed, &[0x55]));
        let d = encoder.dim();
        let heads = [Linear::new(d, 1, &mut r), Linear::new(d, 1, &mut r), Linear::new(d, 1, &mut r)];
        Ok(Self { encoder, heads, config })
    }

    fn visit_heads<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        for (label, head) in Label::ALL.iter().zip(&self.heads) {
            head.visit(&join(p, &format!("heads.{}", label.as_str().to_lowercase())), f);
        }
    }

    fn logits<'a>(&'a self, g: &mut Graph<'a, T>, enc: &EncodedIds) -> [Var; 3] {
        let h = self.encoder.encode(g, enc);
        [
            self.heads[0].forward(g, h),
            self.heads[1].forward(g, h),
            self.heads[2].forward(g, h),
        ]
    }

    /// Summed per-head binary cross-entropy of one instance and its gradients.
    pub fn loss_grads(&self, inst: &SstInstance) -> Result<(T, Vec<Matrix<T>>)> {
        let enc = self.encoder.encode_ids(&inst.tokens)?;
        let mut g = Graph::new();
        if enc.kept == 0 {
            return Ok((T::zero(), collect_grads(&g, self)));
        }
        let logits = self.logits(&mut g, &enc);
        let pw = T::lit(self.config.pos_weight);
        let mut total = None;
        for (k, label) in Label::ALL.into_iter().enumerate() {
            let targets: Vec<T> = inst.labels[..enc.kept]
                .iter()
                .map(|s| if s.contains(label) { T::one() } else { T::zero() })
                .collect();
            let l = g.bce_with_logits(logits[k], &targets, pw);
            total = Some(match total {
                Some(t) => g.add(t, l),
                None => l,
            });
        }
        let loss = total.expect("three heads");
        g.backward(loss);
        let mut grads = collect_grads(&g, self);
        if !self.encoder.trainable {
            let n = self.encoder.matrix_count();
            grads[..n].iter_mut().for_each(|m| m.scale_assign(T::zero()));
        }
        Ok((g.scalar(loss), grads))
    }

    /// Per-token probabilities in `Label::ALL` order. Tokens cut off by
    /// truncation get zeros.
    pub fn probabilities(&self, tokens: &TokenizedText) -> Result<Vec<[f64; 3]>> {
        let enc = self.encoder.encode_ids(tokens)?;
        let mut out = vec![[0.0; 3]; tokens.len()];
        if enc.kept == 0 {
            return Ok(out);
        }
        let mut g = Graph::new();
        let logits = self.logits(&mut g, &enc);
        for (k, &l) in logits.iter().enumerate() {
            for (i, &z) in g.value(l).data().iter().enumerate() {
                out[i][k] = crate::scalar::sigmoid(z).as_f64();
            }
        }
        Ok(out)
    }

    /// Label `L` is assigned iff its probability exceeds the threshold.
    pub fn predict_tokens(&self, tokens: &TokenizedText) -> Result<Vec<LabelSet>> {
        Ok(self
            .probabilities(tokens)?
            .into_iter()
            .map(|p| {
                let mut s = LabelSet::EMPTY;
                for (k, label) in Label::ALL.into_iter().enumerate() {
                    if p[k] > self.config.thresholds[k] {
                        s.insert(label);
                    }
                }
                s
            })
            .collect())
    }

    /// Mean over labels of pooled token F1.
    pub fn macro_f1(&self, instances: &[SstInstance]) -> Result<f64> {
        let mut counts = [Counts::default(); 3];
        for inst in instances {
            let pred = self.predict_tokens(&inst.tokens)?;
            for (k, label) in Label::ALL.into_iter().enumerate() {
                counts[k].add_labels(&pred, &inst.labels, label);
            }
        }
        Ok(counts.iter().map(Counts::f1).sum::<f64>() / 3.0)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.encoder.save(&encoder_dir(dir))?;
        save_safetensors(&Heads(self), &dir.join("heads.safetensors"))?;
        write_json(
            &dir.join("model.json"),
            &serde_json::json!({ "kind": "sst", "config": self.config }),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: serde_json::Value = read_json(&dir.join("model.json"))?;
        if meta["kind"] != "sst" {
            return Err(Error::Validation(format!("{} is not an SST model", dir.display())));
        }
        let config: SstConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| Error::json(dir.join("model.json").display().to_string(), e))?;
        let encoder = Encoder::from_checkpoint(&encoder_dir(dir))?;
        let mut model = Self::new(encoder, config, 0)?;
        let tensors = TensorFile::<T>::read(&dir.join("heads.safetensors"))?;
        for (label, head) in Label::ALL.iter().zip(model.heads.iter_mut()) {
            let prefix = format!("heads.{}", label.as_str().to_lowercase());
            tensors.load_into(head, |n| vec![join(&prefix, n)])?;
        }
        Ok(model)
    }
}

/// Per-token predictions for a raw text; empty text gives an empty list.
pub fn predict_sst<T: Scalar>(model: &SstModel<T>, text: &str, tokenizer: &dyn Tokenizer) -> Result<Vec<TokenPrediction>> {
    let tokens = tokenizer.tokenize_text(text);
    let labels = model.predict_tokens(&tokens)?;
    Ok(tokens
        .tokens
        .into_iter()
        .zip(labels)
        .map(|(Token { text, start, end }, labels)| TokenPrediction {
            token: text,
            start,
            end,
            labels,
        })
        .collect())
}

/// Trains heads and encoder jointly, early-stopping on dev macro F1 when a
/// dev set is given.
pub fn train_sst<T: Scalar>(
    train: &[SstInstance],
    dev: &[SstInstance],
    encoder: Encoder<T>,
    config: &SstConfig,
) -> Result<(SstModel<T>, TrainLog)> {
    contract!(!train.is_empty(), "SST training set is empty");
    let mut model = SstModel::new(encoder, config.clone(), config.train.seed)?;
    let mut dev_score = |m: &SstModel<T>| m.macro_f1(dev).unwrap_or(0.0);
    let log = fit(
        &mut model,
        train.len(),
        &config.train,
        |m: &SstModel<T>, i| m.loss_grads(&train[i]),
        if dev.is_empty() { None } else { Some(&mut dev_score) },
    )?;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::TinyConfig;
    use crate::tokenize::WhitespacePunct;

    fn instance(text: &str, labels: &[&[Label]]) -> SstInstance {
        let tokens = WhitespacePunct.tokenize_text(text);
        assert_eq!(tokens.len(), labels.len());
        SstInstance {
            text_id: "x".into(),
            source_kind: crate::corpus::SourceKind::Fmea,
            tokens,
            labels: labels.iter().map(|l| LabelSet::of(l)).collect(),
        }
    }

    #[test]
    fn empty_text_predicts_nothing() {
        let enc = Encoder::<f32>::tiny(["a"], TinyConfig::default(), 1).unwrap();
        let model = SstModel::new(enc, SstConfig::default(), 1).unwrap();
        assert!(predict_sst(&model, "", &WhitespacePunct).unwrap().is_empty());
    }

    #[test]
    fn raising_threshold_never_adds_labels() {
        let enc = Encoder::<f64>::tiny(["a", "b", "c"], TinyConfig::default(), 2).unwrap();
        let mut model = SstModel::new(enc, SstConfig::default(), 2).unwrap();
        let t = WhitespacePunct.tokenize_text("a b c a b");
        let low = model.predict_tokens(&t).unwrap();
        model.config.thresholds = [0.9; 3];
        let high = model.predict_tokens(&t).unwrap();
        for (l, h) in low.iter().zip(&high) {
            for label in h.labels() {
                assert!(l.contains(label));
            }
        }
    }

    #[test]
    fn overfits_single_text() {
        use Label::*;
        let inst = instance(
            "die chipping due to dicing",
            &[&[Effect], &[Effect], &[Trigger], &[Trigger], &[Cause]],
        );
        let enc = Encoder::<f32>::tiny(inst.tokens.tokens.iter().map(|t| t.text.as_str()), TinyConfig::default(), 4)
            .unwrap();
        let config = SstConfig {
            train: TrainConfig {
                max_epochs: 200,
                batch_size: 1,
                ..TrainConfig::default()
            },
            ..SstConfig::default()
        };
        let train = vec![inst];
        let (model, _) = train_sst(&train, &[], enc, &config).unwrap();
        assert_eq!(model.macro_f1(&train).unwrap(), 1.0);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let enc = Encoder::<f64>::tiny(["a", "b"], TinyConfig::default(), 2).unwrap();
        let model = SstModel::new(enc, SstConfig::default(), 2).unwrap();
        model.save(dir.path()).unwrap();
        let back = SstModel::<f64>::load(dir.path()).unwrap();
        let t = WhitespacePunct.tokenize_text("a b a");
        assert_eq!(model.probabilities(&t).unwrap(), back.probabilities(&t).unwrap());
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let enc = Encoder::<f32>::tiny(["a"], TinyConfig::default(), 1).unwrap();
        assert!(train_sst(&[], &[], enc, &SstConfig::default()).is_err());
    }
}

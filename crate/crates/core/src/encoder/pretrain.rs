//! In-domain masked-LM adaptation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::masking::{select_masks, MaskStrategy, PmiVocabulary};
use super::{Encoder, MlmHead, MASK, SPECIAL};
use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng};
use crate::tensor::{collect_grads, join, Graph, Matrix, Module};
use crate::tokenize::TokenizedText;
use crate::train::{TrainConfig, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSection {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingSection {
    pub strategy: MaskStrategy,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmiSection {
    pub n_max: usize,
    pub min_count: u64,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainTrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

/// Masked-LM adaptation settings, read from JSON with the sections
/// `encoder`, `masking`, `pmi`, `train` and a top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PretrainConfig {
    pub encoder: EncoderSection,
    pub masking: MaskingSection,
    pub pmi: PmiSection,
    pub train: PretrainTrainSection,
    pub seed: u64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            name: super::TINY.to_string(),
        }
    }
}

impl Default for MaskingSection {
    fn default() -> Self {
        Self {
            strategy: MaskStrategy::Um,
            ratio: 0.15,
        }
    }
}

impl Default for PmiSection {
    fn default() -> Self {
        Self {
            n_max: 5,
            min_count: 10,
            top_k: 800,
        }
    }
}

impl Default for PretrainTrainSection {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    /// Mean cross-entropy per masked token.
    pub loss: f64,
    pub masked: usize,
    pub tokens: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub epochs: Vec<PretrainEpoch>,
}

impl PretrainLog {
    pub fn mask_fraction(&self) -> f64 {
        let masked: usize = self.epochs.iter().map(|e| e.masked).sum();
        let tokens: usize = self.epochs.iter().map(|e| e.tokens).sum();
        masked as f64 / tokens.max(1) as f64
    }
}

/// Encoder body plus masked-LM head, trained together.
#[derive(Clone)]
struct WithHead<T> {
    encoder: Encoder<T>,
}

impl<T: Scalar> Module<T> for WithHead<T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.encoder.body.visit(&join(p, "bert"), f);
        self.encoder.mlm.visit(&join(p, "cls.predictions"), f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        self.encoder.body.visit_mut(&join(p, "bert"), f);
        self.encoder.mlm.visit_mut(&join(p, "cls.predictions"), f);
    }
}

struct Prepared {
    ids: Vec<usize>,
    offset: usize,
    keys: Vec<String>,
}

fn mlm_loss<T: Scalar>(
    model: &WithHead<T>,
    seq: &Prepared,
    positions: &[usize],
    corrupted: &[usize],
) -> (T, Vec<Matrix<T>>) {
    let enc = &model.encoder;
    let mut g = Graph::new();
    let h = enc.forward_ids(&mut g, corrupted);
    let rows: Vec<usize> = positions.iter().map(|&p| p + seq.offset).collect();
    let picked = g.gather_rows(h, &rows);
    let head: &MlmHead<T> = &enc.mlm;
    let t = head.transform.forward(&mut g, picked);
    let t = g.gelu(t);
    let t = head.norm.forward(&mut g, t);
    let words = g.param(&enc.body.word_embeddings);
    let logits = g.matmul_t(t, words);
    let bias = g.param(&head.bias);
    let logits = g.add_row(logits, bias);
    let targets: Vec<usize> = rows.iter().map(|&r| seq.ids[r]).collect();
    let loss = g.cross_entropy(logits, &targets);
    g.backward(loss);
    (g.scalar(loss), collect_grads(&g, model))
}

/// Adapts `encoder` to `corpus` with the masked-LM objective.
///
/// Mask plans are drawn per (epoch, sequence) from `config.seed`; each masked
/// position becomes `[MASK]` with probability 0.8, a random ordinary token
/// with probability 0.1, and stays unchanged otherwise.
pub fn pretrain_mlm<T: Scalar>(
    encoder: &mut Encoder<T>,
    corpus: &[TokenizedText],
    config: &PretrainConfig,
    vocab: Option<&PmiVocabulary>,
) -> Result<PretrainLog> {
    contract!(encoder.trainable, "encoder {} is frozen", encoder.name);
    let mut prepared = Vec::new();
    for tokens in corpus {
        let enc = encoder.encode_ids(tokens)?;
        if enc.kept == 0 {
            continue;
        }
        let keys = tokens.tokens[..enc.kept].iter().map(|t| encoder.key(&t.text)).collect();
        prepared.push(Prepared {
            ids: enc.ids,
            offset: enc.offset,
            keys,
        });
    }
    contract!(!prepared.is_empty(), "pretraining corpus is empty");
    if config.masking.strategy == MaskStrategy::Pmi {
        contract!(vocab.is_some(), "PMI masking requires a vocabulary");
    }
    let mask_id = encoder.special_id(MASK);
    let first_ordinary = SPECIAL.len().min(encoder.vocab_size() - 1);
    let vocab_size = encoder.vocab_size();
    let mut model = WithHead {
        encoder: encoder.clone(),
    };
    let train = TrainConfig {
        batch_size: config.train.batch_size,
        learning_rate: config.train.learning_rate,
        seed: derive_seed(config.seed, &[u64::MAX]),
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&model, &train)?;
    let mut log = PretrainLog::default();
    for epoch in 1..=config.train.epochs {
        // Plans for this epoch, drawn up front so that the loss closure is pure.
        let mut plans = Vec::with_capacity(prepared.len());
        let mut masked = 0;
        let mut tokens = 0;
        for (i, seq) in prepared.iter().enumerate() {
            let s = derive_seed(config.seed, &[epoch as u64, i as u64]);
            let plan = select_masks(&seq.keys, config.masking.strategy, config.masking.ratio, vocab, s)?;
            let positions = plan.masked();
            let mut r = rng(derive_seed(s, &[1]));
            let mut corrupted = seq.ids.clone();
            for &p in &positions {
                let u: f64 = r.gen();
                if u < 0.8 {
                    corrupted[p + seq.offset] = mask_id;
                } else if u < 0.9 {
                    corrupted[p + seq.offset] = r.gen_range(first_ordinary..vocab_size);
                }
            }
            masked += positions.len();
            tokens += seq.keys.len();
            plans.push((positions, corrupted));
        }
        let active: Vec<usize> = (0..prepared.len()).filter(|&i| !plans[i].0.is_empty()).collect();
        if active.is_empty() {
            log.epochs.push(PretrainEpoch {
                epoch,
                loss: 0.0,
                masked,
                tokens,
            });
            continue;
        }
        let loss = trainer.epoch(&mut model, active.len(), epoch, &|m: &WithHead<T>, k: usize| {
            let i = active[k];
            Ok(mlm_loss(m, &prepared[i], &plans[i].0, &plans[i].1))
        })?;
        let total = loss * active.len() as f64;
        log.epochs.push(PretrainEpoch {
            epoch,
            loss: total / masked.max(1) as f64,
            masked,
            tokens,
        });
        log::info!("pretrain epoch {epoch}: masked-token loss {:.4}", total / masked.max(1) as f64);
    }
    *encoder = model.encoder;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::TinyConfig;
    use crate::tokenize::{Tokenizer, WhitespacePunct};

    #[test]
    fn masked_loss_drops_on_repeated_sentence() {
        let text = "die chipping due to dicing process condition in kerf area";
        let tokens = WhitespacePunct.tokenize_text(text);
        let mut enc = Encoder::<f32>::tiny(text.split(' '), TinyConfig::default(), 1).unwrap();
        let corpus = vec![tokens; 8];
        let config = PretrainConfig {
            masking: MaskingSection {
                strategy: MaskStrategy::Um,
                ratio: 0.3,
            },
            train: PretrainTrainSection {
                epochs: 50,
                learning_rate: 3e-3,
                batch_size: 8,
            },
            seed: 3,
            ..PretrainConfig::default()
        };
        let log = pretrain_mlm(&mut enc, &corpus, &config, None).unwrap();
        let first = log.epochs[0].loss;
        let last = log.epochs.last().unwrap().loss;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let mut enc = Encoder::<f32>::tiny(["a"], TinyConfig::default(), 1).unwrap();
        assert!(pretrain_mlm(&mut enc, &[], &PretrainConfig::default(), None).is_err());
    }
}

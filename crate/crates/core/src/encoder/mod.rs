//! Contextual token encoder (BERT-style transformer) and masked-LM adaptation.
//!
//! Two ways to obtain an encoder: [`Encoder::tiny`] builds a small randomly
//! initialised model over a word vocabulary, and [`Encoder::from_checkpoint`]
//! loads a pretrained bidirectional transformer from a directory holding
//! `config.json`, `vocab.txt` and `model.safetensors` in the usual BERT
//! naming. Both share one implementation and one on-disk format.

mod masking;
mod pretrain;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{contract, read_json, read_to_string, write_file, write_json, Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng;
use crate::tensor::{join, save_safetensors, Graph, LayerNorm, Linear, Matrix, Module, TensorFile, Var};
use crate::tokenize::{TokenizedText, WHITESPACE_ID};

pub use masking::{build_pmi_vocab, select_masks, MaskPlan, MaskSpan, MaskStrategy, PmiEntry, PmiVocabulary, SpanKind};
pub use pretrain::{pretrain_mlm, PretrainConfig, PretrainEpoch, PretrainLog};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
const SPECIAL: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

/// Default maximum sequence length, in tokens.
pub const MAX_LEN: usize = 256;

/// Name under which the tiny random encoder is requested.
pub const TINY: &str = "tiny";

/// Architecture and tokenizer settings of a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    pub vocab_size: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    /// Lowercase text before vocabulary lookup.
    #[serde(default = "default_true")]
    pub lowercase: bool,
    /// `ws` for word-level vocabularies; anything else means WordPiece.
    #[serde(default)]
    pub tokenizer: Option<String>,
    /// Wrap sequences in `[CLS]` … `[SEP]`.
    #[serde(default = "default_true")]
    pub special_tokens: bool,
}

fn default_ln_eps() -> f64 {
    1e-12
}

fn default_type_vocab() -> usize {
    2
}

fn default_true() -> bool {
    true
}

impl CheckpointConfig {
    /// Reads `config.json`; `do_lower_case` from `tokenizer_config.json` is
    /// honoured when the config itself does not say.
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("config.json");
        let raw: Value = read_json(&path)?;
        let mut config: CheckpointConfig =
            serde_json::from_value(raw.clone()).map_err(|e| Error::json(path.display().to_string(), e))?;
        if raw.get("lowercase").is_none() {
            let tk = dir.join("tokenizer_config.json");
            if tk.exists() {
                let t: Value = read_json(&tk)?;
                if let Some(lc) = t.get("do_lower_case").and_then(Value::as_bool) {
                    config.lowercase = lc;
                }
            }
        }
        if config.num_attention_heads == 0 || !config.hidden_size.is_multiple_of(config.num_attention_heads) {
            return Err(Error::Checkpoint(format!(
                "hidden size {} not divisible by {} heads",
                config.hidden_size, config.num_attention_heads
            )));
        }
        Ok(config)
    }

    fn is_word_level(&self) -> bool {
        self.tokenizer.as_deref() == Some(WHITESPACE_ID)
    }
}

/// Settings of the tiny random encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub intermediate: usize,
    pub max_len: usize,
}

impl Default for TinyConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            layers: 2,
            heads: 2,
            intermediate: 64,
            max_len: MAX_LEN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayer<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub attention_output: Linear<T>,
    pub attention_norm: LayerNorm<T>,
    pub intermediate: Linear<T>,
    pub output: Linear<T>,
    pub output_norm: LayerNorm<T>,
}

impl<T: Scalar> EncoderLayer<T> {
    fn new<R: Rng + ?Sized>(c: &CheckpointConfig, rng: &mut R) -> Self {
        let d = c.hidden_size;
        Self {
            query: Linear::new(d, d, rng),
            key: Linear::new(d, d, rng),
            value: Linear::new(d, d, rng),
            attention_output: Linear::new(d, d, rng),
            attention_norm: LayerNorm::new(d, c.layer_norm_eps),
            intermediate: Linear::new(d, c.intermediate_size, rng),
            output: Linear::new(c.intermediate_size, d, rng),
            output_norm: LayerNorm::new(d, c.layer_norm_eps),
        }
    }

    fn forward<'a>(&'a self, g: &mut Graph<'a, T>, x: Var, heads: usize) -> Var {
        let d = self.query.output_dim();
        let dh = d / heads;
        let q = self.query.forward(g, x);
        let k = self.key.forward(g, x);
        let v = self.value.forward(g, x);
        let scale = T::lit(1.0 / (dh as f64).sqrt());
        let mut context: Option<Var> = None;
        for h in 0..heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let scores = g.matmul_t(qh, kh);
            let scores = g.scale(scores, scale);
            let probs = g.softmax_rows(scores);
            let out = g.matmul(probs, vh);
            context = Some(match context {
                Some(c) => g.concat_cols(c, out),
                None => out,
            });
        }
        let attn = self.attention_output.forward(g, context.expect("at least one head"));
        let x = g.add(x, attn);
        let x = self.attention_norm.forward(g, x);
        let ff = self.intermediate.forward(g, x);
        let ff = g.gelu(ff);
        let ff = self.output.forward(g, ff);
        let x = g.add(x, ff);
        self.output_norm.forward(g, x)
    }
}

impl<T: Scalar> Module<T> for EncoderLayer<T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.query.visit(&join(p, "attention.self.query"), f);
        self.key.visit(&join(p, "attention.self.key"), f);
        self.value.visit(&join(p, "attention.self.value"), f);
        self.attention_output.visit(&join(p, "attention.output.dense"), f);
        self.attention_norm.visit(&join(p, "attention.output.LayerNorm"), f);
        self.intermediate.visit(&join(p, "intermediate.dense"), f);
        self.output.visit(&join(p, "output.dense"), f);
        self.output_norm.visit(&join(p, "output.LayerNorm"), f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        self.query.visit_mut(&join(p, "attention.self.query"), f);
        self.key.visit_mut(&join(p, "attention.self.key"), f);
        self.value.visit_mut(&join(p, "attention.self.value"), f);
        self.attention_output.visit_mut(&join(p, "attention.output.dense"), f);
        self.attention_norm.visit_mut(&join(p, "attention.output.LayerNorm"), f);
        self.intermediate.visit_mut(&join(p, "intermediate.dense"), f);
        self.output.visit_mut(&join(p, "output.dense"), f);
        self.output_norm.visit_mut(&join(p, "output.LayerNorm"), f);
    }
}

/// Embedding layer plus transformer stack.
#[derive(Debug, Clone)]
pub struct EncoderBody<T> {
    pub word_embeddings: Matrix<T>,
    pub position_embeddings: Matrix<T>,
    pub token_type_embeddings: Matrix<T>,
    pub embedding_norm: LayerNorm<T>,
    pub layers: Vec<EncoderLayer<T>>,
}

impl<T: Scalar> EncoderBody<T> {
    fn new<R: Rng + ?Sized>(c: &CheckpointConfig, embedding_std: f64, rng: &mut R) -> Self {
        let d = c.hidden_size;
        Self {
            word_embeddings: Matrix::randn(c.vocab_size, d, embedding_std, rng),
            position_embeddings: Matrix::randn(c.max_position_embeddings, d, embedding_std, rng),
            token_type_embeddings: Matrix::randn(c.type_vocab_size.max(1), d, embedding_std, rng),
            embedding_norm: LayerNorm::new(d, c.layer_norm_eps),
            layers: (0..c.num_hidden_layers).map(|_| EncoderLayer::new(c, rng)).collect(),
        }
    }
}

impl<T: Scalar> Module<T> for EncoderBody<T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        f(join(p, "embeddings.word_embeddings.weight"), &self.word_embeddings);
        f(join(p, "embeddings.position_embeddings.weight"), &self.position_embeddings);
        f(join(p, "embeddings.token_type_embeddings.weight"), &self.token_type_embeddings);
        self.embedding_norm.visit(&join(p, "embeddings.LayerNorm"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(p, &format!("encoder.layer.{i}")), f);
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        f(join(p, "embeddings.word_embeddings.weight"), &mut self.word_embeddings);
        f(join(p, "embeddings.position_embeddings.weight"), &mut self.position_embeddings);
        f(join(p, "embeddings.token_type_embeddings.weight"), &mut self.token_type_embeddings);
        self.embedding_norm.visit_mut(&join(p, "embeddings.LayerNorm"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(p, &format!("encoder.layer.{i}")), f);
        }
    }
}

/// Masked-LM prediction head; the output projection is tied to the word
/// embeddings.
#[derive(Debug, Clone)]
pub struct MlmHead<T> {
    pub transform: Linear<T>,
    pub norm: LayerNorm<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> MlmHead<T> {
    fn new<R: Rng + ?Sized>(c: &CheckpointConfig, rng: &mut R) -> Self {
        Self {
            transform: Linear::new(c.hidden_size, c.hidden_size, rng),
            norm: LayerNorm::new(c.hidden_size, c.layer_norm_eps),
            bias: Matrix::zeros(1, c.vocab_size),
        }
    }
}

impl<T: Scalar> Module<T> for MlmHead<T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.transform.visit(&join(p, "transform.dense"), f);
        self.norm.visit(&join(p, "transform.LayerNorm"), f);
        f(join(p, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        self.transform.visit_mut(&join(p, "transform.dense"), f);
        self.norm.visit_mut(&join(p, "transform.LayerNorm"), f);
        f(join(p, "bias"), &mut self.bias);
    }
}

/// Token ids of one sequence as fed to the transformer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedIds {
    pub ids: Vec<usize>,
    /// Row of the first real token (1 when `[CLS]` is prepended).
    pub offset: usize,
    /// Number of input tokens kept after truncation.
    pub kept: usize,
}

/// A trainable or frozen contextual token embedder.
#[derive(Debug, Clone)]
pub struct Encoder<T> {
    pub name: String,
    pub config: CheckpointConfig,
    pub tokenizer_id: String,
    pub trainable: bool,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    pub body: EncoderBody<T>,
    pub mlm: MlmHead<T>,
}

fn index_of(vocab: &[String]) -> HashMap<String, usize> {
    let mut index = HashMap::with_capacity(vocab.len());
    for (i, w) in vocab.iter().enumerate() {
        index.entry(w.clone()).or_insert(i);
    }
    index
}

impl<T: Scalar> Encoder<T> {
    /// Small random transformer over a word vocabulary (whitespace +
    /// punctuation tokens, lowercased). Words are taken in order of first
    /// appearance after sorting, so the vocabulary is deterministic.
    pub fn tiny<'w>(words: impl IntoIterator<Item = &'w str>, tiny: TinyConfig, seed: u64) -> Result<Self> {
        contract!(
            tiny.heads > 0 && tiny.dim.is_multiple_of(tiny.heads),
            "dimension {} not divisible by {} heads",
            tiny.dim,
            tiny.heads
        );
        let mut vocab: Vec<String> = SPECIAL.iter().map(|s| s.to_string()).collect();
        let mut words: Vec<String> = words.into_iter().map(str::to_lowercase).collect();
        words.sort();
        words.dedup();
        vocab.extend(words.into_iter().filter(|w| !SPECIAL.contains(&w.as_str())));
        let config = CheckpointConfig {
            hidden_size: tiny.dim,
            num_hidden_layers: tiny.layers,
            num_attention_heads: tiny.heads,
            intermediate_size: tiny.intermediate,
            max_position_embeddings: tiny.max_len,
            vocab_size: vocab.len(),
            layer_norm_eps: 1e-12,
            type_vocab_size: 2,
            lowercase: true,
            tokenizer: Some(WHITESPACE_ID.to_string()),
            special_tokens: false,
        };
        let mut r = rng(seed);
        let body = EncoderBody::new(&config, 0.5, &mut r);
        let mlm = MlmHead::new(&config, &mut r);
        Ok(Self {
            name: TINY.to_string(),
            tokenizer_id: WHITESPACE_ID.to_string(),
            trainable: true,
            index: index_of(&vocab),
            vocab,
            config,
            body,
            mlm,
        })
    }

    /// Loads a checkpoint directory. Tensor names may carry a `bert.` prefix
    /// and layer norms may use the older `gamma`/`beta` names. A missing
    /// masked-LM head is initialised randomly.
    pub fn from_checkpoint(dir: &Path) -> Result<Self> {
        let config = CheckpointConfig::read(dir)?;
        let vocab: Vec<String> = read_to_string(&dir.join("vocab.txt"))?
            .lines()
            .map(str::to_string)
            .collect();
        if vocab.len() != config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocab.txt has {} entries, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let tensors = TensorFile::<T>::read(&dir.join("model.safetensors"))?;
        let mut r = rng(0);
        let mut body = EncoderBody::new(&config, 0.02, &mut r);
        tensors.load_into(&mut body, |name| {
            let mut out = vec![format!("bert.{name}"), name.to_string()];
            for c in out.clone() {
                if let Some(s) = c.strip_suffix("LayerNorm.weight") {
                    out.push(format!("{s}LayerNorm.gamma"));
                }
                if let Some(s) = c.strip_suffix("LayerNorm.bias") {
                    out.push(format!("{s}LayerNorm.beta"));
                }
            }
            out
        })?;
        let mut mlm = MlmHead::new(&config, &mut r);
        let head = tensors.load_into(&mut mlm, |name| {
            let full = format!("cls.predictions.{name}");
            let mut out = vec![full.clone()];
            if let Some(s) = full.strip_suffix("LayerNorm.weight") {
                out.push(format!("{s}LayerNorm.gamma"));
            }
            if let Some(s) = full.strip_suffix("LayerNorm.bias") {
                out.push(format!("{s}LayerNorm.beta"));
            }
            out
        });
        if let Err(e) = head {
            log::warn!("masked-LM head not loaded ({e}); initialised randomly");
        }
        let tokenizer_id = if config.is_word_level() {
            WHITESPACE_ID.to_string()
        } else {
            format!("wordpiece:{}", dir.display())
        };
        Ok(Self {
            name: dir.display().to_string(),
            tokenizer_id,
            trainable: true,
            index: index_of(&vocab),
            vocab,
            config,
            body,
            mlm,
        })
    }

    /// `tiny` builds a fresh random encoder over `words`; any other name is
    /// a checkpoint directory.
    pub fn resolve<'w>(name: &str, words: impl IntoIterator<Item = &'w str>, seed: u64) -> Result<Self> {
        if name == TINY {
            Self::tiny(words, TinyConfig::default(), seed)
        } else {
            Self::from_checkpoint(Path::new(name))
        }
    }

    /// Writes `config.json`, `vocab.txt` and `model.safetensors`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("config.json"), &self.config)?;
        write_file(&dir.join("vocab.txt"), self.vocab.join("\n") + "\n")?;
        save_safetensors(&SavedEncoder(self), &dir.join("model.safetensors"))
    }

    pub fn dim(&self) -> usize {
        self.config.hidden_size
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub(crate) fn special_id(&self, token: &str) -> usize {
        self.token_id(token)
            .or_else(|| self.token_id(UNK))
            .unwrap_or(0)
    }

    /// Vocabulary key of a token text.
    pub fn key(&self, text: &str) -> String {
        if self.config.is_word_level() && self.config.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        }
    }

    /// Maximum number of input tokens, after room for special tokens.
    pub fn max_tokens(&self) -> usize {
        let reserve = if self.config.special_tokens { 2 } else { 0 };
        self.config.max_position_embeddings.saturating_sub(reserve)
    }

    /// Maps tokens to ids, truncating overlong input with a warning.
    pub fn encode_ids(&self, tokens: &TokenizedText) -> Result<EncodedIds> {
        contract!(
            tokens.tokenizer_id == self.tokenizer_id,
            "tokens from {:?} fed to an encoder expecting {:?}",
            tokens.tokenizer_id,
            self.tokenizer_id
        );
        let kept = tokens.len().min(self.max_tokens());
        if kept < tokens.len() {
            log::warn!("truncated sequence of {} tokens to {kept}", tokens.len());
        }
        let unk = self.special_id(UNK);
        let mut ids = Vec::with_capacity(kept + 2);
        if self.config.special_tokens {
            ids.push(self.special_id(CLS));
        }
        ids.extend(
            tokens.tokens[..kept]
                .iter()
                .map(|t| self.token_id(&self.key(&t.text)).unwrap_or(unk)),
        );
        if self.config.special_tokens {
            ids.push(self.special_id(SEP));
        }
        Ok(EncodedIds {
            ids,
            offset: usize::from(self.config.special_tokens),
            kept,
        })
    }

    /// Contextual states for every id, `len × d`.
    pub fn forward_ids<'a>(&'a self, g: &mut Graph<'a, T>, ids: &[usize]) -> Var {
        let n = ids.len();
        let words = g.param(&self.body.word_embeddings);
        let x = g.gather_rows(words, ids);
        let positions = g.param(&self.body.position_embeddings);
        let p = g.gather_rows(positions, &(0..n).collect::<Vec<_>>());
        let types = g.param(&self.body.token_type_embeddings);
        let t = g.gather_rows(types, &vec![0; n]);
        let x = g.add(x, p);
        let x = g.add(x, t);
        let mut x = self.body.embedding_norm.forward(g, x);
        for layer in &self.body.layers {
            x = layer.forward(g, x, self.config.num_attention_heads);
        }
        x
    }

    /// States of the kept input tokens only (special tokens dropped),
    /// `kept × d`.
    pub fn encode<'a>(&'a self, g: &mut Graph<'a, T>, enc: &EncodedIds) -> Var {
        let h = self.forward_ids(g, &enc.ids);
        if enc.offset == 0 && enc.ids.len() == enc.kept {
            h
        } else {
            let rows: Vec<usize> = (enc.offset..enc.offset + enc.kept).collect();
            g.gather_rows(h, &rows)
        }
    }

    /// Inference-mode embedding of a batch; one `tokens × d` matrix per
    /// sequence (truncated sequences yield fewer rows).
    pub fn embed(&self, batch: &[TokenizedText]) -> Result<Vec<Matrix<T>>> {
        batch
            .iter()
            .map(|tokens| {
                let enc = self.encode_ids(tokens)?;
                if enc.kept == 0 {
                    return Ok(Matrix::zeros(0, self.dim()));
                }
                let mut g = Graph::new();
                let h = self.encode(&mut g, &enc);
                Ok(g.value(h).clone())
            })
            .collect()
    }

    /// Number of matrices visited by the encoder body.
    pub fn matrix_count(&self) -> usize {
        let mut n = 0;
        self.body.visit("", &mut |_, _| n += 1);
        n
    }
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.body.visit(p, f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        self.body.visit_mut(p, f);
    }
}

/// Full checkpoint view: body under `bert.`, head under `cls.predictions.`.
struct SavedEncoder<'e, T>(&'e Encoder<T>);

impl<T: Scalar> Module<T> for SavedEncoder<'_, T> {
    fn visit<'s>(&'s self, p: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.0.body.visit(&join(p, "bert"), f);
        self.0.mlm.visit(&join(p, "cls.predictions"), f);
    }

    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(String, &mut Matrix<T>)) {
        unreachable!("read-only view")
    }
}

/// Path of the encoder checkpoint inside a model directory.
pub fn encoder_dir(model_dir: &Path) -> PathBuf {
    model_dir.join("encoder")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::{Tokenizer, WhitespacePunct};

    fn tiny() -> Encoder<f64> {
        Encoder::tiny(["die", "chipping", "due", "to", "dicing"], TinyConfig::default(), 3).unwrap()
    }

    #[test]
    fn shapes_follow_input_lengths() {
        let enc = tiny();
        assert!(enc.embed(&[]).unwrap().is_empty());
        let a = WhitespacePunct.tokenize_text("die chipping due to dicing");
        let b = WhitespacePunct.tokenize_text("die chipping due to dicing , due to dicing again");
        let out = enc.embed(&[a, b]).unwrap();
        assert_eq!(out[0].shape(), (5, 32));
        assert_eq!(out[1].shape(), (10, 32));
    }

    #[test]
    fn inference_is_deterministic() {
        let enc = tiny();
        let t = WhitespacePunct.tokenize_text("Die chipping due to dicing");
        assert_eq!(enc.embed(std::slice::from_ref(&t)).unwrap(), enc.embed(&[t]).unwrap());
    }

    #[test]
    fn unknown_words_map_to_unk_and_case_folds() {
        let enc = tiny();
        let t = WhitespacePunct.tokenize_text("DIE wobble");
        let ids = enc.encode_ids(&t).unwrap();
        assert_eq!(ids.ids[0], enc.token_id("die").unwrap());
        assert_eq!(ids.ids[1], enc.token_id(UNK).unwrap());
    }

    #[test]
    fn tokenizer_mismatch_is_rejected() {
        let enc = tiny();
        let mut t = WhitespacePunct.tokenize_text("die");
        t.tokenizer_id = "wordpiece:elsewhere".into();
        assert!(enc.encode_ids(&t).is_err());
    }

    #[test]
    fn long_input_is_truncated() {
        let mut cfg = TinyConfig::default();
        cfg.max_len = 4;
        let enc = Encoder::<f64>::tiny(["a"], cfg, 1).unwrap();
        let t = WhitespacePunct.tokenize_text("a a a a a a");
        let out = enc.embed(&[t]).unwrap();
        assert_eq!(out[0].rows(), 4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let enc = tiny();
        enc.save(dir.path()).unwrap();
        let back = Encoder::<f64>::from_checkpoint(dir.path()).unwrap();
        assert_eq!(back.tokenizer_id, WHITESPACE_ID);
        let t = WhitespacePunct.tokenize_text("die chipping due to dicing");
        assert_eq!(enc.embed(std::slice::from_ref(&t)).unwrap(), back.embed(&[t]).unwrap());
        assert_eq!(back.mlm.bias, enc.mlm.bias);
    }
}

//! Tokenizers with code-point offset alignment.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};

/// Identifier of the default whitespace + punctuation tokenizer.
pub const WHITESPACE_ID: &str = "ws";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Code point offsets, half-open.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub tokenizer_id: String,
    pub tokens: Vec<Token>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spans(&self) -> Vec<(usize, usize)> {
        self.tokens.iter().map(|t| (t.start, t.end)).collect()
    }
}

pub trait Tokenizer: Send + Sync {
    fn id(&self) -> &str;

    fn tokenize(&self, text: &str) -> Vec<Token>;

    fn tokenize_text(&self, text: &str) -> TokenizedText {
        TokenizedText {
            tokenizer_id: self.id().to_string(),
            tokens: self.tokenize(text),
        }
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on whitespace; alphanumeric runs become tokens and every other
/// visible character is a token of its own.
fn split_words(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            tokens.push(Token {
                end: start + current.chars().count(),
                text: std::mem::take(&mut current),
                start,
            });
        }
        if is_punct(c) {
            tokens.push(Token {
                text: c.to_string(),
                start: i,
                end: i + 1,
            });
        }
    }
    if !current.is_empty() {
        tokens.push(Token {
            end: start + current.chars().count(),
            text: current,
            start,
        });
    }
    tokens
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespacePunct;

impl Tokenizer for WhitespacePunct {
    fn id(&self) -> &str {
        WHITESPACE_ID
    }

    fn tokenize(&self, text: &str) -> Vec<Token> {
        split_words(text)
    }
}

/// Greedy longest-match-first subword tokenizer over a BERT-style
/// `vocab.txt`.
#[derive(Debug, Clone)]
pub struct WordPiece {
    id: String,
    vocab: HashMap<String, usize>,
    lowercase: bool,
    unk: String,
    max_word_chars: usize,
}

impl WordPiece {
    pub fn new(id: impl Into<String>, vocab: HashMap<String, usize>, lowercase: bool) -> Self {
        Self {
            id: id.into(),
            vocab,
            lowercase,
            unk: "[UNK]".to_string(),
            max_word_chars: 100,
        }
    }

    pub fn from_vocab_file(id: impl Into<String>, path: &Path, lowercase: bool) -> Result<Self> {
        let vocab = read_vocab(path)?;
        Ok(Self::new(id, vocab, lowercase))
    }

    pub fn vocab(&self) -> &HashMap<String, usize> {
        &self.vocab
    }
}

pub(crate) fn read_vocab(path: &Path) -> Result<HashMap<String, usize>> {
    let text = read_to_string(path)?;
    let vocab: HashMap<String, usize> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (l.to_string(), i))
        .collect();
    if vocab.is_empty() {
        return Err(Error::Checkpoint(format!("empty vocabulary {}", path.display())));
    }
    Ok(vocab)
}

impl Tokenizer for WordPiece {
    fn id(&self) -> &str {
        &self.id
    }

    fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut out = Vec::new();
        for word in split_words(text) {
            let normalized: Vec<char> = if self.lowercase {
                word.text.to_lowercase().chars().collect()
            } else {
                word.text.chars().collect()
            };
            // lowercasing may change the length; fall back to whole-word tokens
            let aligned = normalized.len() == word.end - word.start;
            if normalized.len() > self.max_word_chars || !aligned {
                out.push(Token {
                    text: if self.vocab.contains_key(&normalized.iter().collect::<String>()) {
                        normalized.iter().collect()
                    } else {
                        self.unk.clone()
                    },
                    start: word.start,
                    end: word.end,
                });
                continue;
            }
            let mut pieces = Vec::new();
            let mut begin = 0;
            let mut failed = false;
            while begin < normalized.len() {
                let mut end = normalized.len();
                let mut found = None;
                while begin < end {
                    let mut candidate: String = normalized[begin..end].iter().collect();
                    if begin > 0 {
                        candidate.insert_str(0, "##");
                    }
                    if self.vocab.contains_key(&candidate) {
                        found = Some(candidate);
                        break;
                    }
                    end -= 1;
                }
                match found {
                    Some(piece) => {
                        pieces.push(Token {
                            text: piece,
                            start: word.start + begin,
                            end: word.start + end,
                        });
                        begin = end;
                    }
                    None => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                out.push(Token {
                    text: self.unk.clone(),
                    start: word.start,
                    end: word.end,
                });
            } else {
                out.extend(pieces);
            }
        }
        out
    }
}

/// Resolves a tokenizer id: `ws`, or `wordpiece:<checkpoint dir>`.
pub fn resolve_tokenizer(id: &str) -> Result<Arc<dyn Tokenizer>> {
    if id == WHITESPACE_ID {
        return Ok(Arc::new(WhitespacePunct));
    }
    if let Some(dir) = id.strip_prefix("wordpiece:") {
        let dir = Path::new(dir);
        let config = crate::encoder::CheckpointConfig::read(dir)?;
        return Ok(Arc::new(WordPiece::from_vocab_file(
            id,
            &dir.join("vocab.txt"),
            config.lowercase,
        )?));
    }
    Err(Error::Config(format!("unknown tokenizer {id:?}")))
}

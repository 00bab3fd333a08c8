//! Tokenization, vocabulary, dialog-sequence encoding, and BLEU.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::worldgen::{Message, Role};

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("unknown dialog variant: {0}")]
    UnknownVariant(String),
    #[error("vocabulary io: {0}")]
    Io(#[from] std::io::Error),
}

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
/// start-of-message
pub const SOM: u32 = 2;
/// end-of-message
pub const EOM: u32 = 3;
pub const RESERVED: u32 = 4;

/// Lowercase, split on whitespace, detach punctuation into separate
/// tokens. An apostrophe starts a new token, so "i'm" becomes ["i","'m"].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_alphanumeric() {
                cur.push(ch);
            } else if ch == '\'' {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                cur.push(ch);
            } else {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Token table with fixed reserved ids 0..3 (PAD, UNK, SOM, EOM).
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from token streams, keeping every token seen (min frequency 1),
    /// ordered by first occurrence.
    pub fn build<'a>(token_streams: impl Iterator<Item = &'a str>) -> Self {
        let mut v = Vocabulary::default();
        for tok in token_streams {
            if !v.token_to_id.contains_key(tok) {
                let id = RESERVED + v.id_to_token.len() as u32;
                v.token_to_id.insert(tok.to_string(), id);
                v.id_to_token.push(tok.to_string());
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len() + RESERVED as usize
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        match id {
            PAD => "<pad>",
            UNK => "<unk>",
            SOM => "<som>",
            EOM => "<eom>",
            _ => self
                .id_to_token
                .get((id - RESERVED) as usize)
                .map(String::as_str)
                .unwrap_or("<unk>"),
        }
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// One token per line; line number = id − RESERVED.
    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for tok in &self.id_to_token {
            writeln!(f, "{tok}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut v = Vocabulary::default();
        for line in f.lines() {
            let tok = line?;
            if tok.is_empty() {
                continue;
            }
            let id = RESERVED + v.id_to_token.len() as u32;
            v.token_to_id.insert(tok.clone(), id);
            v.id_to_token.push(tok);
        }
        Ok(v)
    }
}

/// How much of the dialog the encoder sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DialogVariant {
    Full,
    FirstHalf,
    SecondHalf,
    ObserverOnly,
    LocatorOnly,
    Shuffled(u64),
}

impl DialogVariant {
    pub fn parse(name: &str, seed: u64) -> Result<Self, TextError> {
        Ok(match name {
            "full" => Self::Full,
            "first_half" => Self::FirstHalf,
            "second_half" => Self::SecondHalf,
            "observer_only" => Self::ObserverOnly,
            "locator_only" => Self::LocatorOnly,
            "shuffled" => Self::Shuffled(seed),
            other => return Err(TextError::UnknownVariant(other.to_string())),
        })
    }
}

/// Encoded dialog: one flat id sequence with per-message role spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    /// (role, start, end) per message span, end exclusive; spans include
    /// the SOM/EOM wrappers.
    pub spans: Vec<(Role, usize, usize)>,
}

impl TokenSeq {
    pub fn is_degenerate(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Concatenate the selected messages in order, each wrapped SOM…EOM.
/// Halves split whole Locator-Observer rounds at ceil(rounds/2);
/// shuffling permutes whole rounds, preserving within-round order.
/// An ablation that empties the dialog yields a single SOM EOM pair.
pub fn encode_dialog(dialog: &[Message], vocab: &Vocabulary, variant: DialogVariant) -> TokenSeq {
    // group into rounds: each round starts at a Locator message
    let mut rounds: Vec<Vec<&Message>> = Vec::new();
    for m in dialog {
        if m.role == Role::Locator || rounds.is_empty() {
            rounds.push(Vec::new());
        }
        rounds.last_mut().unwrap().push(m);
    }

    let selected: Vec<&Message> = match variant {
        DialogVariant::Full => dialog.iter().collect(),
        DialogVariant::FirstHalf => {
            let keep = rounds.len().div_ceil(2);
            rounds[..keep].iter().flatten().copied().collect()
        }
        DialogVariant::SecondHalf => {
            let skip = rounds.len().div_ceil(2);
            rounds[skip..].iter().flatten().copied().collect()
        }
        DialogVariant::ObserverOnly => {
            dialog.iter().filter(|m| m.role == Role::Observer).collect()
        }
        DialogVariant::LocatorOnly => {
            dialog.iter().filter(|m| m.role == Role::Locator).collect()
        }
        DialogVariant::Shuffled(seed) => {
            let mut order: Vec<usize> = (0..rounds.len()).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            order.into_iter().flat_map(|i| rounds[i].clone()).collect()
        }
    };

    let mut ids = Vec::new();
    let mut spans = Vec::new();
    for m in &selected {
        let start = ids.len();
        ids.push(SOM);
        for tok in tokenize(&m.text) {
            ids.push(vocab.id(&tok));
        }
        ids.push(EOM);
        spans.push((m.role, start, ids.len()));
    }
    if ids.is_empty() {
        ids = vec![SOM, EOM];
    }
    TokenSeq { ids, spans }
}

/// BLEU with modified n-gram precisions (add-one smoothing for n ≥ 2)
/// and brevity penalty. Returns a score in [0,1].
pub fn bleu(candidate: &[String], reference: &[String], max_n: usize) -> f64 {
    assert!(!reference.is_empty(), "bleu: empty reference");
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand_total = candidate.len().saturating_sub(n - 1);
        let ref_counts = ngram_counts(reference, n);
        let mut matched = 0usize;
        let mut cand_counts: BTreeMap<&[String], usize> = BTreeMap::new();
        for i in 0..cand_total {
            *cand_counts.entry(&candidate[i..i + n]).or_default() += 1;
        }
        for (gram, c) in &cand_counts {
            let r = ref_counts.get(*gram).copied().unwrap_or(0);
            matched += (*c).min(r);
        }
        let (num, den) = if n == 1 {
            (matched as f64, cand_total as f64)
        } else {
            (matched as f64 + 1.0, cand_total as f64 + 1.0)
        };
        if num == 0.0 || den == 0.0 {
            return 0.0;
        }
        log_sum += (num / den).ln();
    }
    let precision = (log_sum / max_n as f64).exp();
    let bp = if candidate.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    };
    (precision * bp).clamp(0.0, 1.0)
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *counts.entry(&tokens[i..i + n]).or_default() += 1;
        }
    }
    counts
}

/// A dialog flattened to a token list, used by the heuristic baseline's
/// nearest-neighbor search over whole dialogs.
pub fn dialog_tokens(dialog: &[Message]) -> Vec<String> {
    dialog.iter().flat_map(|m| tokenize(&m.text)).collect()
}

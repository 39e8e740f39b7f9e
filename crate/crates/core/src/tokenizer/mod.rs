//! Byte-pair encoding over trajectory characters.
//!
//! Grammar characters and special tokens are protected: each is one token,
//! never merged, and splits the text into words that merges cannot cross.
//! All other symbols are single code points, so merging characters is the
//! same as merging their bytes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::codec::{LevelAlphabet, GRAMMAR_CHARS};
use crate::corpus::SpecialToken;

pub const VOCAB_HEADER: &str = "#trajlang-bpe v1";
pub const DEFAULT_VOCAB_SIZE: usize = 8192;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("target vocabulary {target} is below the base size {base}")]
    TargetTooSmall { target: usize, base: usize },
    #[error("symbol {0:?} is not in the base vocabulary")]
    UnknownSymbol(char),
    #[error("token id {0} out of range")]
    UnknownId(u32),
    #[error("vocabulary file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The protected tokens in id order: grammar characters, then specials.
pub fn protected_tokens() -> Vec<String> {
    GRAMMAR_CHARS.iter().map(|c| c.to_string()).chain(SpecialToken::ALL.iter().map(|t| t.as_str().to_string())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece<'a> {
    Protected(&'a str),
    Word(&'a str),
}

/// Splits text into protected tokens and the words between them.
fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut word_start = 0;
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let c = rest.chars().next().expect("non-empty");
        let len = if GRAMMAR_CHARS.contains(&c) {
            Some(c.len_utf8())
        } else if c == '[' {
            SpecialToken::match_prefix(rest).map(|t| t.as_str().len())
        } else {
            None
        };
        match len {
            Some(n) => {
                if word_start < i {
                    out.push(Piece::Word(&text[word_start..i]));
                }
                out.push(Piece::Protected(&text[i..i + n]));
                i += n;
                word_start = i;
            }
            None => i += c.len_utf8(),
        }
    }
    if word_start < text.len() {
        out.push(Piece::Word(&text[word_start..]));
    }
    out
}

/// Trained vocabulary: protected tokens, base symbols and ordered merges.
#[derive(Debug, Clone)]
pub struct BpeVocab {
    tokens: Vec<String>,
    n_protected: usize,
    n_base: usize,
    merges: Vec<(u32, u32)>,
    index: HashMap<String, u32>,
    ranks: HashMap<(u32, u32), u32>,
}

impl PartialEq for BpeVocab {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.n_protected == other.n_protected && self.merges == other.merges
    }
}

impl BpeVocab {
    /// Vocabulary with no merges over the protected tokens and `symbols`.
    pub fn base(symbols: &[char]) -> Self {
        let protected = protected_tokens();
        let n_protected = protected.len();
        let mut tokens = protected;
        let mut seen: HashSet<char> = HashSet::new();
        for &c in symbols {
            if seen.insert(c) && !GRAMMAR_CHARS.contains(&c) {
                tokens.push(c.to_string());
            }
        }
        let n_base = tokens.len();
        let mut v = Self { tokens, n_protected, n_base, merges: Vec::new(), index: HashMap::new(), ranks: HashMap::new() };
        v.reindex();
        v
    }

    pub fn from_alphabet(alphabet: &LevelAlphabet) -> Self {
        Self::base(&alphabet.symbols())
    }

    fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        self.ranks = self.merges.iter().enumerate().map(|(r, &p)| (p, r as u32)).collect();
    }

    fn push_merge(&mut self, pair: (u32, u32)) -> u32 {
        let id = self.tokens.len() as u32;
        let surface = format!("{}{}", self.tokens[pair.0 as usize], self.tokens[pair.1 as usize]);
        self.index.insert(surface.clone(), id);
        self.tokens.push(surface);
        self.ranks.insert(pair, self.merges.len() as u32);
        self.merges.push(pair);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn base_size(&self) -> usize {
        self.n_base
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn is_protected(&self, id: u32) -> bool {
        (id as usize) < self.n_protected
    }

    pub fn surface(&self, id: u32) -> Result<&str, TokenizerError> {
        self.tokens.get(id as usize).map(String::as_str).ok_or(TokenizerError::UnknownId(id))
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) -> Result<(), TokenizerError> {
        let mut ids: Vec<u32> = word
            .chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                let id = self.index.get(c.encode_utf8(&mut buf) as &str).copied();
                match id {
                    Some(id) if !self.is_protected(id) => Ok(id),
                    _ => Err(TokenizerError::UnknownSymbol(c)),
                }
            })
            .collect::<Result<_, _>>()?;
        // Apply the lowest-ranked applicable merge until none applies; this
        // replays merges in training order.
        loop {
            let best = ids
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0], w[1])).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let pair = self.merges[rank as usize];
            let new_id = (self.n_base + rank as usize) as u32;
            let mut merged = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && (ids[i], ids[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(ids[i]);
                    i += 1;
                }
            }
            ids = merged;
        }
        out.extend(ids);
        Ok(())
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        let mut out = Vec::with_capacity(text.len() / 2);
        for piece in pieces(text) {
            match piece {
                Piece::Protected(t) => out.push(self.index[t]),
                Piece::Word(w) => self.encode_word(w, &mut out)?,
            }
        }
        Ok(out)
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut s = String::new();
        for &id in ids {
            s.push_str(self.surface(id)?);
        }
        Ok(s)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{VOCAB_HEADER}")?;
        writeln!(w, "[protected]")?;
        for t in &self.tokens[..self.n_protected] {
            writeln!(w, "{t}")?;
        }
        writeln!(w, "[base]")?;
        for t in &self.tokens[self.n_protected..self.n_base] {
            writeln!(w, "{:04X}", t.chars().next().expect("base symbols are single characters") as u32)?;
        }
        writeln!(w, "[merges]")?;
        for &(a, b) in &self.merges {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, TokenizerError> {
        let bad = |m: String| TokenizerError::Format(m);
        let mut lines = r.lines();
        if lines.next().transpose()?.as_deref() != Some(VOCAB_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut section = "";
        let mut protected = Vec::new();
        let mut base = Vec::new();
        let mut merges = Vec::new();
        for line in lines {
            let line = line?;
            match line.as_str() {
                "[protected]" | "[base]" | "[merges]" => {
                    section = match line.as_str() {
                        "[protected]" => "protected",
                        "[base]" => "base",
                        _ => "merges",
                    };
                    continue;
                }
                "" => continue,
                _ => {}
            }
            match section {
                "protected" => protected.push(line),
                "base" => {
                    let c = u32::from_str_radix(&line, 16).ok().and_then(char::from_u32);
                    base.push(c.ok_or_else(|| bad(format!("base symbol {line:?}")))?);
                }
                "merges" => {
                    let mut it = line.split(' ').map(str::parse::<u32>);
                    match (it.next(), it.next(), it.next()) {
                        (Some(Ok(a)), Some(Ok(b)), None) => merges.push((a, b)),
                        _ => return Err(bad(format!("merge {line:?}"))),
                    }
                }
                _ => return Err(bad("content before first section".into())),
            }
        }
        if protected != protected_tokens() {
            return Err(bad("protected token list differs from this build".into()));
        }
        let mut v = Self::base(&base);
        for (i, &(a, b)) in merges.iter().enumerate() {
            let limit = v.len() as u32;
            if a >= limit || b >= limit || v.is_protected(a) || v.is_protected(b) {
                return Err(bad(format!("merge {i} refers to unavailable tokens")));
            }
            v.push_merge((a, b));
        }
        Ok(v)
    }
}

type PairKey = (u32, u32);

struct HeapEntry {
    count: i64,
    /// Surfaces of the pair, compared reversed so that the smallest wins ties.
    key: Reverse<(String, String)>,
    pair: PairKey,
}

impl PartialEq for HeapEntry {
    fn eq(&self, o: &Self) -> bool {
        self.count == o.count && self.key == o.key
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.count.cmp(&o.count).then_with(|| self.key.cmp(&o.key))
    }
}

/// Learns merges greedily by pair frequency until the vocabulary reaches
/// `target` or no pair occurs at least twice. Ties go to the pair whose
/// (left, right) surfaces sort first.
pub fn train_bpe<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    target: usize,
    symbols: &[char],
) -> Result<BpeVocab, TokenizerError> {
    let mut vocab = BpeVocab::base(symbols);
    if target < vocab.len() {
        return Err(TokenizerError::TargetTooSmall { target, base: vocab.len() });
    }
    let mut word_counts: HashMap<&str, i64> = HashMap::new();
    for line in lines {
        for p in pieces(line) {
            if let Piece::Word(w) = p {
                *word_counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut sorted: Vec<(&str, i64)> = word_counts.into_iter().collect();
    sorted.sort_unstable();
    let mut words: Vec<Vec<u32>> = Vec::with_capacity(sorted.len());
    let mut freq: Vec<i64> = Vec::with_capacity(sorted.len());
    for (w, n) in sorted {
        let mut ids = Vec::new();
        vocab.encode_word(w, &mut ids)?;
        words.push(ids);
        freq.push(n);
    }

    let mut counts: HashMap<PairKey, i64> = HashMap::new();
    let mut occurs: HashMap<PairKey, HashSet<usize>> = HashMap::new();
    for (wi, w) in words.iter().enumerate() {
        for p in w.windows(2) {
            let k = (p[0], p[1]);
            *counts.entry(k).or_default() += freq[wi];
            occurs.entry(k).or_default().insert(wi);
        }
    }
    let entry = |v: &BpeVocab, pair: PairKey, count: i64| HeapEntry {
        count,
        key: Reverse((v.tokens[pair.0 as usize].clone(), v.tokens[pair.1 as usize].clone())),
        pair,
    };
    let mut heap: BinaryHeap<HeapEntry> = counts.iter().map(|(&p, &c)| entry(&vocab, p, c)).collect();

    while vocab.len() < target {
        let Some(top) = heap.pop() else { break };
        let current = counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            // Stale entry; the fresh count was pushed when it changed.
            continue;
        }
        if current < 2 {
            break;
        }
        let pair = top.pair;
        let new_id = vocab.push_merge(pair);
        let mut touched: HashSet<PairKey> = HashSet::new();
        let mut affected: Vec<usize> = occurs.remove(&pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        for wi in affected {
            let old = std::mem::take(&mut words[wi]);
            let f = freq[wi];
            for p in old.windows(2) {
                let k = (p[0], p[1]);
                *counts.get_mut(&k).expect("counted") -= f;
                touched.insert(k);
            }
            let mut merged = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(old[i]);
                    i += 1;
                }
            }
            for p in old.windows(2) {
                let k = (p[0], p[1]);
                if let Some(set) = occurs.get_mut(&k) {
                    set.remove(&wi);
                }
            }
            for p in merged.windows(2) {
                let k = (p[0], p[1]);
                *counts.entry(k).or_default() += f;
                occurs.entry(k).or_default().insert(wi);
                touched.insert(k);
            }
            words[wi] = merged;
        }
        counts.remove(&pair);
        let mut touched: Vec<PairKey> = touched.into_iter().collect();
        touched.sort_unstable();
        for k in touched {
            match counts.get(&k).copied() {
                Some(c) if c > 0 => heap.push(entry(&vocab, k, c)),
                _ => {
                    counts.remove(&k);
                    occurs.remove(&k);
                }
            }
        }
    }
    Ok(vocab)
}

//! Interpolated modified Kneser-Ney n-gram language model.
//!
//! Sentences are padded as `<s> w1 .. wn </s>`. The highest order uses raw
//! counts; lower orders use continuation counts (number of distinct left
//! extensions), except n-grams that begin with `<s>`, which keep raw counts
//! because nothing can precede them. Each order has three discounts
//! (for adjusted counts 1, 2 and 3+) estimated from counts-of-counts.
//!
//! Probabilities are natural-log internally; perplexity does not depend on
//! the base.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::normalize::normalize_for_lm;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const DEFAULT_ORDER: usize = 5;
/// Discount used at an order whose counts-of-counts cannot support estimation.
pub const FALLBACK_DISCOUNT: f64 = 0.75;

const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;
const EOS_ID: u32 = 2;
const ID_BITS: u32 = 24;
const MAX_ORDER: usize = 5;
const MAGIC: &[u8; 4] = b"CPKN";
const FILE_VERSION: u32 = 1;

/// Packs up to five 24-bit ids; numeric order equals lexicographic id order
/// for keys of the same length.
fn pack(ids: &[u32]) -> u128 {
    ids.iter()
        .fold(0u128, |acc, &id| (acc << ID_BITS) | u128::from(id))
}

fn unpack(key: u128, len: usize) -> Vec<u32> {
    let mask = (1u128 << ID_BITS) - 1;
    (0..len)
        .rev()
        .map(|i| ((key >> (ID_BITS as usize * i)) & mask) as u32)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut v = Vocab {
            words: Vec::new(),
            ids: HashMap::new(),
        };
        for w in [UNK, BOS, EOS] {
            v.intern(w);
        }
        v
    }
}

impl Vocab {
    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(w.to_string());
        self.ids.insert(w.to_string(), id);
        id
    }

    /// Id of `w`, or the `<unk>` id.
    pub fn id(&self, w: &str) -> u32 {
        self.ids.get(w).copied().unwrap_or(UNK_ID)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    /// Every token a model can predict: the vocabulary minus `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = &str> {
        self.words
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as u32 != BOS_ID)
            .map(|(_, w)| w.as_str())
    }
}

/// Raw n-gram counts for orders 1..=order.
#[derive(Debug, Clone)]
pub struct NgramCounts {
    order: usize,
    vocab: Vocab,
    /// `tables[k - 1]` holds k-gram counts.
    tables: Vec<HashMap<u128, u64>>,
    tokens: u64,
}

impl NgramCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Number of word tokens seen (excluding sentence markers).
    pub fn tokens(&self) -> u64 {
        self.tokens
    }

    pub fn count(&self, ngram: &[&str]) -> u64 {
        if ngram.is_empty() || ngram.len() > self.order {
            return 0;
        }
        let ids: Vec<u32> = ngram.iter().map(|w| self.vocab.id(w)).collect();
        self.tables[ngram.len() - 1]
            .get(&pack(&ids))
            .copied()
            .unwrap_or(0)
    }
}

/// Counts all 1..=`order`-grams of `<s>`-/`</s>`-padded sentences.
/// Empty sentences are skipped.
pub fn count_ngrams<S: AsRef<str>>(sentences: &[Vec<S>], order: usize) -> Result<NgramCounts> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    let mut vocab = Vocab::default();
    let mut tables = vec![HashMap::new(); order];
    let mut tokens = 0u64;
    let mut ids = Vec::new();
    for sentence in sentences.iter().filter(|s| !s.is_empty()) {
        ids.clear();
        ids.push(BOS_ID);
        for w in sentence {
            let w = w.as_ref();
            if w == BOS || w == EOS {
                return Err(Error::InvalidArgument(format!(
                    "reserved token {w} in input"
                )));
            }
            ids.push(vocab.intern(w));
            if vocab.len() >= 1 << ID_BITS {
                return Err(Error::Training("vocabulary exceeds 2^24 types".into()));
            }
        }
        ids.push(EOS_ID);
        tokens += sentence.len() as u64;
        for end in 1..=ids.len() {
            for k in 1..=order.min(end) {
                *tables[k - 1].entry(pack(&ids[end - k..end])).or_insert(0) += 1;
            }
        }
    }
    if tokens == 0 {
        return Err(Error::Training("empty token stream".into()));
    }
    Ok(NgramCounts {
        order,
        vocab,
        tables,
        tokens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    /// D1, D2, D3+.
    pub d: [f64; 3],
    /// True when counts-of-counts were degenerate and the fixed discount was used.
    pub fallback: bool,
}

impl Discounts {
    fn for_count(&self, c: u64) -> f64 {
        match c {
            0 => 0.0,
            1 => self.d[0],
            2 => self.d[1],
            _ => self.d[2],
        }
    }

    /// Estimates from counts-of-counts `n[j]` = number of n-grams with adjusted count j (j = 1..=4).
    pub fn estimate(n: [u64; 5]) -> Discounts {
        let [_, n1, n2, n3, n4] = n.map(|x| x as f64);
        if n1 == 0.0 || n2 == 0.0 || n3 == 0.0 {
            return Discounts {
                d: [FALLBACK_DISCOUNT; 3],
                fallback: true,
            };
        }
        let y = n1 / (n1 + 2.0 * n2);
        let raw = [
            1.0 - 2.0 * y * n2 / n1,
            2.0 - 3.0 * y * n3 / n2,
            3.0 - 4.0 * y * n4 / n3,
        ];
        let mut d = [0.0; 3];
        for (j, (slot, v)) in d.iter_mut().zip(raw).enumerate() {
            let cap = (j + 1) as f64 - 1e-6;
            *slot = if v.is_finite() {
                v.clamp(0.0, cap)
            } else {
                FALLBACK_DISCOUNT
            };
        }
        Discounts { d, fallback: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ContextStats {
    total: u64,
    /// Number of continuations with adjusted count 1, 2, 3+.
    n: [u64; 3],
}

/// A trained model: adjusted counts and discounts per order.
#[derive(Debug, Clone)]
pub struct KnModel {
    order: usize,
    vocab: Vocab,
    /// `adjusted[k - 1]`: k-gram → adjusted count (raw at the top order).
    adjusted: Vec<HashMap<u128, u64>>,
    discounts: Vec<Discounts>,
    /// `contexts[k - 1]`: (k-1)-gram context → stats over its k-gram continuations.
    contexts: Vec<HashMap<u128, ContextStats>>,
    /// |vocabulary| minus `<s>`.
    predictable: usize,
}

pub fn train_kneser_ney(counts: &NgramCounts) -> Result<KnModel> {
    let order = counts.order;
    let mut adjusted: Vec<HashMap<u128, u64>> = Vec::with_capacity(order);
    for k in 1..=order {
        let raw = &counts.tables[k - 1];
        if k == order {
            adjusted.push(raw.clone());
            continue;
        }
        let mut left_ext: HashMap<u128, u64> = HashMap::new();
        let suffix_mask = (1u128 << (ID_BITS as usize * k)) - 1;
        for &key in counts.tables[k].keys() {
            *left_ext.entry(key & suffix_mask).or_insert(0) += 1;
        }
        let shift = ID_BITS as usize * (k - 1);
        let table = raw
            .iter()
            .filter(|(&key, _)| !(k == 1 && key == u128::from(BOS_ID)))
            .map(|(&key, &c)| {
                let first = (key >> shift) as u32;
                let a = if first == BOS_ID {
                    c
                } else {
                    left_ext.get(&key).copied().unwrap_or(c)
                };
                (key, a)
            })
            .collect();
        adjusted.push(table);
    }
    let discounts = adjusted
        .iter()
        .map(|table| {
            let mut n = [0u64; 5];
            for &a in table.values() {
                if (1..=4).contains(&a) {
                    n[a as usize] += 1;
                }
            }
            Discounts::estimate(n)
        })
        .collect();
    let mut model = KnModel {
        order,
        vocab: counts.vocab.clone(),
        adjusted,
        discounts,
        contexts: Vec::new(),
        predictable: counts.vocab.len() - 1,
    };
    model.build_contexts();
    Ok(model)
}

impl KnModel {
    fn build_contexts(&mut self) {
        self.contexts = self
            .adjusted
            .iter()
            .enumerate()
            .map(|(i, table)| {
                let ctx_shift = ID_BITS as usize;
                let mut ctx: HashMap<u128, ContextStats> = HashMap::new();
                for (&key, &a) in table {
                    let h = if i == 0 { 0 } else { key >> ctx_shift };
                    let s = ctx.entry(h).or_default();
                    s.total += a;
                    match a {
                        0 => {}
                        1 => s.n[0] += 1,
                        2 => s.n[1] += 1,
                        _ => s.n[2] += 1,
                    }
                }
                ctx
            })
            .collect();
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Discounts for n-grams of length `k` (1-based).
    pub fn discounts(&self, k: usize) -> Discounts {
        self.discounts[k - 1]
    }

    fn ids(&self, words: &[&str]) -> Vec<u32> {
        words.iter().map(|w| self.vocab.id(w)).collect()
    }

    /// P(word | context) on ids. `context` is truncated to the last `order - 1` ids.
    fn prob_ids(&self, context: &[u32], word: u32) -> f64 {
        let context = &context[context.len().saturating_sub(self.order - 1)..];
        // Lowest order: interpolate with the uniform distribution.
        let mut p = 1.0 / self.predictable as f64;
        let mut key = Vec::with_capacity(context.len() + 1);
        for k in 1..=context.len() + 1 {
            let h = &context[context.len() + 1 - k..];
            let stats = if k == 1 {
                self.contexts[0].get(&0)
            } else {
                self.contexts[k - 1].get(&pack(h))
            };
            let Some(stats) = stats.filter(|s| s.total > 0) else {
                // Unseen context: pass the lower-order estimate through.
                continue;
            };
            key.clear();
            key.extend_from_slice(h);
            key.push(word);
            let a = self.adjusted[k - 1].get(&pack(&key)).copied().unwrap_or(0);
            let disc = self.discounts[k - 1];
            let total = stats.total as f64;
            let gamma = (disc.d[0] * stats.n[0] as f64
                + disc.d[1] * stats.n[1] as f64
                + disc.d[2] * stats.n[2] as f64)
                / total;
            p = (a as f64 - disc.for_count(a)).max(0.0) / total + gamma * p;
        }
        p
    }

    /// Natural-log probability of `word` after `context`. Unknown words map to `<unk>`.
    pub fn log_prob(&self, context: &[&str], word: &str) -> f64 {
        self.prob_ids(&self.ids(context), self.vocab.id(word)).ln()
    }

    pub fn log10_prob(&self, context: &[&str], word: &str) -> f64 {
        self.prob_ids(&self.ids(context), self.vocab.id(word))
            .log10()
    }

    /// Interpolation weight γ(context) at the order of `context.len() + 1`;
    /// 1.0 when the context was never seen.
    pub fn backoff_weight(&self, context: &[&str]) -> f64 {
        let ids = self.ids(context);
        let k = ids.len() + 1;
        if k > self.order {
            return self.backoff_weight(&context[1..]);
        }
        let key = if k == 1 { 0 } else { pack(&ids) };
        match self.contexts[k - 1].get(&key).filter(|s| s.total > 0) {
            None => 1.0,
            Some(s) => {
                let d = self.discounts[k - 1].d;
                (d[0] * s.n[0] as f64 + d[1] * s.n[1] as f64 + d[2] * s.n[2] as f64)
                    / s.total as f64
            }
        }
    }

    /// Contexts (as words) with at least one continuation at n-gram length `k`.
    pub fn contexts_at(&self, k: usize) -> Vec<Vec<String>> {
        let mut keys: Vec<u128> = self.contexts[k - 1].keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter()
            .map(|key| {
                unpack(key, k - 1)
                    .into_iter()
                    .map(|id| self.vocab.word(id).to_string())
                    .collect()
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FILE_VERSION)?;
        w.write_u32::<LittleEndian>(self.order as u32)?;
        w.write_u32::<LittleEndian>(self.vocab.len() as u32)?;
        for word in &self.vocab.words {
            w.write_u32::<LittleEndian>(word.len() as u32)?;
            w.write_all(word.as_bytes())?;
        }
        for d in &self.discounts {
            for v in d.d {
                w.write_f64::<LittleEndian>(v)?;
            }
            w.write_u8(u8::from(d.fallback))?;
        }
        for (i, table) in self.adjusted.iter().enumerate() {
            let sorted: BTreeMap<u128, u64> = table.iter().map(|(&k, &v)| (k, v)).collect();
            w.write_u64::<LittleEndian>(sorted.len() as u64)?;
            for (key, a) in sorted {
                for id in unpack(key, i + 1) {
                    w.write_u32::<LittleEndian>(id)?;
                }
                w.write_u64::<LittleEndian>(a)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
            .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))
    }

    fn read_from<R: Read>(r: &mut R) -> std::io::Result<Self> {
        use std::io::{Error as IoError, ErrorKind};
        let bad = |m: String| IoError::new(ErrorKind::InvalidData, m);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a Kneser-Ney model file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FILE_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let order = r.read_u32::<LittleEndian>()? as usize;
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(bad(format!("bad order {order}")));
        }
        let n_words = r.read_u32::<LittleEndian>()? as usize;
        let mut vocab = Vocab {
            words: Vec::with_capacity(n_words),
            ids: HashMap::with_capacity(n_words),
        };
        for _ in 0..n_words {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            let word = String::from_utf8(buf).map_err(|e| bad(e.to_string()))?;
            vocab.intern(&word);
        }
        if vocab.len() != n_words || n_words < 3 || vocab.word(BOS_ID) != BOS {
            return Err(bad("corrupt vocabulary".into()));
        }
        let mut discounts = Vec::with_capacity(order);
        for _ in 0..order {
            let mut d = [0.0; 3];
            for v in &mut d {
                *v = r.read_f64::<LittleEndian>()?;
            }
            discounts.push(Discounts {
                d,
                fallback: r.read_u8()? != 0,
            });
        }
        let mut adjusted = Vec::with_capacity(order);
        for k in 1..=order {
            let n = r.read_u64::<LittleEndian>()? as usize;
            let mut table = HashMap::with_capacity(n);
            let mut ids = vec![0u32; k];
            for _ in 0..n {
                for id in &mut ids {
                    *id = r.read_u32::<LittleEndian>()?;
                    if *id as usize >= n_words {
                        return Err(bad(format!("token id {id} out of range")));
                    }
                }
                table.insert(pack(&ids), r.read_u64::<LittleEndian>()?);
            }
            adjusted.push(table);
        }
        let mut model = KnModel {
            order,
            vocab,
            adjusted,
            discounts,
            contexts: Vec::new(),
            predictable: n_words - 1,
        };
        model.build_contexts();
        Ok(model)
    }
}

/// Anything that assigns conditional token probabilities.
pub trait LanguageModel {
    fn order(&self) -> usize;
    fn log_prob(&self, context: &[&str], word: &str) -> f64;
}

impl LanguageModel for KnModel {
    fn order(&self) -> usize {
        self.order
    }

    fn log_prob(&self, context: &[&str], word: &str) -> f64 {
        KnModel::log_prob(self, context, word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityScore {
    pub value: f64,
    pub token_count: usize,
}

/// Sentences for scoring/training: one per line, LM-normalized, empty lines dropped.
pub fn lm_sentences(text: &str) -> Vec<Vec<String>> {
    text.split('\n')
        .map(normalize_for_lm)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Perplexity over every token plus `</s>` of each sentence (`<s>` not counted).
pub fn perplexity<M: LanguageModel>(model: &M, text: &str) -> Result<PerplexityScore> {
    let (sum, n) = score_sentences(model, &lm_sentences(text), |lp| lp)?;
    Ok(PerplexityScore {
        value: (-sum / n as f64).exp(),
        token_count: n,
    })
}

/// Same quantity, accumulated in base-10 logs.
pub fn perplexity_base10(model: &KnModel, text: &str) -> Result<PerplexityScore> {
    let ln10 = std::f64::consts::LN_10;
    let (sum, n) = score_sentences(model, &lm_sentences(text), |lp| lp / ln10)?;
    Ok(PerplexityScore {
        value: 10f64.powf(-sum / n as f64),
        token_count: n,
    })
}

fn score_sentences<M: LanguageModel>(
    model: &M,
    sentences: &[Vec<String>],
    convert: impl Fn(f64) -> f64,
) -> Result<(f64, usize)> {
    if sentences.is_empty() {
        return Err(Error::Unscoreable("no tokens after normalization".into()));
    }
    let keep = model.order().saturating_sub(1);
    let mut sum = NeumaierSum::default();
    let mut n = 0usize;
    for s in sentences {
        let mut padded: Vec<&str> = Vec::with_capacity(s.len() + 2);
        padded.push(BOS);
        padded.extend(s.iter().map(String::as_str));
        padded.push(EOS);
        for i in 1..padded.len() {
            let ctx = &padded[i.saturating_sub(keep)..i];
            sum.add(convert(model.log_prob(ctx, padded[i])));
            n += 1;
        }
    }
    Ok((sum.total(), n))
}

/// Compensated summation; long documents otherwise drift by many ulps.
#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Trains an order-`order` model on `text` (one sentence per line).
pub fn train_on_text(text: &str, order: usize) -> Result<KnModel> {
    train_kneser_ney(&count_ngrams(&lm_sentences(text), order)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn assert_normalized(model: &KnModel, ctx: &[String]) {
        let ctx: Vec<&str> = ctx.iter().map(String::as_str).collect();
        let total: f64 = model
            .vocab()
            .predictable()
            .map(|w| model.log_prob(&ctx, w).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "context {ctx:?}: sum {total}");
    }

    #[test]
    fn hand_counts() {
        let c = count_ngrams(&[toks("a b a b")], 2).unwrap();
        assert_eq!(c.count(&["a", "b"]), 2);
        assert_eq!(c.count(&["b", "a"]), 1);
        assert_eq!(c.count(&[BOS, "a"]), 1);
        assert_eq!(c.count(&["b", EOS]), 1);
        assert_eq!(c.count(&["a"]), 2);
        let c = count_ngrams(&[toks("a")], 5).unwrap();
        assert_eq!(c.count(&["a"]), 1);
        assert!(count_ngrams::<String>(&[], 5).is_err());
        assert!(count_ngrams(&[Vec::<String>::new()], 5).is_err());
        assert!(count_ngrams(&[toks("a")], 6).is_err());
    }

    #[test]
    fn pack_round_trip() {
        let ids = [5, 0, 16_777_215, 2, 9];
        for k in 1..=5 {
            assert_eq!(unpack(pack(&ids[..k]), k), ids[..k]);
        }
    }

    #[test]
    fn b_follows_a() {
        let m = train_kneser_ney(&count_ngrams(&[toks("a b a b a b")], 5).unwrap()).unwrap();
        assert!(m.log_prob(&["a"], "b") > m.log_prob(&["a"], "a"));
        for k in 1..=5 {
            for ctx in m.contexts_at(k) {
                assert_normalized(&m, &ctx);
            }
        }
    }

    #[test]
    fn discount_formula() {
        // n1=10, n2=5, n3=3, n4=2: Y = 10/20 = 0.5.
        let d = Discounts::estimate([0, 10, 5, 3, 2]);
        assert!(!d.fallback);
        assert!((d.d[0] - (1.0 - 2.0 * 0.5 * 5.0 / 10.0)).abs() < 1e-12);
        assert!((d.d[1] - (2.0 - 3.0 * 0.5 * 3.0 / 5.0)).abs() < 1e-12);
        assert!((d.d[2] - (3.0 - 4.0 * 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        let f = Discounts::estimate([0, 0, 5, 3, 2]);
        assert!(f.fallback && f.d == [FALLBACK_DISCOUNT; 3]);
        assert!(Discounts::estimate([0, 4, 0, 1, 1]).fallback);
    }

    fn zipf_corpus(seed: u64, tokens: usize, vocab: usize) -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut left = tokens;
        while left > 0 {
            let len = rng.random_range(3..15).min(left);
            let mut s = Vec::with_capacity(len);
            let mut prev = rng.random_range(0..vocab);
            for _ in 0..len {
                // Mix of a Markov step and a Zipf-ish draw keeps higher orders informative.
                let next = if rng.random_bool(0.6) {
                    (prev * 7 + 3) % vocab
                } else {
                    let u: f64 = rng.random();
                    ((vocab as f64).powf(u) as usize).saturating_sub(1)
                };
                s.push(format!("w{next}"));
                prev = next;
            }
            left -= len;
            out.push(s);
        }
        out
    }

    #[test]
    fn discounts_on_random_corpus_are_in_range() {
        let m =
            train_kneser_ney(&count_ngrams(&zipf_corpus(1, 50_000, 3_000), 5).unwrap()).unwrap();
        for k in 1..=5 {
            let d = m.discounts(k);
            assert!(!d.fallback, "order {k}");
            assert!(d.d[0] > 0.0 && d.d[0] < 1.0, "order {k}: {:?}", d.d);
            assert!(d.d[1] > 0.0 && d.d[1] < 2.0);
            assert!(d.d[2] > 0.0 && d.d[2] < 3.0);
        }
    }

    #[test]
    fn unknown_words_share_unk_probability() {
        let m = train_kneser_ney(&count_ngrams(&zipf_corpus(2, 5_000, 100), 5).unwrap()).unwrap();
        let ctx = ["w3", "w24"];
        assert_eq!(m.log_prob(&ctx, "never-seen"), m.log_prob(&ctx, UNK));
        assert!(m.log_prob(&ctx, UNK) < 0.0);
        assert!(m.log_prob(&ctx, UNK).is_finite());
    }

    #[test]
    fn interpolation_dominates_backoff_term() {
        let m = train_kneser_ney(&count_ngrams(&zipf_corpus(3, 20_000, 200), 5).unwrap()).unwrap();
        let words: Vec<String> = m.vocab().predictable().map(str::to_string).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let k = rng.random_range(1..=5);
            let contexts = m.contexts_at(k);
            let ctx = &contexts[rng.random_range(0..contexts.len())];
            let ctx: Vec<&str> = ctx.iter().map(String::as_str).collect();
            let w = &words[rng.random_range(0..words.len())];
            if ctx.is_empty() {
                continue;
            }
            let full = m.log_prob(&ctx, w).exp();
            let lower = m.log_prob(&ctx[1..], w).exp();
            assert!(full + 1e-15 >= m.backoff_weight(&ctx) * lower);
        }
    }

    #[test]
    fn save_load_is_byte_stable() {
        let counts = count_ngrams(&zipf_corpus(5, 5_000, 80), 5).unwrap();
        let m = train_kneser_ney(&counts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.kn"), dir.path().join("b.kn"));
        m.save(&p1).unwrap();
        train_kneser_ney(&counts).unwrap().save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let back = KnModel::load(&p1).unwrap();
        for ctx in [vec![], vec!["w1"], vec!["w1", "w8", "w59", "w16"]] {
            for w in ["w1", "w8", UNK, EOS, "zzz"] {
                assert_eq!(m.log_prob(&ctx, w), back.log_prob(&ctx, w));
            }
        }
        std::fs::write(&p2, b"nope").unwrap();
        assert!(matches!(KnModel::load(&p2), Err(Error::ModelFormat(_))));
    }

    struct Constant(f64);

    impl LanguageModel for Constant {
        fn order(&self) -> usize {
            5
        }
        fn log_prob(&self, _: &[&str], _: &str) -> f64 {
            self.0.ln()
        }
    }

    #[test]
    fn constant_model_perplexity() {
        let p = perplexity(&Constant(0.25), "one two three\nfour").unwrap();
        assert_eq!(p.token_count, 6);
        assert!((p.value - 4.0).abs() < 1e-12);
        assert!(matches!(
            perplexity(&Constant(0.25), " ... \n!!"),
            Err(Error::Unscoreable(_))
        ));
    }

    #[test]
    fn base_independent_perplexity() {
        let text = "w1 w8 w59 w16\nw3 w24 w7 unknownword";
        let m = train_kneser_ney(&count_ngrams(&zipf_corpus(6, 10_000, 100), 5).unwrap()).unwrap();
        let a = perplexity(&m, text).unwrap().value;
        let b = perplexity_base10(&m, text).unwrap().value;
        assert!(((a - b) / a).abs() < 1e-9);
    }
}

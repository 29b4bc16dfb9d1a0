//! MinHash/LSH near-duplicate removal inside one (dump, language) partition.
//!
//! Documents are shingled into word 5-grams, signed with `K` universal hash
//! permutations `h_i(x) = (a_i x + b_i) mod (2^61 - 1)`, and banded into
//! `b` bands of `r` rows. Documents sharing any band bucket become
//! candidates; candidates whose estimated (or exact) Jaccard similarity
//! reaches the threshold are merged with union-find. Each cluster keeps only
//! its smallest docid.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc_model::{cmp_docids, DocId, Document};
use crate::droplog::{DropRecord, Stage};
use crate::error::{Error, Result};
use crate::par::Exec;

const MERSENNE_61: u64 = (1 << 61) - 1;
pub const DEFAULT_SHINGLE: usize = 5;
pub const DEFAULT_NUM_PERM: usize = 128;
pub const DEFAULT_BANDS: usize = 16;
pub const DEFAULT_ROWS: usize = 8;
pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// Sorted, de-duplicated shingle hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet(pub Vec<u64>);

impl ShingleSet {
    pub fn from_hashes(mut v: Vec<u64>) -> Self {
        v.sort_unstable();
        v.dedup();
        ShingleSet(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Exact Jaccard similarity of two hash sets (1.0 for two empty sets).
    pub fn jaccard(&self, other: &ShingleSet) -> f64 {
        let (a, b) = (&self.0, &other.0);
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        let (mut i, mut j, mut inter) = (0, 0, 0usize);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        inter as f64 / (a.len() + b.len() - inter) as f64
    }
}

/// Word `k`-gram shingles over lowercased whitespace tokens. Texts with
/// fewer than `k` tokens produce a single shingle of the whole sequence.
pub fn shingle(text: &str, k: usize) -> ShingleSet {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();
    if tokens.is_empty() {
        return ShingleSet(Vec::new());
    }
    let k = k.max(1);
    if tokens.len() < k {
        return ShingleSet(vec![hash_tokens(&tokens)]);
    }
    ShingleSet::from_hashes(tokens.windows(k).map(hash_tokens).collect())
}

fn hash_tokens(tokens: &[&str]) -> u64 {
    let mut h = xxhash_rust::xxh3::Xxh3::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            h.update(b" ");
        }
        h.update(t.as_bytes());
    }
    h.digest()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub seed: u64,
}

/// A family of `num_perm` hash permutations drawn from `seed`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    seed: u64,
    params: Vec<(u64, u64)>,
}

fn mul_add_mod(a: u64, x: u64, b: u64) -> u64 {
    let v = u128::from(a) * u128::from(x) + u128::from(b);
    // Fold twice: v < 2^122 + 2^61.
    let folded = (v & u128::from(MERSENNE_61)) + (v >> 61);
    let folded = (folded & u128::from(MERSENNE_61)) + (folded >> 61);
    let r = folded as u64;
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

impl MinHasher {
    pub fn new(num_perm: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..num_perm)
            .map(|_| {
                (
                    rng.random_range(1..MERSENNE_61),
                    rng.random_range(0..MERSENNE_61),
                )
            })
            .collect();
        MinHasher { seed, params }
    }

    pub fn num_perm(&self) -> usize {
        self.params.len()
    }

    pub fn signature(&self, shingles: &ShingleSet) -> Result<MinHashSignature> {
        if shingles.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot sign an empty shingle set".into(),
            ));
        }
        let mut values = vec![u64::MAX; self.params.len()];
        for &s in &shingles.0 {
            let x = s % MERSENNE_61;
            for (v, &(a, b)) in values.iter_mut().zip(&self.params) {
                let h = mul_add_mod(a, x, b);
                if h < *v {
                    *v = h;
                }
            }
        }
        Ok(MinHashSignature {
            values,
            seed: self.seed,
        })
    }
}

pub fn minhash_signature(
    shingles: &ShingleSet,
    num_perm: usize,
    seed: u64,
) -> Result<MinHashSignature> {
    MinHasher::new(num_perm, seed).signature(shingles)
}

/// Fraction of agreeing positions.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    if a.values.len() != b.values.len() || a.seed != b.seed {
        return Err(Error::Incompatible(format!(
            "K={} seed={} vs K={} seed={}",
            a.values.len(),
            a.seed,
            b.values.len(),
            b.seed
        )));
    }
    if a.values.is_empty() {
        return Err(Error::Incompatible("empty signatures".into()));
    }
    let same = a
        .values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| x == y)
        .count();
    Ok(same as f64 / a.values.len() as f64)
}

/// Probability that a pair with similarity `s` shares at least one band.
pub fn candidate_probability(s: f64, bands: usize, rows: usize) -> f64 {
    1.0 - (1.0 - s.powi(rows as i32)).powi(bands as i32)
}

#[derive(Debug, Clone)]
pub struct LshIndex {
    bands: usize,
    rows: usize,
    buckets: HashMap<(u32, u64), Vec<usize>>,
}

impl LshIndex {
    pub fn new(bands: usize, rows: usize) -> Self {
        LshIndex {
            bands,
            rows,
            buckets: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: usize, sig: &MinHashSignature) -> Result<()> {
        if sig.values.len() != self.bands * self.rows {
            return Err(Error::Incompatible(format!(
                "signature length {} != bands {} x rows {}",
                sig.values.len(),
                self.bands,
                self.rows
            )));
        }
        for (band, chunk) in sig.values.chunks(self.rows).enumerate() {
            let bytes: Vec<u8> = chunk.iter().flat_map(|v| v.to_le_bytes()).collect();
            let h = xxhash_rust::xxh3::xxh3_64(&bytes);
            self.buckets.entry((band as u32, h)).or_default().push(id);
        }
        Ok(())
    }

    /// Distinct candidate pairs `(i, j)` with `i < j`, sorted.
    pub fn candidate_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = HashSet::new();
        for ids in self.buckets.values().filter(|v| v.len() > 1) {
            for (x, &i) in ids.iter().enumerate() {
                for &j in &ids[x + 1..] {
                    pairs.insert((i.min(j), i.max(j)));
                }
            }
        }
        let mut out: Vec<_> = pairs.into_iter().collect();
        out.sort_unstable();
        out
    }

    /// Number of buckets holding `id` (always `bands` after insertion).
    pub fn bucket_count(&self, id: usize) -> usize {
        self.buckets.values().filter(|v| v.contains(&id)).count()
    }
}

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Verify {
    /// Agreement fraction of MinHash signatures.
    #[default]
    Estimated,
    /// Exact Jaccard of the shingle sets.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DedupConfig {
    pub num_perm: usize,
    pub bands: usize,
    pub rows: usize,
    pub threshold: f64,
    pub seed: u64,
    pub shingle_size: usize,
    pub verify: Verify,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            num_perm: DEFAULT_NUM_PERM,
            bands: DEFAULT_BANDS,
            rows: DEFAULT_ROWS,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            shingle_size: DEFAULT_SHINGLE,
            verify: Verify::Estimated,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.rows == 0 || self.bands * self.rows != self.num_perm {
            return Err(Error::Config(format!(
                "bands ({}) x rows ({}) must equal num_perm ({})",
                self.bands, self.rows, self.num_perm
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "dedup threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.shingle_size == 0 {
            return Err(Error::Config("shingle_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DupCluster {
    pub representative: String,
    pub members: Vec<String>,
    pub partition: String,
}

#[derive(Debug, Clone, Default)]
pub struct DedupOutcome {
    /// Survivors in docid order.
    pub kept: Vec<Document>,
    pub clusters: Vec<DupCluster>,
    pub drops: Vec<DropRecord>,
}

/// Partition of a document: (docid corpus segment, language).
pub fn partition_key(doc: &Document) -> (String, String) {
    let corpus = DocId::parse(&doc.meta.docid)
        .map(|id| id.corpus)
        .unwrap_or_default();
    (corpus, doc.meta.language.clone())
}

/// Groups documents by partition key; each group is sorted by docid.
pub fn split_partitions(docs: Vec<Document>) -> BTreeMap<(String, String), Vec<Document>> {
    let mut parts: BTreeMap<(String, String), Vec<Document>> = BTreeMap::new();
    for d in docs {
        parts.entry(partition_key(&d)).or_default().push(d);
    }
    for v in parts.values_mut() {
        v.sort_by(|a, b| cmp_docids(&a.meta.docid, &b.meta.docid));
    }
    parts
}

/// Deduplicates one partition. `label` names the partition in cluster reports.
pub fn dedup_partition(
    mut docs: Vec<Document>,
    label: &str,
    cfg: &DedupConfig,
    exec: Exec,
) -> Result<DedupOutcome> {
    cfg.validate()?;
    if let Some(first) = docs.first() {
        let key = partition_key(first);
        if let Some(other) = docs.iter().find(|d| partition_key(d) != key) {
            let other = partition_key(other);
            return Err(Error::MixedPartition(
                format!("{}/{}", key.0, key.1),
                format!("{}/{}", other.0, other.1),
            ));
        }
    }
    docs.sort_by(|a, b| cmp_docids(&a.meta.docid, &b.meta.docid));

    let hasher = MinHasher::new(cfg.num_perm, cfg.seed);
    let signed: Vec<Result<(ShingleSet, MinHashSignature)>> = exec.map(&docs, |d| {
        let sh = shingle(&d.text, cfg.shingle_size);
        let sig = hasher.signature(&sh).map_err(|_| {
            Error::InvalidArgument(format!("document {} has no tokens", d.meta.docid))
        })?;
        Ok((sh, sig))
    });
    let signed: Vec<(ShingleSet, MinHashSignature)> = signed.into_iter().collect::<Result<_>>()?;

    let mut index = LshIndex::new(cfg.bands, cfg.rows);
    for (i, (_, sig)) in signed.iter().enumerate() {
        index.insert(i, sig)?;
    }
    let pairs = index.candidate_pairs();
    let verified: Vec<bool> = exec.map(&pairs, |&(i, j)| {
        let sim = match cfg.verify {
            Verify::Estimated => estimate_jaccard(&signed[i].1, &signed[j].1).unwrap_or(0.0),
            Verify::Exact => signed[i].0.jaccard(&signed[j].0),
        };
        sim >= cfg.threshold
    });
    let mut uf = UnionFind::new(docs.len());
    for (&(i, j), ok) in pairs.iter().zip(verified) {
        if ok {
            uf.union(i, j);
        }
    }

    // Docs are sorted, so the smallest index in a group is the smallest docid.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..docs.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut representative_of = vec![0usize; docs.len()];
    let mut clusters = Vec::new();
    for members in groups.values() {
        let rep = members[0];
        for &m in members {
            representative_of[m] = rep;
        }
        if members.len() > 1 {
            clusters.push(DupCluster {
                representative: docs[rep].meta.docid.clone(),
                members: members
                    .iter()
                    .map(|&m| docs[m].meta.docid.clone())
                    .collect(),
                partition: label.to_string(),
            });
        }
    }
    clusters.sort_by(|a, b| cmp_docids(&a.representative, &b.representative));

    let rep_ids: Vec<String> = representative_of
        .iter()
        .map(|&r| docs[r].meta.docid.clone())
        .collect();
    let mut out = DedupOutcome {
        clusters,
        ..Default::default()
    };
    for (i, doc) in docs.into_iter().enumerate() {
        if representative_of[i] == i {
            out.kept.push(doc);
        } else {
            out.drops.push(DropRecord::new(
                &doc.meta.docid,
                Stage::Dedup,
                format!("duplicate_of:{}", rep_ids[i]),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shingle_counts() {
        assert_eq!(shingle("a b c d e f", 5).len(), 2);
        assert_eq!(shingle("a b", 5).len(), 1);
        assert_eq!(shingle("A  B\nc d e", 5), shingle("a b c d e", 5));
        assert!(shingle("   ", 5).is_empty());
        assert_eq!(shingle("x y z", 5), shingle("x y z", 5));
        // Repeated windows collapse.
        assert_eq!(shingle("a a a a a a a", 5).len(), 1);
    }

    #[test]
    fn mersenne_arithmetic() {
        let p = MERSENNE_61;
        assert_eq!(mul_add_mod(p - 1, p - 1, 0), 1);
        assert_eq!(mul_add_mod(1, 5, p - 5), 0);
        let (a, x, b) = (123_456_789_123u64, 987_654_321_987u64 % p, 42u64);
        let expect = ((u128::from(a) * u128::from(x) + u128::from(b)) % u128::from(p)) as u64;
        assert_eq!(mul_add_mod(a, x, b), expect);
    }

    #[test]
    fn signature_properties() {
        let a = ShingleSet::from_hashes((1..=50).collect());
        let b = ShingleSet::from_hashes((26..=75).collect());
        let c = ShingleSet::from_hashes((1000..=1050).collect());
        let h = MinHasher::new(128, 1);
        let (sa, sb, sc) = (
            h.signature(&a).unwrap(),
            h.signature(&b).unwrap(),
            h.signature(&c).unwrap(),
        );
        assert_eq!(sa, h.signature(&a.clone()).unwrap());
        assert_eq!(estimate_jaccard(&sa, &sa).unwrap(), 1.0);
        assert!(estimate_jaccard(&sa, &sc).unwrap() < 0.05);
        assert!((estimate_jaccard(&sa, &sb).unwrap() - 1.0 / 3.0).abs() <= 0.15);
        assert!((a.jaccard(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert!(h.signature(&ShingleSet(vec![])).is_err());
        let other = MinHasher::new(128, 2).signature(&a).unwrap();
        assert!(matches!(
            estimate_jaccard(&sa, &other),
            Err(Error::Incompatible(_))
        ));
        let short = MinHasher::new(64, 1).signature(&a).unwrap();
        assert!(estimate_jaccard(&sa, &short).is_err());
    }

    #[test]
    fn s_curve() {
        assert!(candidate_probability(0.9, 16, 8) > 0.9998);
        assert!(candidate_probability(0.3, 16, 8) < 0.0011);
    }

    #[test]
    fn lsh_buckets_per_doc() {
        let h = MinHasher::new(128, 3);
        let mut idx = LshIndex::new(16, 8);
        for i in 0..5u64 {
            let s = ShingleSet::from_hashes((i * 100..i * 100 + 40).collect());
            idx.insert(i as usize, &h.signature(&s).unwrap()).unwrap();
        }
        for i in 0..5 {
            assert_eq!(idx.bucket_count(i), 16);
        }
        assert!(idx.candidate_pairs().is_empty());
        let bad = MinHasher::new(100, 3)
            .signature(&ShingleSet(vec![1]))
            .unwrap();
        assert!(idx.insert(9, &bad).is_err());
    }

    #[test]
    fn union_find_merges() {
        let mut uf = UnionFind::new(6);
        assert!(uf.union(0, 1));
        assert!(uf.union(4, 5));
        assert!(uf.union(1, 5));
        assert!(!uf.union(0, 4));
        assert_eq!(uf.find(0), uf.find(5));
        assert_ne!(uf.find(2), uf.find(3));
    }

    fn doc(id: &str, text: &str) -> Document {
        let mut d = Document::new(id.into(), text.into(), "2024-01-01".into());
        d.meta.language = "en".into();
        d
    }

    #[test]
    fn identical_docs_keep_smallest_docid() {
        let text = "the same text repeated across three documents in this partition today";
        let docs = vec![
            doc("cc/en/0/10", text),
            doc("cc/en/0/9", text),
            doc("cc/en/1/0", text),
        ];
        let out =
            dedup_partition(docs, "2024-1/en", &DedupConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].meta.docid, "cc/en/0/9");
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].representative, "cc/en/0/9");
        assert_eq!(
            out.clusters[0].members,
            ["cc/en/0/9", "cc/en/0/10", "cc/en/1/0"]
        );
        assert_eq!(out.drops.len(), 2);
        assert!(out.drops.iter().all(|d| d.stage == Stage::Dedup));
        assert_eq!(out.drops[0].reason, "duplicate_of:cc/en/0/9");
    }

    #[test]
    fn mixed_partitions_rejected() {
        let mut other = doc("cc/de/0/1", "x y z");
        other.meta.language = "de".into();
        let err = dedup_partition(
            vec![doc("cc/en/0/0", "a b c"), other],
            "p",
            &DedupConfig::default(),
            Exec::Sequential,
        );
        assert!(matches!(err, Err(Error::MixedPartition(..))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = DedupConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.rows = 7;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}

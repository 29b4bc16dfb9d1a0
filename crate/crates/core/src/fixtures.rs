//! Seeded synthetic data and reference oracles.
//!
//! Everything here is deterministic for a given seed and independent of
//! platform and locale. Text is built from small bundled word lists, so it
//! exercises mechanics (shingling, n-gram statistics, thresholds) rather
//! than linguistic realism.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corpus base name used for generated dumps.
pub const FIXTURE_CORPUS: &str = "commoncrawl";
/// Dump label used for generated dumps.
pub const FIXTURE_DUMP: &str = "2023-5";
/// Shingle size the manifest Jaccard values are computed with.
pub const MANIFEST_SHINGLE: usize = 5;

const EN: &[&str] = &[
    "the",
    "people",
    "would",
    "about",
    "which",
    "their",
    "there",
    "these",
    "other",
    "through",
    "should",
    "think",
    "where",
    "while",
    "world",
    "between",
    "under",
    "never",
    "always",
    "something",
    "house",
    "water",
    "light",
    "night",
    "thought",
    "school",
    "country",
    "family",
    "children",
    "everything",
    "because",
    "without",
    "another",
    "around",
    "against",
    "together",
    "however",
    "within",
    "during",
    "before",
    "after",
    "little",
    "great",
    "small",
    "young",
    "large",
    "right",
    "early",
    "strong",
    "whole",
    "morning",
    "evening",
    "garden",
    "window",
    "kitchen",
    "street",
    "market",
    "river",
    "mountain",
    "village",
    "teacher",
    "mother",
    "father",
    "brother",
    "sister",
    "friend",
    "neighbour",
    "doctor",
    "worker",
    "farmer",
    "walked",
    "talked",
    "looked",
    "wanted",
    "called",
    "worked",
    "played",
    "opened",
    "showed",
    "watched",
    "bright",
    "quiet",
    "heavy",
    "happy",
    "ready",
    "every",
    "only",
    "with",
    "from",
    "that",
    "have",
    "this",
    "they",
    "what",
    "when",
    "your",
    "were",
    "been",
    "much",
    "many",
    "though",
    "enough",
    "across",
    "laughing",
    "writing",
    "reading",
    "thinking",
    "knowing",
    "growing",
    "showing",
    "weather",
    "history",
    "story",
    "paper",
    "letter",
    "question",
    "answer",
    "number",
    "system",
    "government",
    "money",
    "business",
    "service",
    "problem",
    "company",
    "health",
    "power",
    "energy",
    "church",
    "office",
    "several",
    "could",
    "might",
    "ought",
    "shall",
    "whose",
    "whom",
    "why",
    "how",
    "who",
    "yesterday",
    "tomorrow",
    "weekend",
    "holiday",
    "journey",
    "knowledge",
    "wonderful",
    "beautiful",
    "thankful",
    "careful",
];

const DE: &[&str] = &[
    "der",
    "die",
    "das",
    "und",
    "nicht",
    "sich",
    "auch",
    "eine",
    "einen",
    "werden",
    "nach",
    "über",
    "schon",
    "noch",
    "durch",
    "gegen",
    "zwischen",
    "während",
    "für",
    "würde",
    "können",
    "müssen",
    "möchte",
    "sollte",
    "hätte",
    "wäre",
    "größer",
    "schön",
    "früh",
    "spät",
    "straße",
    "weiß",
    "heißen",
    "fußball",
    "schließlich",
    "gemütlich",
    "natürlich",
    "glücklich",
    "plötzlich",
    "täglich",
    "haus",
    "wasser",
    "licht",
    "nacht",
    "gedanke",
    "schule",
    "land",
    "familie",
    "kinder",
    "alles",
    "weil",
    "ohne",
    "zusammen",
    "jedoch",
    "innerhalb",
    "vorher",
    "nachher",
    "klein",
    "groß",
    "jung",
    "morgen",
    "abend",
    "garten",
    "fenster",
    "küche",
    "markt",
    "fluss",
    "gebirge",
    "dorf",
    "stadt",
    "lehrer",
    "mutter",
    "vater",
    "bruder",
    "schwester",
    "freund",
    "nachbar",
    "arzt",
    "arbeiter",
    "bauer",
    "gegangen",
    "gesprochen",
    "geschaut",
    "gewollt",
    "gerufen",
    "gearbeitet",
    "gespielt",
    "geöffnet",
    "gezeigt",
    "gesehen",
    "hell",
    "ruhig",
    "schwer",
    "fröhlich",
    "bereit",
    "jeder",
    "nur",
    "mit",
    "von",
    "dass",
    "haben",
    "dieser",
    "sie",
    "was",
    "wenn",
    "ihre",
    "waren",
    "gewesen",
    "viel",
    "viele",
    "wetter",
    "geschichte",
    "zeitung",
    "brief",
    "frage",
    "antwort",
    "zahl",
    "regierung",
    "geld",
    "geschäft",
    "dienst",
    "problem",
    "gesellschaft",
    "gesundheit",
    "kraft",
    "kirche",
    "büro",
    "zeitpunkt",
    "wirtschaft",
    "sprache",
    "gestern",
    "übermorgen",
    "wochenende",
    "urlaub",
    "reise",
    "wissen",
    "wunderbar",
    "herrlich",
    "dankbar",
    "vorsichtig",
    "zwölf",
    "ähnlich",
    "öffentlich",
    "übrigens",
    "berühmt",
    "gehört",
    "schwierig",
    "wichtig",
    "zeitschrift",
    "bahnhof",
];

const FR: &[&str] = &[
    "le",
    "la",
    "les",
    "des",
    "une",
    "est",
    "pas",
    "pour",
    "dans",
    "avec",
    "mais",
    "comme",
    "tout",
    "être",
    "avoir",
    "fait",
    "était",
    "déjà",
    "très",
    "après",
    "où",
    "là",
    "ça",
    "français",
    "garçon",
    "leçon",
    "façon",
    "reçu",
    "commençait",
    "reçoit",
    "maison",
    "eau",
    "lumière",
    "nuit",
    "pensée",
    "école",
    "pays",
    "famille",
    "enfants",
    "chose",
    "parce",
    "sans",
    "ensemble",
    "cependant",
    "pendant",
    "avant",
    "petit",
    "grand",
    "jeune",
    "fort",
    "matin",
    "soirée",
    "jardin",
    "fenêtre",
    "cuisine",
    "rue",
    "marché",
    "rivière",
    "montagne",
    "village",
    "professeur",
    "mère",
    "père",
    "frère",
    "sœur",
    "ami",
    "voisin",
    "médecin",
    "ouvrier",
    "paysan",
    "marchait",
    "parlé",
    "regardé",
    "voulu",
    "appelé",
    "travaillé",
    "joué",
    "ouvert",
    "montré",
    "vu",
    "clair",
    "tranquille",
    "lourd",
    "heureux",
    "prêt",
    "chaque",
    "seulement",
    "aussi",
    "encore",
    "toujours",
    "jamais",
    "beaucoup",
    "quelque",
    "quelqu'un",
    "aujourd'hui",
    "hier",
    "demain",
    "semaine",
    "vacances",
    "voyage",
    "histoire",
    "journal",
    "lettre",
    "question",
    "réponse",
    "nombre",
    "gouvernement",
    "argent",
    "entreprise",
    "santé",
    "pouvoir",
    "énergie",
    "église",
    "bureau",
    "société",
    "économie",
    "élève",
    "été",
    "hôpital",
    "château",
    "connaissance",
    "merveilleux",
    "magnifique",
    "reconnaissant",
    "prudent",
    "à",
    "au",
    "aux",
    "du",
    "sur",
    "sous",
    "chez",
    "vers",
    "depuis",
    "entre",
    "contre",
    "selon",
    "parmi",
    "près",
    "loin",
    "nous",
    "vous",
    "ils",
    "elles",
    "leur",
    "notre",
    "votre",
    "celui",
    "celle",
    "ceux",
];

const SPAM: &[&str] = &[
    "buy cheap replica watches online now and get a free casino bonus with instant payout click here today",
    "win big money fast with our exclusive casino offer click the link below to claim your free bonus now",
    "cheap pills online no prescription needed buy now and save big with fast discreet worldwide shipping",
    "hot singles in your area are waiting for you click here now to chat for free no credit card required",
    "make money from home fast with this one weird trick that banks do not want you to know click now today only",
    "limited time offer buy cheap followers and likes now instant delivery guaranteed click here to order",
    "get rich quick with crypto casino bets claim your free spins now and win real money instantly this weekend only",
    "free download of premium software cracks and keygens click the link below now no survey required today only",
    "lose weight fast with our miracle pills buy now and get a second bottle free click here to order today",
    "congratulations you have won a free prize click here now to claim your reward before the offer expires",
];

/// Supported fixture languages.
pub const LANGUAGES: [&str; 3] = ["de", "en", "fr"];

pub fn word_list(language: &str) -> Result<&'static [&'static str]> {
    match language {
        "en" => Ok(EN),
        "de" => Ok(DE),
        "fr" => Ok(FR),
        other => Err(Error::InvalidArgument(format!(
            "no fixture word list for language {other:?}"
        ))),
    }
}

fn sentence(rng: &mut impl Rng, words: &[&str], len: usize) -> String {
    let mut out = String::new();
    for i in 0..len {
        let w = words[rng.random_range(0..words.len())];
        if i == 0 {
            let mut cs = w.chars();
            if let Some(c) = cs.next() {
                out.extend(c.to_uppercase());
                out.push_str(cs.as_str());
            }
        } else {
            out.push(' ');
            out.push_str(w);
        }
    }
    out.push('.');
    out
}

/// `lines` sentences of `min_words..=max_words` words each, one per line.
pub fn language_text(
    rng: &mut impl Rng,
    language: &str,
    lines: usize,
    min_words: usize,
    max_words: usize,
) -> Result<String> {
    let words = word_list(language)?;
    let lines: Vec<String> = (0..lines)
        .map(|_| {
            let n = rng.random_range(min_words..=max_words.max(min_words));
            sentence(rng, words, n)
        })
        .collect();
    Ok(lines.join("\n"))
}

/// Training text for one language with at least `min_chars` characters.
pub fn lid_training_text(seed: u64, language: &str, min_chars: usize) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = word_list(language)?;
    let mut out = String::new();
    let mut chars = 0;
    while chars < min_chars {
        let n = rng.random_range(6..=18);
        let s = sentence(&mut rng, words, n);
        chars += s.chars().count() + 1;
        out.push_str(&s);
        out.push('\n');
    }
    Ok(out)
}

/// Spam-like text drawn from a small fixed set of lines.
pub fn harmful_corpus(seed: u64, lines: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<&str> = (0..lines)
        .map(|_| SPAM[rng.random_range(0..SPAM.len())])
        .collect();
    picked.join("\n")
}

/// Ordinary English text of `lines` lines.
pub fn neutral_corpus(seed: u64, lines: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    language_text(&mut rng, "en", lines, 10, 25).expect("english is bundled")
}

fn shingle_strings(text: &str, k: usize) -> BTreeSet<String> {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();
    if tokens.is_empty() {
        return BTreeSet::new();
    }
    let k = k.max(1);
    if tokens.len() < k {
        return std::iter::once(tokens.join(" ")).collect();
    }
    tokens.windows(k).map(|w| w.join(" ")).collect()
}

/// Exact Jaccard similarity of the word `k`-shingle sets of two texts.
///
/// Two texts without shingles score 1.0 when identical and 0.0 otherwise.
pub fn exact_jaccard_oracle(text_a: &str, text_b: &str, k: usize) -> f64 {
    let a = shingle_strings(text_a, k);
    let b = shingle_strings(text_b, k);
    if a.is_empty() && b.is_empty() {
        return if text_a == text_b { 1.0 } else { 0.0 };
    }
    let inter = a.intersection(&b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocClass {
    Clean,
    ExactDup,
    NearDup,
    Tiny,
    Noisy,
    Short,
    Harmful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestEntry {
    DupPair {
        a: String,
        b: String,
        jaccard: f64,
    },
    Doc {
        docid: String,
        language: String,
        class: DocClass,
    },
}

#[derive(Debug, Clone)]
pub struct SyntheticDump {
    /// Uncompressed WET bytes, starting with a `warcinfo` record.
    pub wet: Vec<u8>,
    pub manifest: Vec<ManifestEntry>,
    /// Planted texts in docno order.
    pub texts: Vec<String>,
}

impl SyntheticDump {
    /// Docids the pipeline assigns once language identification succeeds.
    pub fn docid(language: &str, docno: usize) -> String {
        format!("{FIXTURE_CORPUS}-{FIXTURE_DUMP}/{language}/0/{docno}")
    }

    pub fn dup_pairs(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.manifest.iter().filter_map(|e| match e {
            ManifestEntry::DupPair { a, b, jaccard } => Some((a.as_str(), b.as_str(), *jaccard)),
            _ => None,
        })
    }

    pub fn manifest_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.manifest {
            out.push_str(&serde_json::to_string(e).expect("manifest serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes `fixture.warc.wet` into `raw_dir` and `manifest.jsonl` next to it.
    pub fn write(&self, raw_dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(raw_dir).map_err(|e| Error::io(raw_dir, e))?;
        let wet = raw_dir.join("fixture.warc.wet");
        let manifest = raw_dir.parent().unwrap_or(raw_dir).join("manifest.jsonl");
        std::fs::write(&wet, &self.wet).map_err(|e| Error::io(&wet, e))?;
        std::fs::write(&manifest, self.manifest_jsonl()).map_err(|e| Error::io(&manifest, e))?;
        Ok((wet, manifest))
    }
}

fn wet_record(out: &mut Vec<u8>, warc_type: &str, id: usize, uri: Option<&str>, body: &str) {
    write!(out, "WARC/1.0\r\nWARC-Type: {warc_type}\r\n").unwrap();
    if let Some(u) = uri {
        write!(out, "WARC-Target-URI: {u}\r\n").unwrap();
    }
    write!(
        out,
        "WARC-Date: 2023-02-01T00:00:00Z\r\nWARC-Record-ID: <urn:fixture:{id}>\r\n\
         Content-Type: text/plain\r\nContent-Length: {}\r\n\r\n",
        body.len()
    )
    .unwrap();
    out.extend_from_slice(body.as_bytes());
    out.extend_from_slice(b"\r\n\r\n");
}

fn clean_doc(rng: &mut impl Rng, language: &str) -> String {
    language_text(rng, language, 8, 36, 44).expect("language checked")
}

fn near_copy(rng: &mut impl Rng, text: &str, language: &str, edits: usize) -> String {
    let words = word_list(language).expect("language checked");
    let mut lines: Vec<Vec<String>> = text
        .split('\n')
        .map(|l| l.split(' ').map(str::to_string).collect())
        .collect();
    for _ in 0..edits {
        let li = rng.random_range(0..lines.len());
        // Keep the capitalised first word and the final punctuation intact.
        let len = lines[li].len();
        let wi = rng.random_range(1..len - 1);
        let old = lines[li][wi].clone();
        let mut new = old.clone();
        while new == old {
            new = words[rng.random_range(0..words.len())].to_string();
        }
        lines[li][wi] = new;
    }
    lines
        .iter()
        .map(|l| l.join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn junk_doc(rng: &mut impl Rng, class: DocClass, language: &str) -> String {
    match class {
        DocClass::Tiny => language_text(rng, language, 3, 36, 44).unwrap(),
        DocClass::Short => language_text(rng, language, 14, 4, 7).unwrap(),
        DocClass::Noisy => {
            let words = word_list(language).unwrap();
            let lines: Vec<String> = (0..8)
                .map(|_| {
                    (0..30)
                        .map(|i| {
                            if i % 3 == 0 {
                                words[rng.random_range(0..words.len())].to_string()
                            } else {
                                format!(
                                    "{}#{}",
                                    rng.random_range(100..99_999),
                                    rng.random_range(0..999)
                                )
                            }
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            lines.join("\n")
        }
        DocClass::Harmful => {
            let lines: Vec<&str> = (0..8)
                .map(|_| SPAM[rng.random_range(0..SPAM.len())])
                .collect();
            lines.join("\n")
        }
        _ => unreachable!("not a junk class"),
    }
}

enum Slot {
    Single(DocClass),
    Pair(usize),
}

/// Generates a WET dump of `n_docs` documents with `dup_pairs` planted
/// duplicate pairs (every fourth pair exact, the rest 1-2 word
/// substitutions) and a sprinkling of junk documents.
///
/// Junk documents (tiny, noisy, short-line and spam) are planted in English
/// only, one in ten singles.
pub fn gen_synthetic_dump(
    seed: u64,
    n_docs: usize,
    dup_pairs: usize,
    languages: &[&str],
) -> Result<SyntheticDump> {
    if languages.is_empty() {
        return Err(Error::InvalidArgument("no languages requested".into()));
    }
    for l in languages {
        word_list(l)?;
    }
    if dup_pairs.checked_mul(2).is_none_or(|need| need > n_docs) {
        return Err(Error::InvalidArgument(format!(
            "{dup_pairs} duplicate pairs need at least {} documents, got {n_docs}",
            dup_pairs.saturating_mul(2)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let junk = [
        DocClass::Tiny,
        DocClass::Noisy,
        DocClass::Short,
        DocClass::Harmful,
    ];
    let singles = n_docs - 2 * dup_pairs;
    let mut slots: Vec<Slot> = (0..singles)
        .map(|i| {
            if i % 10 == 9 {
                Slot::Single(junk[(i / 10) % junk.len()])
            } else {
                Slot::Single(DocClass::Clean)
            }
        })
        .collect();
    for p in 0..dup_pairs {
        slots.push(Slot::Pair(p));
        slots.push(Slot::Pair(p));
    }
    slots.shuffle(&mut rng);

    let pair_langs: Vec<&str> = (0..dup_pairs)
        .map(|_| languages[rng.random_range(0..languages.len())])
        .collect();
    let mut first_of_pair: Vec<Option<(usize, String)>> = vec![None; dup_pairs];
    let mut texts = Vec::with_capacity(n_docs);
    let mut doc_entries = Vec::with_capacity(n_docs);
    let mut pair_entries = Vec::with_capacity(dup_pairs);
    for (docno, slot) in slots.iter().enumerate() {
        let (language, class, text) = match *slot {
            Slot::Single(DocClass::Clean) => {
                let lang = languages[rng.random_range(0..languages.len())];
                (lang, DocClass::Clean, clean_doc(&mut rng, lang))
            }
            Slot::Single(class) => ("en", class, junk_doc(&mut rng, class, "en")),
            Slot::Pair(p) => {
                let lang = pair_langs[p];
                let exact = p % 4 == 0;
                match first_of_pair[p].take() {
                    None => {
                        let t = clean_doc(&mut rng, lang);
                        first_of_pair[p] = Some((docno, t.clone()));
                        (lang, DocClass::Clean, t)
                    }
                    Some((first, original)) => {
                        let (class, t) = if exact {
                            (DocClass::ExactDup, original.clone())
                        } else {
                            let edits = rng.random_range(1..=2);
                            (
                                DocClass::NearDup,
                                near_copy(&mut rng, &original, lang, edits),
                            )
                        };
                        pair_entries.push(ManifestEntry::DupPair {
                            a: SyntheticDump::docid(lang, first),
                            b: SyntheticDump::docid(lang, docno),
                            jaccard: exact_jaccard_oracle(&original, &t, MANIFEST_SHINGLE),
                        });
                        (lang, class, t)
                    }
                }
            }
        };
        doc_entries.push(ManifestEntry::Doc {
            docid: SyntheticDump::docid(language, docno),
            language: language.to_string(),
            class,
        });
        texts.push(text);
    }

    let mut wet = Vec::new();
    wet_record(
        &mut wet,
        "warcinfo",
        0,
        None,
        &format!("software: corpusprep fixtures\r\nseed: {seed}\r\n"),
    );
    for (docno, text) in texts.iter().enumerate() {
        let uri = format!("https://fixture.example/{docno}");
        wet_record(&mut wet, "conversion", docno + 1, Some(&uri), text);
    }
    let mut manifest = pair_entries;
    manifest.extend(doc_entries);
    Ok(SyntheticDump {
        wet,
        manifest,
        texts,
    })
}

/// Language-id model trained on bundled text for every fixture language.
pub fn train_fixture_lid(seed: u64) -> Result<crate::langid::LangIdModel> {
    let corpus = LANGUAGES
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok((
                l.to_string(),
                lid_training_text(seed + i as u64, l, 40_000)?,
            ))
        })
        .collect::<Result<_>>()?;
    crate::langid::train_profiles(&corpus)
}

/// Order-5 Kneser-Ney model of the spam fixture.
pub fn train_fixture_harmful_lm(seed: u64) -> Result<crate::ngram_lm::KnModel> {
    crate::ngram_lm::train_on_text(&harmful_corpus(seed, 2_000), crate::ngram_lm::DEFAULT_ORDER)
}

/// Paths of a ready-to-run web fixture.
#[derive(Debug, Clone)]
pub struct WebFixture {
    /// Input root holding `<dump>/raw/fixture.warc.wet`.
    pub input: PathBuf,
    pub lid_model: PathBuf,
    pub harmful_lm: PathBuf,
    pub dump: SyntheticDump,
}

/// Writes a synthetic dump plus trained models under `root`.
pub fn write_web_fixture(
    root: &Path,
    seed: u64,
    n_docs: usize,
    dup_pairs: usize,
    languages: &[&str],
) -> Result<WebFixture> {
    let dump = gen_synthetic_dump(seed, n_docs, dup_pairs, languages)?;
    let input = root.join("data");
    dump.write(&input.join(FIXTURE_DUMP).join("raw"))?;
    let models = root.join("models");
    std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
    let lid_model = models.join("lid.json");
    let harmful_lm = models.join("harmful.kn");
    train_fixture_lid(seed)?.save(&lid_model)?;
    train_fixture_harmful_lm(seed)?.save(&harmful_lm)?;
    Ok(WebFixture {
        input,
        lid_model,
        harmful_lm,
        dump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_dump_label, parse_wet_stream, wet_to_document};
    use proptest::prelude::*;

    #[test]
    fn oracle_examples() {
        assert_eq!(
            exact_jaccard_oracle("a b c d e f", "b c d e f g", 5),
            1.0 / 3.0
        );
        assert_eq!(exact_jaccard_oracle("x y z w v", "x y z w v", 5), 1.0);
        assert_eq!(exact_jaccard_oracle("a b c d e", "f g h i j", 5), 0.0);
        assert_eq!(exact_jaccard_oracle("", "", 5), 1.0);
        assert_eq!(exact_jaccard_oracle("", "  ", 5), 0.0);
        assert_eq!(exact_jaccard_oracle("", "a", 5), 0.0);
    }

    #[test]
    fn word_lists_are_sized() {
        for l in LANGUAGES {
            assert_eq!(word_list(l).unwrap().len(), 150, "{l}");
        }
        assert!(word_list("xx").is_err());
    }

    #[test]
    fn small_dump_has_declared_pairs() {
        let d = gen_synthetic_dump(7, 100, 10, &["en", "de"]).unwrap();
        assert_eq!(d.dup_pairs().count(), 10);
        for (_, _, j) in d.dup_pairs() {
            assert!(j >= 0.9, "{j}");
        }
        let again = gen_synthetic_dump(7, 100, 10, &["en", "de"]).unwrap();
        assert_eq!(d.wet, again.wet);
        assert_eq!(d.manifest_jsonl(), again.manifest_jsonl());
        assert!(d
            .manifest_jsonl()
            .starts_with(r#"{"kind":"dup_pair","a":"commoncrawl-2023-5/"#));
    }

    #[test]
    fn dump_parses_back() {
        let d = gen_synthetic_dump(3, 40, 5, &["fr"]).unwrap();
        let dump = parse_dump_label(FIXTURE_DUMP).unwrap();
        let mut docs = Vec::new();
        for rec in parse_wet_stream(&d.wet[..]) {
            if let Some(doc) =
                wet_to_document(&rec.unwrap(), dump, FIXTURE_CORPUS, 0, docs.len() as u64).unwrap()
            {
                docs.push(doc);
            }
        }
        assert_eq!(docs.len(), 40);
        for (i, doc) in docs.iter().enumerate() {
            assert_eq!(doc.text, d.texts[i]);
            assert_eq!(doc.meta.docid, format!("commoncrawl-2023-5/und/0/{i}"));
        }
    }

    #[test]
    fn infeasible_parameters() {
        assert!(gen_synthetic_dump(1, 5, 3, &["en"]).is_err());
        assert!(gen_synthetic_dump(1, 5, 1, &[]).is_err());
        assert!(gen_synthetic_dump(1, 5, 1, &["zz"]).is_err());
        assert!(gen_synthetic_dump(1, 6, 3, &["en"]).is_ok());
    }

    #[test]
    fn training_text_reaches_length() {
        let t = lid_training_text(1, "de", 10_000).unwrap();
        assert!(t.chars().count() >= 10_000);
        assert!(harmful_corpus(1, 4).lines().all(|l| l.len() >= 100));
    }

    proptest! {
        #[test]
        fn oracle_symmetry(a in "[a-c ]{0,40}", b in "[a-c ]{0,40}", k in 1usize..6) {
            prop_assert_eq!(exact_jaccard_oracle(&a, &b, k), exact_jaccard_oracle(&b, &a, k));
            prop_assert_eq!(exact_jaccard_oracle(&a, &a, k), 1.0);
        }
    }
}

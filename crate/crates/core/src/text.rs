//! Text frontend: transcripts to mono-phoneme one-hot sequences, and
//! frame-level linguistic features for the recurrent baseline.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Float;

pub const SIL: &str = "sil";
pub const WB: &str = "wb";
pub const EOS: &str = "eos";

/// Positional features appended to the one-hot phoneme identity.
pub const POSITIONAL_FEATURES: usize = 3;
/// Phoneme durations are scaled by this many frames before clamping to 1.
pub const MAX_DURATION_FRAMES: f32 = 100.0;

const DEFAULT_SYMBOLS: &[&str] = &[
    SIL, WB, EOS, "aa", "ae", "ah", "ao", "aw", "ax", "ay", "b", "ch", "d", "dh", "eh", "er",
    "ey", "f", "g", "hh", "ih", "iy", "jh", "k", "l", "m", "n", "ng", "ow", "oy", "p", "r", "s",
    "sh", "t", "th", "uh", "uw", "v", "w", "y", "z", "zh",
];

const TOY_LEXICON: &str = include_str!("../data/toy_lexicon.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for PhonemeInventory {
    type Error = Error;

    fn try_from(symbols: Vec<String>) -> Result<Self> {
        PhonemeInventory::new(symbols)
    }
}

impl From<PhonemeInventory> for Vec<String> {
    fn from(inv: PhonemeInventory) -> Self {
        inv.symbols
    }
}

impl Default for PhonemeInventory {
    fn default() -> Self {
        PhonemeInventory::new(DEFAULT_SYMBOLS.iter().map(|s| s.to_string()).collect())
            .expect("default inventory is valid")
    }
}

impl PhonemeInventory {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate inventory symbol `{s}`")));
            }
        }
        for required in [SIL, WB, EOS] {
            if !index.contains_key(required) {
                return Err(Error::Config(format!("inventory lacks `{required}`")));
            }
        }
        Ok(PhonemeInventory { symbols, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, sym: &str) -> Option<usize> {
        self.index.get(sym).copied()
    }

    pub fn symbol(&self, i: usize) -> &str {
        &self.symbols[i]
    }
}

/// Pronunciation dictionary, `word<TAB>ph1 ph2 ...` per line.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, prons) = line
                .split_once('\t')
                .ok_or_else(|| Error::Config(format!("lexicon line {}: missing tab", n + 1)))?;
            let phones: Vec<String> = prons.split_whitespace().map(str::to_string).collect();
            if phones.is_empty() {
                return Err(Error::Config(format!("lexicon line {}: no phonemes", n + 1)));
            }
            entries.insert(word.to_lowercase(), phones);
        }
        Ok(Lexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled open lexicon covering the toy corpus vocabulary.
    pub fn toy() -> Self {
        Self::parse(TOY_LEXICON).expect("bundled lexicon parses")
    }

    pub fn insert(&mut self, word: &str, phones: &[&str]) {
        self.entries
            .insert(word.to_lowercase(), phones.iter().map(|s| s.to_string()).collect());
    }

    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Letter-to-sound fallback, one grapheme at a time.
fn grapheme_phones(c: char) -> Option<&'static [&'static str]> {
    Some(match c {
        'a' => &["ae"],
        'b' => &["b"],
        'c' => &["k"],
        'd' => &["d"],
        'e' => &["eh"],
        'f' => &["f"],
        'g' => &["g"],
        'h' => &["hh"],
        'i' => &["ih"],
        'j' => &["jh"],
        'k' => &["k"],
        'l' => &["l"],
        'm' => &["m"],
        'n' => &["n"],
        'o' => &["aa"],
        'p' => &["p"],
        'q' => &["k"],
        'r' => &["r"],
        's' => &["s"],
        't' => &["t"],
        'u' => &["ah"],
        'v' => &["v"],
        'w' => &["w"],
        'x' => &["k", "s"],
        'y' => &["y"],
        'z' => &["z"],
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeSequence {
    pub symbols: Vec<String>,
    pub ids: Vec<usize>,
    /// Characters that had no lexicon entry and no grapheme mapping.
    pub skipped_chars: usize,
}

impl PhonemeSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn one_hot<T: Float>(&self, inventory_size: usize) -> Array2<T> {
        let mut m = Array2::zeros((self.ids.len(), inventory_size));
        for (r, &i) in self.ids.iter().enumerate() {
            m[[r, i]] = T::one();
        }
        m
    }

    pub fn from_symbols(symbols: &[&str], inventory: &PhonemeInventory) -> Result<Self> {
        let ids = symbols
            .iter()
            .map(|s| {
                inventory
                    .index_of(s)
                    .ok_or_else(|| Error::UnknownSymbol(s.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhonemeSequence {
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            ids,
            skipped_chars: 0,
        })
    }
}

/// Lowercases, looks each word up in `lexicon` (falling back to graphemes),
/// inserts `wb` between words and wraps the result as `sil … eos`.
pub fn text_to_phonemes(
    text: &str,
    lexicon: &Lexicon,
    inventory: &PhonemeInventory,
) -> Result<PhonemeSequence> {
    if text.trim().is_empty() {
        return Err(Error::Empty("transcript is empty"));
    }
    let mut skipped = 0usize;
    let mut words: Vec<Vec<String>> = Vec::new();
    for raw in text.split_whitespace() {
        let word = raw
            .trim_matches(|c: char| c.is_ascii_punctuation())
            .to_lowercase();
        if word.is_empty() {
            continue;
        }
        let phones = match lexicon.lookup(&word) {
            Some(p) => p.to_vec(),
            None => {
                let mut p = Vec::new();
                for ch in word.chars() {
                    match grapheme_phones(ch) {
                        Some(ps) => p.extend(ps.iter().map(|s| s.to_string())),
                        None => skipped += 1,
                    }
                }
                p
            }
        };
        let mut kept = Vec::with_capacity(phones.len());
        for ph in phones {
            if inventory.index_of(&ph).is_some() {
                kept.push(ph);
            } else {
                skipped += 1;
            }
        }
        if !kept.is_empty() {
            words.push(kept);
        }
    }
    if words.is_empty() {
        return Err(Error::Empty("transcript has no pronounceable words"));
    }
    let mut symbols = vec![SIL.to_string()];
    for (i, w) in words.into_iter().enumerate() {
        if i > 0 {
            symbols.push(WB.to_string());
        }
        symbols.extend(w);
    }
    symbols.push(EOS.to_string());
    let ids = symbols
        .iter()
        .map(|s| inventory.index_of(s).expect("filtered above"))
        .collect();
    Ok(PhonemeSequence {
        symbols,
        ids,
        skipped_chars: skipped,
    })
}

pub fn encode_one_hot<T: Float>(symbols: &[&str], inventory: &PhonemeInventory) -> Result<Array2<T>> {
    Ok(PhonemeSequence::from_symbols(symbols, inventory)?.one_hot(inventory.len()))
}

/// Inverse of [`encode_one_hot`]: the argmax of every row.
pub fn decode_one_hot<T: Float>(one_hot: &Array2<T>, inventory: &PhonemeInventory) -> Vec<String> {
    one_hot
        .rows()
        .into_iter()
        .map(|row| {
            let i = row
                .iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                .0;
            inventory.symbol(i).to_string()
        })
        .collect()
}

/// Frame-level inputs: one-hot identity plus fraction-through-phoneme,
/// phoneme duration and fraction-through-utterance, all in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLinguisticFeatures {
    pub frames: Array2<f32>,
}

impl FrameLinguisticFeatures {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

pub fn upsample_linguistic(
    seq: &PhonemeSequence,
    durations: &[usize],
    inventory_size: usize,
) -> Result<FrameLinguisticFeatures> {
    if durations.len() != seq.len() {
        return Err(Error::Shape(format!(
            "{} durations for {} phonemes",
            durations.len(),
            seq.len()
        )));
    }
    if let Some(p) = durations.iter().position(|&d| d == 0) {
        return Err(Error::Config(format!("phoneme {p} has zero duration")));
    }
    let total: usize = durations.iter().sum();
    let dim = inventory_size + POSITIONAL_FEATURES;
    let mut frames = Array2::zeros((total, dim));
    let mut t = 0;
    for (&id, &d) in seq.ids.iter().zip(durations) {
        for k in 0..d {
            frames[[t, id]] = 1.0;
            frames[[t, inventory_size]] = if d > 1 { k as f32 / (d - 1) as f32 } else { 0.0 };
            frames[[t, inventory_size + 1]] = (d as f32 / MAX_DURATION_FRAMES).min(1.0);
            frames[[t, inventory_size + 2]] = if total > 1 {
                t as f32 / (total - 1) as f32
            } else {
                0.0
            };
            t += 1;
        }
    }
    Ok(FrameLinguisticFeatures { frames })
}

/// Lexicon and symbol inventory used to turn transcripts into model inputs.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub lexicon: Lexicon,
    pub inventory: PhonemeInventory,
}

impl Frontend {
    pub fn toy() -> Self {
        Frontend {
            lexicon: Lexicon::toy(),
            inventory: PhonemeInventory::default(),
        }
    }

    pub fn phonemize(&self, text: &str) -> Result<PhonemeSequence> {
        text_to_phonemes(text, &self.lexicon, &self.inventory)
    }
}

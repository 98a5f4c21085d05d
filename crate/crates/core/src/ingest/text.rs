//! Token dictionaries and fixed-length sentence vectors.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sentence vector length.
pub const SENTENCE_LEN: usize = 200;
/// Filler for unused positions and unknown tokens.
pub const PAD: i32 = -1;

/// Lowercases, splits on whitespace and trims non-alphanumeric characters
/// from both ends of every piece.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(|piece| {
            piece
                .to_lowercase()
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_string()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Tokens ranked by frequency. A freshly built dictionary breaks frequency
/// ties by first occurrence; updates only append, so existing ranks never
/// change.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenDictionary {
    tokens: Vec<(String, u64)>,
    index_of: HashMap<String, usize>,
}

impl TokenDictionary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn rank(&self, token: &str) -> Option<usize> {
        self.index_of.get(token).copied()
    }

    pub fn token(&self, rank: usize) -> Option<&str> {
        self.tokens.get(rank).map(|(t, _)| t.as_str())
    }

    pub fn frequency(&self, token: &str) -> Option<u64> {
        self.rank(token).map(|r| self.tokens[r].1)
    }

    /// `(token, frequency)` pairs in rank order.
    pub fn entries(&self) -> &[(String, u64)] {
        &self.tokens
    }

    fn push_ranked(&mut self, counts: Vec<(String, u64)>) {
        for (token, freq) in counts {
            self.index_of.insert(token.clone(), self.tokens.len());
            self.tokens.push((token, freq));
        }
    }

    /// Writes `rank,token,frequency` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for (rank, (token, freq)) in self.tokens.iter().enumerate() {
            wtr.write_record([rank.to_string(), token.clone(), freq.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut dict = TokenDictionary::default();
        for row in rdr.records() {
            let row = row?;
            let bad = || Error::Parse(format!("bad dictionary row {:?}", row));
            if row.len() != 3 {
                return Err(bad());
            }
            let rank: usize = row[0].parse().map_err(|_| bad())?;
            let freq: u64 = row[2].parse().map_err(|_| bad())?;
            if rank != dict.len() || dict.index_of.contains_key(&row[1]) {
                return Err(Error::Parse(format!(
                    "dictionary ranks must be dense and unique at {rank}"
                )));
            }
            dict.push_ranked(vec![(row[1].to_string(), freq)]);
        }
        Ok(dict)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(fs::File::open(path)?)
    }
}

/// Counts tokens and returns them by descending count, ties in order of
/// first appearance.
fn count_tokens<'a, I>(sentences: I, skip: &HashMap<String, usize>) -> (Vec<(String, u64)>, HashMap<String, u64>)
where
    I: IntoIterator<Item = &'a str>,
{
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut known: HashMap<String, u64> = HashMap::new();
    for s in sentences {
        for t in tokenize(s) {
            if skip.contains_key(&t) {
                *known.entry(t).or_default() += 1;
                continue;
            }
            let c = counts.entry(t.clone()).or_default();
            if *c == 0 {
                order.push(t);
            }
            *c += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = order
        .into_iter()
        .map(|t| {
            let c = counts[&t];
            (t, c)
        })
        .collect();
    // Stable sort keeps first-occurrence order among equal counts.
    ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    (ranked, known)
}

pub fn build_token_dictionary<'a, I>(sentences: I) -> TokenDictionary
where
    I: IntoIterator<Item = &'a str>,
{
    let mut dict = TokenDictionary::default();
    let (ranked, _) = count_tokens(sentences, &HashMap::new());
    dict.push_ranked(ranked);
    dict
}

/// Adds counts from `sentences`. Known tokens keep their rank; new tokens
/// are ranked after all existing ones, by frequency among themselves.
pub fn update_dictionary<'a, I>(dict: &TokenDictionary, sentences: I) -> TokenDictionary
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = dict.clone();
    let (ranked, known) = count_tokens(sentences, &out.index_of);
    for (token, extra) in known {
        let r = out.index_of[&token];
        out.tokens[r].1 += extra;
    }
    out.push_ranked(ranked);
    out
}

/// Token ranks of a sentence, truncated or padded with [`PAD`] to a fixed
/// length. Unknown tokens also become [`PAD`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceVector {
    pub values: Vec<i32>,
    /// Tokens absent from the dictionary.
    pub unknown: usize,
}

impl SentenceVector {
    pub fn to_features(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

pub fn vectorize_sentence(dict: &TokenDictionary, sentence: &str, len: usize) -> SentenceVector {
    let mut values = Vec::with_capacity(len);
    let mut unknown = 0;
    for token in tokenize(sentence).into_iter().take(len) {
        match dict.rank(&token) {
            Some(r) => values.push(i32::try_from(r).unwrap_or(i32::MAX)),
            None => {
                unknown += 1;
                values.push(PAD);
            }
        }
    }
    values.resize(len, PAD);
    SentenceVector { values, unknown }
}

/// Aligned sentence pairs with one dictionary per side.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCorpus {
    pub pairs: Vec<(String, String)>,
    pub source_dict: TokenDictionary,
    pub target_dict: TokenDictionary,
}

impl PairCorpus {
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Self {
        let source_dict = build_token_dictionary(pairs.iter().map(|(s, _)| s.as_str()));
        let target_dict = build_token_dictionary(pairs.iter().map(|(_, t)| t.as_str()));
        PairCorpus {
            pairs,
            source_dict,
            target_dict,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect())
}

/// Reads two line-aligned UTF-8 files; line `i` of each forms pair `i`.
pub fn load_parallel_corpus(source_path: impl AsRef<Path>, target_path: impl AsRef<Path>) -> Result<PairCorpus> {
    let sources = read_lines(source_path.as_ref())?;
    let targets = read_lines(target_path.as_ref())?;
    if sources.len() != targets.len() {
        return Err(Error::LineCountMismatch {
            source_lines: sources.len(),
            target_lines: targets.len(),
        });
    }
    Ok(PairCorpus::from_pairs(sources.into_iter().zip(targets).collect()))
}

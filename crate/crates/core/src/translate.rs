//! Retrieval "translation": a source sentence is answered with the target
//! sides of the nearest stored source sentences.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{load_index, save_index, BuildConfig, InsertOutcome, SomTreeIndex};
use crate::ingest::{update_dictionary, vectorize_sentence, PairCorpus, TokenDictionary, SENTENCE_LEN};
use crate::query::QueryParams;
use crate::record::Record;

/// Target sentences offered for one input, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub alternatives: Vec<Alternative>,
    pub rejected: bool,
    pub unknown_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub similarity: f64,
    pub pair_id: u64,
    pub target: String,
}

/// A source-side index whose records carry their target sentence as payload,
/// plus the source dictionary used to vectorize queries.
#[derive(Debug, Clone)]
pub struct Translator {
    source_dict: TokenDictionary,
    index: SomTreeIndex,
    sentence_len: usize,
}

fn dictionary_path(index_path: &Path) -> PathBuf {
    let mut name = index_path.as_os_str().to_owned();
    name.push(".dict.csv");
    PathBuf::from(name)
}

impl Translator {
    pub fn build(corpus: &PairCorpus, config: BuildConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let records = corpus
            .pairs
            .iter()
            .enumerate()
            .map(|(i, (source, target))| {
                let v = vectorize_sentence(&corpus.source_dict, source, SENTENCE_LEN);
                Record::new(i as u64, v.to_features()).with_payload(target.as_bytes())
            })
            .collect();
        Ok(Translator {
            source_dict: corpus.source_dict.clone(),
            index: SomTreeIndex::build(records, config)?,
            sentence_len: SENTENCE_LEN,
        })
    }

    pub fn index(&self) -> &SomTreeIndex {
        &self.index
    }

    pub fn source_dict(&self) -> &TokenDictionary {
        &self.source_dict
    }

    /// Up to `n_alternatives` targets ordered by descending similarity.
    pub fn translate(
        &self,
        sentence: &str,
        n_alternatives: usize,
        min_similarity: f64,
        beam: usize,
    ) -> Result<Translation> {
        let v = vectorize_sentence(&self.source_dict, sentence, self.sentence_len);
        let params = QueryParams::new(n_alternatives, beam).with_min_similarity(min_similarity);
        let result = self.index.search(&v.to_features(), &params)?;
        let alternatives = result
            .neighbors
            .iter()
            .map(|n| {
                let payload = self
                    .index
                    .record(n.record_id)
                    .and_then(|r| r.payload.as_deref())
                    .unwrap_or_default();
                Alternative {
                    similarity: n.similarity,
                    pair_id: n.record_id,
                    target: String::from_utf8_lossy(payload).into_owned(),
                }
            })
            .collect();
        Ok(Translation {
            alternatives,
            rejected: result.rejected,
            unknown_tokens: v.unknown,
        })
    }

    /// Learns a new pair without rebuilding: the source dictionary is
    /// extended (existing ranks stay put) and the vector is inserted.
    pub fn add_pair(&mut self, source: &str, target: &str, tau_new: f64) -> Result<InsertOutcome> {
        let dict = update_dictionary(&self.source_dict, [source]);
        let v = vectorize_sentence(&dict, source, self.sentence_len);
        let id = self.index.records().iter().map(|r| r.id).max().map_or(0, |m| m + 1);
        let outcome = self.index.insert(
            Record::new(id, v.to_features()).with_payload(target.as_bytes()),
            tau_new,
        )?;
        self.source_dict = dict;
        Ok(outcome)
    }

    /// Writes the index to `path` and the source dictionary next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_index(&self.index, path.as_ref())?;
        self.source_dict.save(dictionary_path(path.as_ref()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let index = load_index(path.as_ref())?;
        let source_dict = TokenDictionary::load(dictionary_path(path.as_ref()))?;
        Ok(Translator {
            source_dict,
            sentence_len: index.dim(),
            index,
        })
    }
}

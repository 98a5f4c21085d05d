//! Dataset loaders: MNIST IDX files and aligned sentence corpora.

mod idx;
mod text;

pub use idx::{load_idx, read_idx_images, read_idx_labels, IMAGE_MAGIC, LABEL_MAGIC};
pub use text::{
    build_token_dictionary, load_parallel_corpus, tokenize, update_dictionary, vectorize_sentence, PairCorpus,
    SentenceVector, TokenDictionary, PAD, SENTENCE_LEN,
};

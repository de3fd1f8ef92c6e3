//! Corpus preparation: cleaning, score-based labelling, stratified splits,
//! k-fold plans and a synthetic keyword corpus.

mod corpus;
mod normalize;
mod split;
mod synth;

pub use corpus::{derive_polarity, ingest, CorpusRecord, IngestSummary, RawRow};
pub use normalize::{is_decimal_digit, is_emoji, normalize, normalize_bytes};
pub use split::{kfold_plan, split, stratified_folds, stratified_split, stratum_of, FoldPlan, Split, StratumKey};
pub use synth::{synth_corpus, SynthLexicon, SynthSpec};

//! Synthetic benchmark: corrupted text-centre maps, the detection pipeline
//! variants, pooled scoring and ablation sweeps.

pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod pipeline;
pub mod synth;

pub use corpus::{load_corpus, save_corpus, CORPUS_MANIFEST};
pub use eval::{evaluate, DetectionReport, MATCH_IOU};
pub use experiment::{
    ablation_sweep, closing_samples, evaluate_variant, generate_splits, opening_samples, sweep_csv, train_blocks, BlockSet, BlockShape,
    SweepConfig, SweepRow, SweepTarget, CLOSING_NAME, OPENING_NAME, SWEEP_CSV_HEADER,
};
pub use pipeline::{variant, Pipeline, Stage, Variant, VARIANTS};
pub use synth::{generate, Corpus, Span, SynthConfig, SynthSample, MIN_NOISE_CLEARANCE};

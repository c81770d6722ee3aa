//! End-to-end glue: corpus IO, pseudo-depth, synthetic data, annotation
//! caching, training and protocol evaluation.

pub mod annotate;
pub mod evaluate;
pub mod io;
pub mod pseudo;
pub mod synth;
pub mod train;

pub use annotate::{annotate_corpus, annotate_sample, load_labels};
pub use evaluate::{
    evaluate_scores, evaluate_with_model, score_corpus, Protocol, ProtocolOutcome, ScoreRecord,
};
pub use io::{export_corpus, ingest, read_depth, write_depth, ManifestEntry};
pub use pseudo::{attach_pseudo_depth, pseudo_depth};
pub use synth::{generate_synthetic, synth_corpus, MixSpec};
pub use train::{
    batch_loss_and_grads, prediction_to_map, run_training, score_samples, train_model,
    EpochLog, TrainConfig, TrainJob, TrainLog, TrainOutcome,
};

//! Out-of-context image/caption detection with phrase-level explanations.
//!
//! Captions are split into phrases, each phrase gets a latent veracity
//! variable, and the caption verdict is tied to the phrase verdicts by a
//! soft conjunction: a caption is pristine only if all of its phrases are.
//! The model works on precomputed image/text embeddings, so any
//! vision-language backbone can feed it.
//!
//! Module map:
//! - [`prob`]: two-outcome distributions and KL.
//! - [`chunker`]: rule-based phrase extraction.
//! - [`dataset`], [`synth`]: JSONL instances and the planted-culprit benchmark.
//! - [`model`]: prior, posterior and predictor heads.
//! - [`logic`]: product t-norm teacher and distillation loss.
//! - [`loss`], [`train`], [`gradcheck`]: objectives, Adam loop, gradient checks.
//! - [`infer`]: iterative decoding.
//! - [`eval`], [`report`]: metrics, λ sweeps and culprit reports.

pub mod checkpoint;
pub mod chunker;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod infer;
pub mod logic;
pub mod loss;
pub mod model;
pub mod prob;
pub mod report;
pub mod seed;
pub mod synth;
pub mod train;

pub use chunker::{chunk, load_prechunked, ChunkLexicon, PhraseKind, PhraseSet, PhraseSpan};
pub use config::{ModelConfig, RunConfig};
pub use dataset::{read_dataset, write_dataset, DatasetRecord, Instance};
pub use error::{Error, Result};
pub use eval::{evaluate, score, sweep, MetricsReport, PhraseMetrics, SweepRow};
pub use gradcheck::{grad_check, grad_check_with, Coverage, GradCheckReport};
pub use infer::{decode, decode_batch, DecodeConfig, DecodeResult, DecodeTrace};
pub use logic::{aggregate, hard_aggregate, logic_loss, TeacherDist};
pub use loss::{elbo_loss, enumerate_expectation, final_loss, logic_path_loss, LossParts, LossWeights, Teacher};
pub use model::{build_features, init_params, posterior_q, predict_p, prior, prior_phrase, FeatureBundle, ModelParams};
pub use prob::{clamp_prob, kl_bernoulli, Label, VeracityDist};
pub use report::{render_report, ReportFormat};
pub use synth::{generate_dataset, SynthConfig, SyntheticDataset};
pub use train::{train, TrainConfig, TrainReport};

//! Pointer-network discourse parser.
//!
//! Tokens are embedded by a pluggable backbone (in sliding windows for long
//! documents), pooled into EDU vectors, contextualized by a bidirectional
//! GRU and projected together with boundary token vectors. A GRU decoder
//! then splits spans top-down by pointing at split positions, and a
//! bi-affine classifier labels every split with a joint relation and
//! nuclearity label.

pub mod backbone;
pub mod checkpoint;
pub mod classifier;
pub mod encoder;
pub mod gru;
pub mod hyper;
pub mod params;
pub mod parser;
pub mod pointer;
pub mod tape;
pub mod window;

pub use backbone::{
    BackboneSpec, EmbeddingBackbone, LayerPolicy, PretrainedBackbone, ToyBackbone,
    PRETRAINED_VECTORS_ENV,
};
pub use checkpoint::CHECKPOINT_FORMAT;
pub use classifier::Classifier;
pub use encoder::{EncodedDocument, Encoder};
pub use hyper::Hyperparams;
pub use params::{Gradients, Init, ParamId, ParamStore, Tensor};
pub use parser::{Decoded, LabelVocab, LossBreakdown, Parser};
pub use pointer::{pointer_scores, Decoder};
pub use tape::{Tape, Var};
pub use window::{encode_tokens, window_starts};

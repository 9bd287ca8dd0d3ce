//! Video captioners used as observers: a Transformer over one feature
//! stream and a Bi-Modal Transformer over two.

mod bleu;
mod features;
mod layers;
mod model;
mod synthetic;
mod train;

pub use bleu::{bleu, bleu_tokens};
pub use features::{feature_path, list_feature_videos, load_video_features, FeatureStack, Modality, VideoFeatures};
pub use layers::{
    feed_forward, multi_head_attention, multi_head_attention_with_weights, positional_encoding,
    positional_encoding_matrix, scaled_dot_product_attention, self_attention, AttentionWeights, FeedForwardWeights,
    MultiHeadWeights,
};
pub use model::{
    smoothed_targets, Architecture, AttentionRecord, CaptionExample, Captioner, CaptionerConfig, EncodedVideo,
};
pub use synthetic::{cluster_stack, synthetic_caption_corpus, template_caption};
pub use train::{
    build_caption_vocabulary, encode_corpus, evaluate_bleu, train_captioner, EpochRecord, Monitor, TrainSchedule,
    TrainedCaptioner, TrainingHistory,
};

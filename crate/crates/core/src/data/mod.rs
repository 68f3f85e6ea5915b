//! Datasets of the three experiments and their file formats.

pub mod frames;
pub mod idx;
pub mod metrics;
pub mod pgm;
pub mod sentiment;
pub mod sum;

pub use frames::{gen_moving_frames, load_frames, save_frames, split_train_predict, FrameSequence, MovingDigits};
pub use idx::load_idx;
pub use metrics::{per_frame_mse, sequence_accuracy};
pub use sentiment::{load_sentiment, preprocess, SentimentSample};
pub use sum::{gen_sum_dataset, load_sums, one_hot, write_sums, SumSample};

//! Reveal predictor: a convolutional encoder/decoder with skip connections
//! and an action branch, its loss, optimizer, training loop and metric.

mod checkpoint;
mod gradcheck;
mod loss;
mod metrics;
mod net;
mod ops;
mod optim;
mod predict;
mod tensor;
mod train;

pub use checkpoint::{decode_params, encode_params, load_params, save_params};
pub use gradcheck::{check_gradients, TensorCheck};
pub use loss::{batch_loss, bce, huber, sigmoid, LossConfig, LossOut};
pub use metrics::average_precision;
pub use net::{
    backward, forward, Ablation, ArchConfig, Batch, Forward, ModelParams, ENDPOINT_SCALE, HEIGHT_SCALE, RGB_SCALE,
};
pub use optim::{Adam, AdamConfig};
pub use predict::{predict_reveal, predict_reveal_batch, predict_samples};
pub use tensor::{Scalar, Tensor};
pub use train::{
    evaluate_ap, logits, loss_and_grad, loss_and_grad_sharded, train, train_dataset, EpochStats, TrainConfig,
    TrainHistory, INFER_CHUNK,
};

//! The two networks: Pixels2Depth (histogram to 32x32 depth, 3D convolutions) and
//! Depth2Pose (depth to joint confidence maps and part affinity fields, 2D convolutions),
//! with training, inference, int8 weight quantization and the model file.

mod arch;
mod file;
mod model;
mod quant;
mod train;

pub use arch::{ArchSpec, Kind, HEATMAP_CHANNELS, MAP_SIZE, PAF_CHANNELS, REFINEMENT_STAGES};
pub use file::{
    decode_model, encode_model, load_model, save_model, StoredModel, MODEL_MAGIC, MODEL_VERSION,
};
pub use model::{
    build_depth2pose, build_pixels2depth, depth_input, histogram_input, infer_depth,
    infer_depth_batch, infer_pose_maps, infer_pose_maps_batch, Model, PoseMaps,
};
pub use quant::{quantize_tensor, quantize_weights, QuantizedModel, QuantizedTensor};
pub use train::{
    depth_examples, evaluate_loss, pose_examples, train, EpochLog, Examples, TrainConfig,
    TrainReport,
};

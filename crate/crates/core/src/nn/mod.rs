//! Small CPU tensor engine: convolutions, resampling, loss and Adam, each with an
//! analytic backward pass that can be checked against finite differences.

mod adam;
mod conv;
mod gradcheck;
mod graph;
mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState, Parameter};
pub use conv::{
    conv2d, conv2d_backward, conv3d, conv3d_backward, conv_backward, conv_forward, ConvGeometry,
    ConvGrads,
};
pub use gradcheck::{finite_difference_check, random_tensor, GradCheckConfig, GradCheckReport};
pub use graph::{Activations, Gradients, Graph, Node};
pub use ops::{
    concat_channels, mse_loss, relu, relu_backward, split_channels, upsample_bilinear_2x,
    upsample_bilinear_2x_backward,
};
pub use tensor::{Float, Tensor};

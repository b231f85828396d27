//! Operator networks and the linear kernel-quadrature constructions they
//! generalise.

pub mod belnet;
pub mod conv;
pub mod don;
pub mod gradcheck;
pub mod linear;
pub mod mlp;
pub mod model;
pub mod sample;

pub use belnet::{
    burgers_belnet_spec, burgers_query_map, elliptic_belnet_spec, unit_square_map, BelNet, BelNetSpec, CoefficientMap,
    MixingLayer, ProjectionNet,
};
pub use conv::{circular_conv_equivalence, direct_circular_convolution, factored_circular_convolution};
pub use don::{burgers_don_spec, elliptic_don_spec, Don, DonSpec};
pub use linear::{linear_kernel_apply, quadrature_weights, SeparableKernel};
pub use mlp::{Activation, CoordinateMap, Mlp, MlpSpec};
pub use model::{count_parameters, BatchOutput, Model, ModelSpec, OperatorModel};
pub use sample::{OperatorSample, PointSet, SensorSet};

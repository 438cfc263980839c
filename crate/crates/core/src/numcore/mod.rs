//! Numeric substrate: parameter vectors, small MLPs with exact derivatives,
//! seeded random streams, finite differences and checkpoint I/O.

pub mod checkpoint;
pub mod fd;
pub mod mlp;
pub mod params;
pub mod rng;
pub mod vecops;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use fd::{finite_diff_grad, finite_diff_jacobian};
pub use mlp::{mlp_backward, mlp_forward, mlp_jvp, sigmoid, Activation, Mlp, MlpSpec};
pub use params::{LayerShape, ShapedParams};
pub use rng::{stream_id, RngStream};

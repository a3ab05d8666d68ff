//! Trainable dilation/erosion layers and the blocks built from them.

pub mod block;
pub mod checkpoint;
pub mod kernel;
pub mod layer;
pub mod se;

pub use block::{BlockTrace, MorphBlock, Readout, DMCL_LAYERS, DMCL_SE, DMOP_LAYERS, DMOP_SE, READOUT_GAIN};
pub use checkpoint::{load_checkpoint, save_checkpoint, MANIFEST_NAME};
pub use kernel::{apply, dilate, erode, route_backward, ArgCache, MorphKind, Region};
pub use layer::MorphLayer;
pub use se::StructElem;

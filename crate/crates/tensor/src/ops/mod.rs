mod conv;
mod elementwise;
pub(crate) mod matmul;
mod nn;
mod shape;

pub use conv::Conv3dSpec;

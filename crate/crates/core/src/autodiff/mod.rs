//! Dense arrays and reverse-mode differentiation.

mod array;
mod tape;

pub use array::DenseArray;
pub use tape::{Gradients, NodeId, OpKind, Tape};

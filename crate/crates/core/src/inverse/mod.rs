pub mod groups;
pub mod reduction;

pub use groups::{group_edges, GroupTable};
pub use reduction::*;
pub mod recovery;
pub use recovery::*;

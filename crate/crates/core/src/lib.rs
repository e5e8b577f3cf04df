//! LP rounding for the asymmetric traveling salesperson path problem.
//!
//! The pipeline solves the subtour-elimination LP, finds the narrow s-t
//! cuts of the optimum, reroutes the LP point so that every narrow cut is
//! crossed exactly once, samples a spanning tree by swap rounding, patches
//! it into an Eulerian multigraph with a min-cost circulation and shortcuts
//! the resulting walk into a Hamiltonian s-t path.

// Dense matrix code reads better with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod exact;
pub mod flows;
pub mod forest;
pub mod instance;
pub mod lp;
pub mod narrowcuts;
pub mod patch;
pub mod retree;
pub mod sampler;

pub use error::{Error, Result};

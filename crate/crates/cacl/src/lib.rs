//! Community-aware graph contrastive learning for social bot detection.
//!
//! The crate trains a heterogeneous graph encoder with a supervised
//! contrastive objective whose positive and negative pairs are mined from
//! detected communities: users that share a community but not a class are
//! hard negatives, users that share a class but not a community are hard
//! positives. A community-aware encoder is pretrained on link prediction
//! plus a modularity objective, and its user projection is shared with the
//! main encoder so community detection adapts as training progresses.

pub mod augment;
pub mod community;
pub mod contrast;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod numeric;
pub mod pipeline;

pub use error::{CaclError, Result};

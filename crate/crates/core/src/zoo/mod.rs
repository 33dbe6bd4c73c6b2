//! Persistent store of pretrained supernets and warm-start transfer.

pub mod index;
pub mod snet;
pub mod transfer;

pub use index::{EntryMetadata, ZooEntry, ZooIndex, INDEX_FILE, STATES_DIR, ZOO_ENV};
pub use snet::{decode_state, encode_state};
pub use transfer::{transfer_trunk, transfer_weights};

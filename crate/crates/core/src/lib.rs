//! MDS array codes with optimal repair bandwidth for any number of failed
//! nodes `h` and helpers `d`, under the cooperative repair model.
//!
//! The modules build on each other bottom-up: [`field`] arithmetic, the
//! [`grs`] erasure kernel, code construction in [`codespec`], encoding and
//! decoding in [`codec`], the two-round protocol in [`repair`], and a
//! simulated cluster in [`cluster`]. [`shard`] stores encoded files on disk.

mod error;
pub mod field;
pub mod grs;
pub mod codespec;
pub mod codec;
pub mod repair;
pub mod registry;
pub mod cluster;
pub mod shard;

pub use codec::{decode_from_columns, encode_systematic, verify_parity, CodewordArray};
pub use codespec::{concat, make_code, universal, CodeSpec, Family};
pub use error::{Error, Result};
pub use field::{Elem, Field, FieldSpec};
pub use registry::{CodeDescriptor, Registry};
pub use repair::{centralized_repair_from_round1, cooperative_repair, RepairContext, RepairMode};

/// 1-based storage node index.
pub type NodeId = usize;

//! Seeded-hash randomness extraction with weak and imperfect seeds, key
//! combining and a staged hybrid handshake built on top of it.

pub mod bits;
pub mod bootstrap;
pub mod bounds;
pub mod combiner;
pub mod entropy;
pub mod error;
pub mod extractor;
mod gf2;
pub mod handshake;
pub mod kv;
pub mod selftest;

pub use bits::BitString;
pub use entropy::{EntropyKind, Independence, SecurityLevel, SourceSpec};
pub use error::{Error, Result};
pub use extractor::{ExtractorParams, Family, SeededHash};

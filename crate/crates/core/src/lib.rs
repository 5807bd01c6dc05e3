//! Knowledge graph querying with private attributes, symbolic and neural.
//!
//! A knowledge graph store with private attribute triples, an exact query
//! engine that tags every answer as publicly derivable or privacy
//! threatening, neural query encoders (GQE, Q2B, Q2P) trained with a
//! public retrieval loss plus an adversarial privacy loss, and the
//! benchmark and evaluation machinery around them.

pub mod bench;
pub mod encoders;
pub mod eval;
pub mod kg;
pub mod numerics;
pub mod query;
pub mod symbolic;
pub mod synth;
pub mod trainer;

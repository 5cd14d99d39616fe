//! Test-side machinery: an exhaustive-enumeration optimum independent of the
//! production solve path, structural invariant checks for solved dispatches,
//! and synthetic data generators. Dev-dependency only; nothing here ships.

pub mod enumeration;
pub mod invariants;
pub mod mpsread;
pub mod synth;

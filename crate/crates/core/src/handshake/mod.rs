//! Hybrid PQC/QKD handshake with an extractor-based key schedule.

pub mod mac;
pub mod protocol;
pub mod providers;
pub mod schedule;
pub mod wire;

pub use mac::{its_mac_auth, its_mac_verify, MacKey};
pub use protocol::{
    run_handshake, AbortReason, Finals, HandshakeConfig, HandshakeResult, HandshakeState, Layout, Outcome, PartyConfig,
    Role,
};
pub use providers::{Certificate, KemKeyPair, MockKem, QkdStore, VerifyPolicy};
pub use schedule::{
    budget, budget_with, closed_form_budget, schedule_stage, KeyLengths, PenaltyRounding, ScheduleParams, StageEntropy,
};
pub use wire::{dump_transcript, Message, Tamper};

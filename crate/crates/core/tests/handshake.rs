use qlhl::handshake::{
    run_handshake, AbortReason, Certificate, HandshakeConfig, MockKem, Outcome, PartyConfig, QkdStore, Role, Tamper,
    VerifyPolicy,
};
use qlhl::SecurityLevel;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn config() -> HandshakeConfig {
    HandshakeConfig::new(32, SecurityLevel::pow2(16))
}

fn abort_of(outcome: &Outcome) -> (Role, u8, AbortReason) {
    match outcome {
        Outcome::Abort { party, message, reason } => (*party, *message, reason.clone()),
        Outcome::Success => panic!("expected an abort"),
    }
}

#[test]
fn runs_are_deterministic() {
    let (i, r) = PartyConfig::fixture_pair(11, SecurityLevel::pow2(50), 32);
    let a = run_handshake(&i, &r, &config(), None).unwrap();
    let (i, r) = PartyConfig::fixture_pair(11, SecurityLevel::pow2(50), 32);
    let b = run_handshake(&i, &r, &config(), None).unwrap();
    assert!(a.outcome.is_success());
    assert_eq!(a.wire, b.wire);
    assert_eq!(a.init_finals, b.init_finals);

    let (i, r) = PartyConfig::fixture_pair(12, SecurityLevel::pow2(50), 32);
    let c = run_handshake(&i, &r, &config(), None).unwrap();
    assert_ne!(a.init_finals.unwrap().iats, c.init_finals.unwrap().iats);
}

#[test]
fn finals_have_requested_lengths() {
    for n in [1u64, 7, 64, 200] {
        let (i, r) = PartyConfig::fixture_pair(n, SecurityLevel::pow2(40), n as usize);
        let res = run_handshake(&i, &r, &HandshakeConfig::new(n, SecurityLevel::pow2(20)), None).unwrap();
        let f = res.init_finals.expect("clean run");
        assert_eq!([f.iats.len(), f.rats.len(), f.sec_state_next.len()], [n as usize; 3]);
        if n >= 32 {
            assert_ne!(f.iats, f.rats);
        }
    }
}

#[test]
fn unknown_qkd_id_aborts_initiator() {
    // each side talks to its own store; the responder's id 1 is unknown to the initiator
    let (mut i, r) = PartyConfig::fixture_pair(3, SecurityLevel::pow2(40), 32);
    i.qkd = QkdStore::new(99, SecurityLevel::pow2(40));
    let res = run_handshake(&i, &r, &config(), None).unwrap();
    let (party, message, reason) = abort_of(&res.outcome);
    assert_eq!((party, message), (Role::Initiator, 2));
    assert!(matches!(reason, AbortReason::Provider(_)), "{reason:?}");
    assert!(res.init_finals.is_none() && res.resp_finals.is_none());
}

#[test]
fn mismatched_qkd_key_is_caught() {
    // the initiator's store holds a different key under the same id
    let (mut i, r) = PartyConfig::fixture_pair(4, SecurityLevel::pow2(40), 32);
    let budget = run_handshake(&i, &r, &config(), None)
        .unwrap()
        .layout
        .schedule
        .qkd_budget;
    let (_, r2) = PartyConfig::fixture_pair(4, SecurityLevel::pow2(40), 32);
    i.qkd = QkdStore::new(1234, SecurityLevel::pow2(40));
    i.qkd.get_key(budget as usize);
    let res = run_handshake(&i, &r2, &config(), None).unwrap();
    assert!(!res.outcome.is_success());
    assert!(res.init_finals.is_none() && res.resp_finals.is_none());
}

#[test]
fn differing_sec_state_aborts() {
    let (mut i, r) = PartyConfig::fixture_pair(5, SecurityLevel::pow2(40), 32);
    i.sec_state = i.sec_state.flip(0).unwrap();
    let res = run_handshake(&i, &r, &config(), None).unwrap();
    assert!(!res.outcome.is_success());
    assert!(res.init_finals.is_none() && res.resp_finals.is_none());
}

#[test]
fn certificate_policies() {
    let (mut i, r) = PartyConfig::fixture_pair(6, SecurityLevel::pow2(40), 32);
    let stranger = MockKem::keygen(&mut ChaCha20Rng::seed_from_u64(7));
    i.trust = VerifyPolicy::Pinned(Certificate::for_key(&stranger));
    let res = run_handshake(&i, &r, &config(), None).unwrap();
    let (party, message, reason) = abort_of(&res.outcome);
    assert_eq!(
        (party, message, reason),
        (Role::Initiator, 3, AbortReason::CertificateRejected)
    );

    i.trust = VerifyPolicy::AcceptAny;
    let res = run_handshake(&i, &r, &config(), None).unwrap();
    assert!(res.outcome.is_success());
    assert_eq!(res.init_finals, res.resp_finals);
}

#[test]
fn every_drop_aborts_without_finals() {
    let (i, r) = PartyConfig::fixture_pair(8, SecurityLevel::pow2(40), 32);
    for message in 1..=8u8 {
        let res = run_handshake(&i, &r, &config(), Some(Tamper::Drop { message })).unwrap();
        assert!(!res.outcome.is_success(), "drop m{message}");
        assert!(
            res.init_finals.is_none() && res.resp_finals.is_none(),
            "drop m{message}"
        );
    }
}

#[test]
fn transcript_records_all_messages() {
    let (i, r) = PartyConfig::fixture_pair(9, SecurityLevel::pow2(40), 32);
    let res = run_handshake(&i, &r, &config(), None).unwrap();
    assert_eq!(res.initiator.transcript.len(), 8);
    assert_eq!(res.responder.transcript.len(), 8);
    assert_eq!(res.initiator.consumed_qkd, res.layout.schedule.qkd_budget);
    let kv = res.to_kv().to_string();
    assert!(kv.contains("consumed_qkd="), "{kv}");
    // the wire carries no final key material
    let f = res.init_finals.unwrap();
    let wire: Vec<u8> = res.wire.concat();
    let iats = f.iats.to_bytes();
    assert!(!wire.windows(iats.len()).any(|w| w == iats.as_slice()));
}

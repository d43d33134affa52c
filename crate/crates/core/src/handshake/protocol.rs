//! Two-party handshake over an in-memory channel.
//!
//! Message flow (`{x}_K` is `x` XOR a fresh segment of `K`):
//!
//! ```text
//! I -> R  m1  pk_pq, n_I
//! R -> I  m2  c_pq, ID_qkd, n_R, s1
//! R -> I  m3  {cert_R}_RHTS
//! I -> R  m4  {c_I}_IHTS, s2
//! I -> R  m5  {cert_I}_IAHTS
//! R -> I  m6  {c_R}_RAHTS, s3
//! I -> R  m7  {IF}_IAHTS, s4          IF = MAC(fk_I, traffic3; s1..s3)
//! R -> I  m8  {RF}_RAHTS              RF = MAC(fk_R, traffic4; s1..s4)
//! ```
//!
//! `traffic_i` is the concatenated record encodings of the messages listed
//! below with every seed field emptied. A seed is public but must not feed
//! the extraction it keys, and the finish MACs authenticate all seeds
//! through a separate digest (see [`FinishKey`]).
//!
//! | view     | messages |
//! |----------|----------|
//! | traffic1 | m1..m2   |
//! | traffic2 | m1..m4   |
//! | traffic3 | m1..m6   |
//! | traffic4 | m1..m7   |
//! | traffic5 | m1..m8   |

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::mac::{finish_tag, finish_verify, FinishKey};
use super::providers::{expand, Certificate, KemKeyPair, MockKem, QkdStore, VerifyPolicy, KEM_CIPHERTEXT_BYTES};
use super::schedule::{budget_with, label, schedule_stage, KeyLengths, PenaltyRounding, ScheduleParams, StageEntropy};
use super::wire::{Message, Tamper};
use crate::bits::BitString;
use crate::bounds::BoundReport;
use crate::entropy::{EntropyKind, SecurityLevel};
use crate::error::{Error, Result};
use crate::kv::KvDoc;

const CT_BITS: usize = KEM_CIPHERTEXT_BYTES * 8;
const CERT_BITS: usize = 64;
const LABEL_BITS: u64 = 64;

/// Parameters both parties agree on before the run.
#[derive(Clone, Debug, PartialEq)]
pub struct HandshakeConfig {
    /// Length of each final key.
    pub n: u64,
    pub eps_prime: SecurityLevel,
    /// Distance of the transmitted seeds from uniform.
    pub eps_seed: SecurityLevel,
    /// MAC tag length in bits; a multiple of 8.
    pub tag_len: usize,
    pub nonce_bytes: usize,
}

impl HandshakeConfig {
    pub fn new(n: u64, eps_prime: SecurityLevel) -> Self {
        Self {
            n,
            eps_prime,
            eps_seed: SecurityLevel::PERFECT,
            tag_len: 32,
            nonce_bytes: 16,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if self.tag_len == 0 || !self.tag_len.is_multiple_of(8) || self.tag_len > 64 {
            return Err(Error::InvalidParams(format!(
                "tag length {} is not a multiple of 8 in 8..=64",
                self.tag_len
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PartyConfig {
    pub sec_state: BitString,
    pub long_term: KemKeyPair,
    pub cert: Certificate,
    /// How the peer's certificate is checked.
    pub trust: VerifyPolicy,
    pub rng_seed: u64,
    pub qkd: QkdStore,
}

impl PartyConfig {
    /// Matching initiator and responder configs sharing a QKD store and a
    /// `sec_state_len`-bit SecState, each pinning the other's certificate.
    pub fn fixture_pair(rng_seed: u64, eps_qkd: SecurityLevel, sec_state_len: usize) -> (PartyConfig, PartyConfig) {
        let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
        let qkd = QkdStore::new(rng.gen(), eps_qkd);
        let sec_state = BitString::random(&mut rng, sec_state_len);
        let init_kp = MockKem::keygen(&mut rng);
        let resp_kp = MockKem::keygen(&mut rng);
        let (init_cert, resp_cert) = (Certificate::for_key(&init_kp), Certificate::for_key(&resp_kp));
        let init = PartyConfig {
            sec_state: sec_state.clone(),
            long_term: init_kp,
            cert: init_cert,
            trust: VerifyPolicy::Pinned(resp_cert),
            rng_seed: rng.gen(),
            qkd: qkd.clone(),
        };
        let resp = PartyConfig {
            sec_state,
            long_term: resp_kp,
            cert: resp_cert,
            trust: VerifyPolicy::Pinned(init_cert),
            rng_seed: rng.gen(),
            qkd,
        };
        (init, resp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Initiator => "initiator",
            Role::Responder => "responder",
        })
    }
}

/// Key and seed lengths for one run, fixed by `n`, `eps'`, the tag length
/// and the (constant) record sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub schedule: ScheduleParams,
    pub tag_len: usize,
    pub nonce_bytes: usize,
    /// Bit lengths of traffic1..traffic5.
    pub traffic_bits: [usize; 5],
}

impl Layout {
    pub fn compute(cfg: &HandshakeConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let tag = cfg.tag_len;
        let nb = cfg.nonce_bytes;
        let dummy = |len: usize| BitString::zeros(len);
        // seeds do not contribute to elided views; s4 is handled separately
        let msgs = [
            m1(&[0; 8], &vec![0; nb]),
            m2(&[0; 8], 0, &vec![0; nb], &dummy(0)),
            m3(&dummy(CERT_BITS)),
            m4(&dummy(CT_BITS), &dummy(0)),
            m5(&dummy(CERT_BITS)),
            m6(&dummy(CT_BITS), &dummy(0)),
            m7(&dummy(tag), &dummy(0)),
            m8(&dummy(tag)),
        ];
        let prefix = |k: usize| -> usize { msgs[..k].iter().map(|m| elide(m).encoded_len() * 8).sum() };
        let (t1, t2, t3, t4, t5) = (prefix(2), prefix(4), prefix(6), prefix(7), prefix(8));

        let eps = cfg.eps_prime;
        let finals = [n; 3];
        let hts = |payload: usize| n.max(payload as u64);
        let draft = |fk_i: u64, fk_r: u64| {
            KeyLengths::from_array([
                finals[0],
                finals[1],
                finals[2],
                fk_i,
                fk_r,
                hts(CERT_BITS + tag),
                hts(CT_BITS + tag),
                hts(CT_BITS),
                hts(CERT_BITS),
            ])
        };
        let k3 = budget_with(n, eps, draft(1, 1), PenaltyRounding::Ceil)?.k3;
        let l4 = k3 + LABEL_BITS + t5 as u64 - 1;
        let fk_i = FinishKey::key_len(t3, tag) as u64;
        let fk_r = FinishKey::key_len(t4, tag) as u64;
        let mut schedule = budget_with(n, eps, draft(fk_i, fk_r), PenaltyRounding::Ceil)?;
        let l3 = 2 * schedule.k2 + LABEL_BITS + t3 as u64 - 1;
        let l2 = 2 * schedule.k1 + LABEL_BITS + t2 as u64 - 1;
        let l1 = 3 * schedule.qkd_budget + LABEL_BITS + t1 as u64 - 1;
        schedule.seed_lens = Some([l1, l2, l3, l4]);
        Ok(Self {
            schedule,
            tag_len: tag,
            nonce_bytes: nb,
            traffic_bits: [t1, t2, t3, t4, t5],
        })
    }

    pub fn lengths(&self) -> &KeyLengths {
        &self.schedule.lengths
    }

    pub fn seed_len(&self, stage: usize) -> usize {
        self.schedule.seed_lens.expect("seed lengths set by compute")[stage - 1] as usize
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = self.schedule.to_kv();
        doc.set("tag_len", self.tag_len);
        for (i, t) in self.traffic_bits.iter().enumerate() {
            doc.set(format!("traffic_bits.{}", i + 1), t);
        }
        doc
    }
}

fn m1(pk: &[u8; 8], nonce: &[u8]) -> Message {
    Message::new(1, vec![pk.to_vec(), nonce.to_vec()])
}

fn m2(ct: &[u8; 8], qkd_id: u64, nonce: &[u8], s1: &BitString) -> Message {
    Message::new(
        2,
        vec![
            ct.to_vec(),
            qkd_id.to_be_bytes().to_vec(),
            nonce.to_vec(),
            s1.to_bytes(),
        ],
    )
}

fn m3(enc_cert: &BitString) -> Message {
    Message::new(3, vec![enc_cert.to_bytes()])
}

fn m4(enc_ct: &BitString, s2: &BitString) -> Message {
    Message::new(4, vec![enc_ct.to_bytes(), s2.to_bytes()])
}

fn m5(enc_cert: &BitString) -> Message {
    Message::new(5, vec![enc_cert.to_bytes()])
}

fn m6(enc_ct: &BitString, s3: &BitString) -> Message {
    Message::new(6, vec![enc_ct.to_bytes(), s3.to_bytes()])
}

fn m7(enc_tag: &BitString, s4: &BitString) -> Message {
    Message::new(7, vec![enc_tag.to_bytes(), s4.to_bytes()])
}

fn m8(enc_tag: &BitString) -> Message {
    Message::new(8, vec![enc_tag.to_bytes()])
}

fn field_count(index: u8) -> usize {
    match index {
        1 | 4 | 6 | 7 => 2,
        2 => 4,
        _ => 1,
    }
}

fn seed_field(index: u8) -> Option<usize> {
    match index {
        2 => Some(3),
        4 | 6 | 7 => Some(1),
        _ => None,
    }
}

/// The message with its seed field (if any) replaced by an empty field.
fn elide(msg: &Message) -> Message {
    let mut out = msg.clone();
    if let Some(i) = seed_field(msg.index) {
        out.fields[i].clear();
    }
    out
}

/// Traffic view over the first `count` messages.
fn traffic(msgs: &[Message], count: usize) -> BitString {
    let bytes: Vec<u8> = msgs[..count].iter().flat_map(|m| elide(m).encode()).collect();
    BitString::from_byte_slice(&bytes)
}

/// Hands out consecutive disjoint segments of a key.
#[derive(Clone, Debug, Default)]
struct PadCursor {
    key: BitString,
    pos: usize,
}

impl PadCursor {
    fn new(key: BitString) -> Self {
        Self { key, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<BitString> {
        let remaining = self.key.len() - self.pos;
        if len > remaining {
            return Err(Error::PadExhausted { needed: len, remaining });
        }
        let seg = self.key.slice(self.pos, self.pos + len)?;
        self.pos += len;
        Ok(seg)
    }
}

/// Named intermediate secrets, filled in as the run progresses.
#[derive(Clone, Debug, Default)]
pub struct Intermediates {
    pub k_sec_state: Option<BitString>,
    pub k_pq: Option<BitString>,
    pub k1: Option<BitString>,
    pub ihts: Option<BitString>,
    pub rhts: Option<BitString>,
    pub k_pq_i: Option<BitString>,
    pub k2: Option<BitString>,
    pub iahts: Option<BitString>,
    pub rahts: Option<BitString>,
    pub k_pq_r: Option<BitString>,
    pub k3: Option<BitString>,
    pub fk_i: Option<BitString>,
    pub fk_r: Option<BitString>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Finals {
    pub iats: BitString,
    pub rats: BitString,
    pub sec_state_next: BitString,
    /// Distance from uniform: `eps_qkd + sum_i (eps_seed + eps')`.
    pub eps: SecurityLevel,
    pub kind: EntropyKind,
}

#[derive(Clone, Debug)]
pub struct HandshakeState {
    pub role: Role,
    pub sec_state: BitString,
    pub long_term: KemKeyPair,
    pub cert: Certificate,
    /// Messages in protocol order as this party sent or received them.
    pub transcript: Vec<Message>,
    pub intermediate: Intermediates,
    pub finals: Option<Finals>,
    pub consumed_qkd: u64,
    /// Bound reports of the stages run so far.
    pub stage_reports: Vec<BoundReport>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AbortReason {
    MacFailure,
    CertificateRejected,
    Malformed(String),
    ChannelLoss,
    Provider(String),
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::MacFailure => f.write_str("mac-failure"),
            AbortReason::CertificateRejected => f.write_str("certificate-rejected"),
            AbortReason::Malformed(m) => write!(f, "malformed ({m})"),
            AbortReason::ChannelLoss => f.write_str("channel-loss"),
            AbortReason::Provider(m) => write!(f, "provider ({m})"),
        }
    }
}

impl From<Error> for AbortReason {
    fn from(e: Error) -> Self {
        match e {
            Error::Format(_) | Error::Parse(_) | Error::LengthMismatch { .. } => AbortReason::Malformed(e.to_string()),
            other => AbortReason::Provider(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Abort {
        party: Role,
        /// Message being processed when the party gave up; 0 for channel loss.
        message: u8,
        reason: AbortReason,
    },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Success => f.write_str("success"),
            Outcome::Abort { party, message, reason } => write!(f, "abort by {party} at m{message}: {reason}"),
        }
    }
}

struct Party<'a> {
    hs: &'a HandshakeConfig,
    layout: &'a Layout,
    trust: VerifyPolicy,
    qkd: QkdStore,
    eps_qkd: SecurityLevel,
    rng: ChaCha20Rng,
    state: HandshakeState,
    ephemeral: Option<KemKeyPair>,
    /// s1..s4 as sent or received.
    seeds: Vec<BitString>,
    k_qkd: Option<BitString>,
    pads: [PadCursor; 4],
    expect: u8,
}

const IHTS: usize = 0;
const RHTS: usize = 1;
const IAHTS: usize = 2;
const RAHTS: usize = 3;

type Step = std::result::Result<Vec<Message>, AbortReason>;

impl<'a> Party<'a> {
    fn new(role: Role, cfg: &PartyConfig, hs: &'a HandshakeConfig, layout: &'a Layout) -> Self {
        Self {
            hs,
            layout,
            trust: cfg.trust,
            qkd: cfg.qkd.clone(),
            eps_qkd: cfg.qkd.eps(),
            rng: ChaCha20Rng::seed_from_u64(cfg.rng_seed),
            state: HandshakeState {
                role,
                sec_state: cfg.sec_state.clone(),
                long_term: cfg.long_term.clone(),
                cert: cfg.cert,
                transcript: Vec::with_capacity(8),
                intermediate: Intermediates::default(),
                finals: None,
                consumed_qkd: 0,
                stage_reports: Vec::with_capacity(4),
            },
            ephemeral: None,
            seeds: Vec::with_capacity(4),
            k_qkd: None,
            pads: Default::default(),
            expect: 1,
        }
    }

    fn lens(&self) -> &KeyLengths {
        self.layout.lengths()
    }

    fn nonce(&mut self) -> Vec<u8> {
        let mut n = vec![0u8; self.hs.nonce_bytes];
        self.rng.fill(n.as_mut_slice());
        n
    }

    fn seed(&mut self, stage: usize) -> BitString {
        BitString::random(&mut self.rng, self.layout.seed_len(stage))
    }

    fn seed_refs(&self, count: usize) -> Vec<&BitString> {
        self.seeds[..count].iter().collect()
    }

    fn record(&mut self, msg: &Message) {
        self.state.transcript.push(msg.clone());
    }

    fn traffic(&self, view: usize) -> BitString {
        let t = traffic(&self.state.transcript, [2, 4, 6, 7, 8][view - 1]);
        debug_assert_eq!(t.len(), self.layout.traffic_bits[view - 1]);
        t
    }

    fn f(key: &[u8], label_index: u8, traffic: &BitString, out_bits: u64) -> BitString {
        let mut ctx = label(label_index).to_bytes();
        ctx.extend(traffic.to_bytes());
        expand(key, &ctx, out_bits as usize)
    }

    fn entropy(&self, stage: usize, hmin: u64) -> StageEntropy {
        let eps_input = match stage {
            1 => self.eps_qkd,
            _ => self.state.stage_reports[stage - 2].out_eps,
        };
        StageEntropy {
            hmin_input: hmin as f64,
            eps_input,
            eps_seed: self.hs.eps_seed,
            eps_hash: self.hs.eps_prime,
        }
    }

    /// Only the ITS key (`k_qkd` in stage 1, the previous `k_i` after) counts
    /// towards the input's min-entropy.
    fn stage(
        &mut self,
        stage: usize,
        keys: &[&BitString],
        traffic: &BitString,
        seed: &BitString,
        out: [u64; 3],
    ) -> Result<Vec<BitString>> {
        let hmin = match stage {
            1 => keys[1].len() as u64,
            _ => keys[0].len() as u64,
        };
        let entropy = self.entropy(stage, hmin);
        let label_index = [3u8, 5, 7, 8][stage - 1];
        let out_lens = out.map(|l| l as usize);
        let res = schedule_stage(
            stage as u8,
            keys,
            &label(label_index),
            traffic,
            seed,
            &out_lens,
            &entropy,
        )?;
        self.state.stage_reports.push(res.report);
        Ok(res.keys)
    }

    fn stage1(&mut self, ss_pq: &[u8], s1: &BitString) -> Result<()> {
        let t1 = self.traffic(1);
        let qkd_len = self.layout.schedule.qkd_budget;
        let k_sec = Self::f(&self.state.sec_state.to_bytes(), 1, &t1, qkd_len);
        let k_pq = Self::f(ss_pq, 2, &t1, qkd_len);
        let k_qkd = self.k_qkd.take().expect("qkd key obtained before stage 1");
        let l = *self.lens();
        let out = self.stage(
            1,
            &[&k_pq, &k_qkd, &k_sec],
            &t1,
            s1,
            [self.layout.schedule.k1, l.ihts, l.rhts],
        )?;
        let im = &mut self.state.intermediate;
        im.k_sec_state = Some(k_sec);
        im.k_pq = Some(k_pq);
        self.pads[IHTS] = PadCursor::new(out[1].clone());
        self.pads[RHTS] = PadCursor::new(out[2].clone());
        let [k1, ihts, rhts]: [BitString; 3] = out.try_into().expect("three outputs");
        im.k1 = Some(k1);
        im.ihts = Some(ihts);
        im.rhts = Some(rhts);
        Ok(())
    }

    fn stage2(&mut self, ss_i: &[u8], s2: &BitString) -> Result<()> {
        let t2 = self.traffic(2);
        let k1 = self.state.intermediate.k1.clone().expect("stage 1 done");
        let k_pq_i = Self::f(ss_i, 4, &t2, k1.len() as u64);
        let l = *self.lens();
        let out = self.stage(2, &[&k1, &k_pq_i], &t2, s2, [self.layout.schedule.k2, l.iahts, l.rahts])?;
        self.pads[IAHTS] = PadCursor::new(out[1].clone());
        self.pads[RAHTS] = PadCursor::new(out[2].clone());
        let [k2, iahts, rahts]: [BitString; 3] = out.try_into().expect("three outputs");
        let im = &mut self.state.intermediate;
        im.k_pq_i = Some(k_pq_i);
        im.k2 = Some(k2);
        im.iahts = Some(iahts);
        im.rahts = Some(rahts);
        Ok(())
    }

    fn stage3(&mut self, ss_r: &[u8], s3: &BitString) -> Result<()> {
        let t3 = self.traffic(3);
        let k2 = self.state.intermediate.k2.clone().expect("stage 2 done");
        let k_pq_r = Self::f(ss_r, 6, &t3, k2.len() as u64);
        let l = *self.lens();
        let out = self.stage(3, &[&k2, &k_pq_r], &t3, s3, [self.layout.schedule.k3, l.fk_i, l.fk_r])?;
        let [k3, fk_i, fk_r]: [BitString; 3] = out.try_into().expect("three outputs");
        let im = &mut self.state.intermediate;
        im.k_pq_r = Some(k_pq_r);
        im.k3 = Some(k3);
        im.fk_i = Some(fk_i);
        im.fk_r = Some(fk_r);
        Ok(())
    }

    fn stage4(&mut self, s4: &BitString) -> Result<()> {
        let t5 = self.traffic(5);
        let k3 = self.state.intermediate.k3.clone().expect("stage 3 done");
        let l = *self.lens();
        let out = self.stage(4, &[&k3], &t5, s4, [l.iats, l.rats, l.sec_state_next])?;
        let eps = self.state.stage_reports[3].out_eps;
        let [iats, rats, sec_state_next]: [BitString; 3] = out.try_into().expect("three outputs");
        self.state.finals = Some(Finals {
            iats,
            rats,
            sec_state_next,
            eps,
            kind: EntropyKind::SmoothMinEntropy,
        });
        Ok(())
    }

    fn finish_key(&self, which: Role, msg_len: usize) -> Result<FinishKey> {
        let im = &self.state.intermediate;
        let bits = match which {
            Role::Initiator => im.fk_i.as_ref(),
            Role::Responder => im.fk_r.as_ref(),
        }
        .expect("stage 3 done");
        FinishKey::from_bits(bits, msg_len, self.layout.tag_len)
    }

    fn verify_cert(&self, bits: &BitString) -> std::result::Result<Certificate, AbortReason> {
        let cert = Certificate {
            blob: bits.to_bytes().try_into().expect("64-bit certificate"),
        };
        if self.trust.verify(&cert) {
            Ok(cert)
        } else {
            Err(AbortReason::CertificateRejected)
        }
    }

    fn start(&mut self) -> Step {
        let eph = MockKem::keygen(&mut self.rng);
        let nonce = self.nonce();
        let msg = m1(&eph.pk, &nonce);
        self.ephemeral = Some(eph);
        self.record(&msg);
        self.expect = 2;
        Ok(vec![msg])
    }

    fn receive(&mut self, wire: &[u8]) -> Step {
        let index = self.expect;
        let msg = Message::decode(wire, index, field_count(index))?;
        let out = match (self.state.role, index) {
            (Role::Responder, 1) => self.on_m1(msg)?,
            (Role::Initiator, 2) => self.on_m2(msg)?,
            (Role::Initiator, 3) => self.on_m3(msg)?,
            (Role::Responder, 4) => self.on_m4(msg)?,
            (Role::Responder, 5) => self.on_m5(msg)?,
            (Role::Initiator, 6) => self.on_m6(msg)?,
            (Role::Responder, 7) => self.on_m7(msg)?,
            (Role::Initiator, 8) => self.on_m8(msg)?,
            _ => {
                return Err(AbortReason::Malformed(format!(
                    "{} does not expect m{index}",
                    self.state.role
                )))
            }
        };
        self.expect = match out.last() {
            Some(m) => m.index + 1,
            None => index + 1,
        };
        Ok(out)
    }

    fn on_m1(&mut self, msg: Message) -> Step {
        let pk = msg.field_array::<8>(0)?;
        if msg.fields[1].len() != self.hs.nonce_bytes {
            return Err(AbortReason::Malformed("m1 nonce length".into()));
        }
        self.record(&msg);
        let (ct, ss_pq) = MockKem::encaps(&pk, &mut self.rng);
        let (k_qkd, id) = self.qkd.get_key(self.layout.schedule.qkd_budget as usize);
        self.state.consumed_qkd = k_qkd.len() as u64;
        self.k_qkd = Some(k_qkd);
        let nonce = self.nonce();
        let s1 = self.seed(1);
        self.seeds.push(s1.clone());
        let reply2 = m2(&ct, id, &nonce, &s1);
        self.record(&reply2);
        self.stage1(&ss_pq, &s1)?;
        let enc = self.state.cert.blob;
        let enc = BitString::from_byte_slice(&enc).xor(&self.pads[RHTS].take(CERT_BITS)?)?;
        let reply3 = m3(&enc);
        self.record(&reply3);
        Ok(vec![reply2, reply3])
    }

    fn on_m2(&mut self, msg: Message) -> Step {
        let ct = msg.field_array::<8>(0)?;
        let id = u64::from_be_bytes(msg.field_array::<8>(1)?);
        if msg.fields[2].len() != self.hs.nonce_bytes {
            return Err(AbortReason::Malformed("m2 nonce length".into()));
        }
        let s1 = msg.field_bits(3, self.layout.seed_len(1))?;
        self.seeds.push(s1.clone());
        self.record(&msg);
        let k_qkd = self.qkd.get_key_with_id(id)?;
        if k_qkd.len() as u64 != self.layout.schedule.qkd_budget {
            return Err(AbortReason::Provider(format!("qkd key {id} has {} bits", k_qkd.len())));
        }
        self.state.consumed_qkd = k_qkd.len() as u64;
        self.k_qkd = Some(k_qkd);
        let ss_pq = MockKem::decaps(self.ephemeral.as_ref().expect("m1 sent"), &ct);
        self.stage1(&ss_pq, &s1)?;
        Ok(vec![])
    }

    fn on_m3(&mut self, msg: Message) -> Step {
        let enc = msg.field_bits(0, CERT_BITS)?;
        self.record(&msg);
        let pad = self.pads[RHTS].take(CERT_BITS)?;
        let peer = self.verify_cert(&enc.xor(&pad)?)?;
        let (ct_i, ss_i) = MockKem::encaps(&peer.public_key(), &mut self.rng);
        let enc_ct = BitString::from_byte_slice(&ct_i).xor(&self.pads[IHTS].take(CT_BITS)?)?;
        let s2 = self.seed(2);
        self.seeds.push(s2.clone());
        let reply4 = m4(&enc_ct, &s2);
        self.record(&reply4);
        self.stage2(&ss_i, &s2)?;
        let enc_cert = BitString::from_byte_slice(&self.state.cert.blob).xor(&self.pads[IAHTS].take(CERT_BITS)?)?;
        let reply5 = m5(&enc_cert);
        self.record(&reply5);
        Ok(vec![reply4, reply5])
    }

    fn on_m4(&mut self, msg: Message) -> Step {
        let enc_ct = msg.field_bits(0, CT_BITS)?;
        let s2 = msg.field_bits(1, self.layout.seed_len(2))?;
        self.seeds.push(s2.clone());
        self.record(&msg);
        let ct: [u8; 8] = enc_ct
            .xor(&self.pads[IHTS].take(CT_BITS)?)?
            .to_bytes()
            .try_into()
            .expect("64 bits");
        let ss_i = MockKem::decaps(&self.state.long_term, &ct);
        self.stage2(&ss_i, &s2)?;
        Ok(vec![])
    }

    fn on_m5(&mut self, msg: Message) -> Step {
        let enc = msg.field_bits(0, CERT_BITS)?;
        self.record(&msg);
        let pad = self.pads[IAHTS].take(CERT_BITS)?;
        let peer = self.verify_cert(&enc.xor(&pad)?)?;
        let (ct_r, ss_r) = MockKem::encaps(&peer.public_key(), &mut self.rng);
        let enc_ct = BitString::from_byte_slice(&ct_r).xor(&self.pads[RAHTS].take(CT_BITS)?)?;
        let s3 = self.seed(3);
        self.seeds.push(s3.clone());
        let reply = m6(&enc_ct, &s3);
        self.record(&reply);
        self.stage3(&ss_r, &s3)?;
        Ok(vec![reply])
    }

    fn on_m6(&mut self, msg: Message) -> Step {
        let enc_ct = msg.field_bits(0, CT_BITS)?;
        let s3 = msg.field_bits(1, self.layout.seed_len(3))?;
        self.seeds.push(s3.clone());
        self.record(&msg);
        let ct: [u8; 8] = enc_ct
            .xor(&self.pads[RAHTS].take(CT_BITS)?)?
            .to_bytes()
            .try_into()
            .expect("64 bits");
        let ss_r = MockKem::decaps(&self.state.long_term, &ct);
        self.stage3(&ss_r, &s3)?;
        let t3 = self.traffic(3);
        let tag = finish_tag(&self.finish_key(Role::Initiator, t3.len())?, &t3, &self.seed_refs(3))?;
        let enc_tag = tag.xor(&self.pads[IAHTS].take(self.layout.tag_len)?)?;
        let s4 = self.seed(4);
        self.seeds.push(s4.clone());
        let reply = m7(&enc_tag, &s4);
        self.record(&reply);
        Ok(vec![reply])
    }

    fn on_m7(&mut self, msg: Message) -> Step {
        let tag_len = self.layout.tag_len;
        let enc_tag = msg.field_bits(0, tag_len)?;
        let s4 = msg.field_bits(1, self.layout.seed_len(4))?;
        self.seeds.push(s4.clone());
        let tag = enc_tag.xor(&self.pads[IAHTS].take(tag_len)?)?;
        let t3 = self.traffic(3);
        if !finish_verify(
            &self.finish_key(Role::Initiator, t3.len())?,
            &t3,
            &self.seed_refs(3),
            &tag,
        )? {
            return Err(AbortReason::MacFailure);
        }
        self.record(&msg);
        let t4 = self.traffic(4);
        let rf = finish_tag(&self.finish_key(Role::Responder, t4.len())?, &t4, &self.seed_refs(4))?;
        let reply = m8(&rf.xor(&self.pads[RAHTS].take(tag_len)?)?);
        self.record(&reply);
        self.stage4(&s4)?;
        Ok(vec![reply])
    }

    fn on_m8(&mut self, msg: Message) -> Step {
        let tag_len = self.layout.tag_len;
        let enc_tag = msg.field_bits(0, tag_len)?;
        let tag = enc_tag.xor(&self.pads[RAHTS].take(tag_len)?)?;
        let t4 = self.traffic(4);
        if !finish_verify(
            &self.finish_key(Role::Responder, t4.len())?,
            &t4,
            &self.seed_refs(4),
            &tag,
        )? {
            return Err(AbortReason::MacFailure);
        }
        self.record(&msg);
        let s4 = self.seeds[3].clone();
        self.stage4(&s4)?;
        Ok(vec![])
    }
}

#[derive(Clone, Debug)]
pub struct HandshakeResult {
    pub init_finals: Option<Finals>,
    pub resp_finals: Option<Finals>,
    pub outcome: Outcome,
    /// Records in delivery order, after any tampering.
    pub wire: Vec<Vec<u8>>,
    pub layout: Layout,
    pub initiator: HandshakeState,
    pub responder: HandshakeState,
}

impl HandshakeResult {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("outcome", &self.outcome);
        doc.set(
            "finals_equal",
            self.init_finals.is_some() && self.init_finals == self.resp_finals,
        );
        doc.set("consumed_qkd", self.initiator.consumed_qkd);
        if let Some(f) = &self.init_finals {
            doc.set("finals.eps_neg_log2", f.eps.neg_log2())
                .set("finals.kind", f.kind.as_str())
                .set("finals.iats", f.iats.to_hex())
                .set("finals.rats", f.rats.to_hex())
                .set("finals.sec_state_next", f.sec_state_next.to_hex());
        }
        doc.merge_prefixed("layout.", &self.layout.to_kv());
        doc
    }
}

/// Runs both parties to completion over a FIFO channel. `tamper` is applied
/// to the matching record as it is sent. Any abort suppresses both sides'
/// finals, including a responder that finished before the initiator failed.
pub fn run_handshake(
    init_cfg: &PartyConfig,
    resp_cfg: &PartyConfig,
    params: &HandshakeConfig,
    tamper: Option<Tamper>,
) -> Result<HandshakeResult> {
    let layout = Layout::compute(params)?;
    let mut init = Party::new(Role::Initiator, init_cfg, params, &layout);
    let mut resp = Party::new(Role::Responder, resp_cfg, params, &layout);
    let mut queue: VecDeque<(Role, Vec<u8>)> = VecDeque::new();
    let mut wire_log = Vec::new();
    let mut outcome = None;

    let enqueue = |queue: &mut VecDeque<(Role, Vec<u8>)>, to: Role, msgs: Vec<Message>| {
        for m in msgs {
            let bytes = m.encode();
            let delivered = match tamper {
                Some(t) => t.apply(m.index, bytes),
                None => Some(bytes),
            };
            if let Some(bytes) = delivered {
                queue.push_back((to, bytes));
            }
        }
    };

    let first = init.start().expect("m1 construction cannot fail");
    enqueue(&mut queue, Role::Responder, first);
    while let Some((to, bytes)) = queue.pop_front() {
        wire_log.push(bytes.clone());
        let (party, reply_to) = match to {
            Role::Initiator => (&mut init, Role::Responder),
            Role::Responder => (&mut resp, Role::Initiator),
        };
        let expected = party.expect;
        match party.receive(&bytes) {
            Ok(out) => enqueue(&mut queue, reply_to, out),
            Err(reason) => {
                outcome = Some(Outcome::Abort {
                    party: to,
                    message: expected,
                    reason,
                });
                break;
            }
        }
    }

    let outcome = match outcome {
        Some(o) => o,
        None if init.state.finals.is_some() && resp.state.finals.is_some() => Outcome::Success,
        None => Outcome::Abort {
            party: if init.state.finals.is_none() {
                Role::Initiator
            } else {
                Role::Responder
            },
            message: 0,
            reason: AbortReason::ChannelLoss,
        },
    };
    if !outcome.is_success() {
        init.state.finals = None;
        resp.state.finals = None;
    }
    Ok(HandshakeResult {
        init_finals: init.state.finals.clone(),
        resp_finals: resp.state.finals.clone(),
        outcome,
        wire: wire_log,
        initiator: init.state,
        responder: resp.state,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64) -> HandshakeConfig {
        HandshakeConfig::new(n, SecurityLevel::pow2(16))
    }

    #[test]
    fn clean_run_agrees() {
        let (i, r) = PartyConfig::fixture_pair(7, SecurityLevel::pow2(40), 64);
        let res = run_handshake(&i, &r, &params(64), None).unwrap();
        assert_eq!(res.outcome, Outcome::Success);
        let (a, b) = (res.init_finals.unwrap(), res.resp_finals.unwrap());
        assert_eq!(a, b);
        assert_eq!(a.iats.len(), 64);
        assert_ne!(a.iats, a.rats);
        assert_eq!(res.initiator.consumed_qkd, res.layout.schedule.qkd_budget);
        assert_eq!(res.wire.len(), 8);
    }

    #[test]
    fn intermediates_match() {
        let (i, r) = PartyConfig::fixture_pair(8, SecurityLevel::pow2(40), 32);
        let res = run_handshake(&i, &r, &params(32), None).unwrap();
        let (a, b) = (&res.initiator.intermediate, &res.responder.intermediate);
        assert_eq!(a.k1, b.k1);
        assert_eq!(a.k_pq_i, b.k_pq_i);
        assert_eq!(a.fk_r, b.fk_r);
        assert_eq!(res.initiator.transcript, res.responder.transcript);
    }

    #[test]
    fn layout_matches_actual_traffic() {
        let (i, r) = PartyConfig::fixture_pair(9, SecurityLevel::pow2(40), 16);
        let res = run_handshake(&i, &r, &params(16), None).unwrap();
        let t = &res.initiator.transcript;
        let bits = [
            traffic(t, 2).len(),
            traffic(t, 4).len(),
            traffic(t, 6).len(),
            traffic(t, 7).len(),
            traffic(t, 8).len(),
        ];
        assert_eq!(bits, res.layout.traffic_bits);
    }

    #[test]
    fn dropped_message_aborts() {
        let (i, r) = PartyConfig::fixture_pair(10, SecurityLevel::pow2(40), 16);
        for m in 1..=8 {
            let res = run_handshake(&i, &r, &params(16), Some(Tamper::Drop { message: m })).unwrap();
            // m2 and m4 are followed by m3 and m5 in the same flight, so the
            // receiver sees the wrong record type instead of silence
            let want_loss = !matches!(m, 2 | 4);
            match res.outcome {
                Outcome::Abort {
                    reason: AbortReason::ChannelLoss,
                    ..
                } => assert!(want_loss, "m{m}"),
                Outcome::Abort {
                    reason: AbortReason::Malformed(_),
                    ..
                } => assert!(!want_loss, "m{m}"),
                other => panic!("m{m}: {other}"),
            }
            assert!(res.init_finals.is_none() && res.resp_finals.is_none());
        }
    }

    #[test]
    fn flipped_tag_rejected() {
        let (i, r) = PartyConfig::fixture_pair(11, SecurityLevel::pow2(40), 16);
        // m7 = type(1) | len(4) | field len(4) | tag...
        let res = run_handshake(
            &i,
            &r,
            &params(16),
            Some(Tamper::FlipBit {
                message: 7,
                bit: 72 + 3,
            }),
        )
        .unwrap();
        assert_eq!(
            res.outcome,
            Outcome::Abort {
                party: Role::Responder,
                message: 7,
                reason: AbortReason::MacFailure
            }
        );
    }

    #[test]
    fn rejects_bad_tag_len() {
        let (i, r) = PartyConfig::fixture_pair(12, SecurityLevel::pow2(40), 16);
        let mut p = params(16);
        p.tag_len = 12;
        assert!(run_handshake(&i, &r, &p, None).is_err());
    }

    #[test]
    fn pad_cursor_exhausts() {
        let mut c = PadCursor::new(BitString::ones(10));
        assert_eq!(c.take(6).unwrap().len(), 6);
        assert!(matches!(
            c.take(5),
            Err(Error::PadExhausted {
                needed: 5,
                remaining: 4
            })
        ));
    }
}

//! Simulation-grade stand-ins for the post-quantum KEM, the QKD key store and
//! the computational expansion function. None of these are secure.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::bits::BitString;
use crate::entropy::SecurityLevel;
use crate::error::{Error, Result};

/// Toy Diffie-Hellman group: `Z_p^*` with `p = 2^61 - 1`.
const MODULUS: u64 = (1 << 61) - 1;
const GENERATOR: u64 = 3;

pub const KEM_PUBLIC_KEY_BYTES: usize = 8;
pub const KEM_CIPHERTEXT_BYTES: usize = 8;
pub const KEM_SHARED_SECRET_BYTES: usize = 32;

fn mul_mod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % MODULUS as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= MODULUS;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        exp >>= 1;
    }
    acc
}

fn shared_secret(element: u64) -> [u8; KEM_SHARED_SECRET_BYTES] {
    Sha256::new()
        .chain_update(b"mock-kem")
        .chain_update(element.to_be_bytes())
        .finalize()
        .into()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KemKeyPair {
    pub pk: [u8; KEM_PUBLIC_KEY_BYTES],
    sk: u64,
}

pub struct MockKem;

impl MockKem {
    pub fn keygen<R: Rng + ?Sized>(rng: &mut R) -> KemKeyPair {
        let sk = rng.gen_range(2..MODULUS - 1);
        KemKeyPair {
            pk: pow_mod(GENERATOR, sk).to_be_bytes(),
            sk,
        }
    }

    pub fn encaps<R: Rng + ?Sized>(
        pk: &[u8; KEM_PUBLIC_KEY_BYTES],
        rng: &mut R,
    ) -> ([u8; KEM_CIPHERTEXT_BYTES], [u8; KEM_SHARED_SECRET_BYTES]) {
        let r = rng.gen_range(2..MODULUS - 1);
        let ct = pow_mod(GENERATOR, r).to_be_bytes();
        let ss = shared_secret(pow_mod(u64::from_be_bytes(*pk), r));
        (ct, ss)
    }

    pub fn decaps(kp: &KemKeyPair, ct: &[u8; KEM_CIPHERTEXT_BYTES]) -> [u8; KEM_SHARED_SECRET_BYTES] {
        shared_secret(pow_mod(u64::from_be_bytes(*ct), kp.sk))
    }
}

/// Opaque certificate blob; here just the subject's long-term public key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub blob: [u8; KEM_PUBLIC_KEY_BYTES],
}

impl Certificate {
    pub fn for_key(kp: &KemKeyPair) -> Self {
        Self { blob: kp.pk }
    }

    pub fn public_key(&self) -> [u8; KEM_PUBLIC_KEY_BYTES] {
        self.blob
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyPolicy {
    /// Accept only the pinned certificate.
    Pinned(Certificate),
    AcceptAny,
}

impl VerifyPolicy {
    pub fn verify(&self, cert: &Certificate) -> bool {
        match self {
            VerifyPolicy::Pinned(anchor) => anchor == cert,
            VerifyPolicy::AcceptAny => true,
        }
    }
}

#[derive(Debug)]
struct QkdInner {
    keys: HashMap<u64, BitString>,
    next_id: u64,
    rng: ChaCha20Rng,
}

/// Shared QKD key store reachable from both ends of a link.
#[derive(Clone, Debug)]
pub struct QkdStore {
    inner: Arc<Mutex<QkdInner>>,
    eps: SecurityLevel,
}

impl QkdStore {
    pub fn new(rng_seed: u64, eps: SecurityLevel) -> Self {
        Self {
            inner: Arc::new(Mutex::new(QkdInner {
                keys: HashMap::new(),
                next_id: 1,
                rng: ChaCha20Rng::seed_from_u64(rng_seed),
            })),
            eps,
        }
    }

    /// Closeness of delivered keys to uniform.
    pub fn eps(&self) -> SecurityLevel {
        self.eps
    }

    /// Fresh key of `len` bits and its identifier.
    pub fn get_key(&self, len: usize) -> (BitString, u64) {
        let mut inner = self.inner.lock().expect("qkd store poisoned");
        let key = BitString::random(&mut inner.rng, len);
        let id = inner.next_id;
        inner.next_id += 1;
        inner.keys.insert(id, key.clone());
        (key, id)
    }

    pub fn get_key_with_id(&self, id: u64) -> Result<BitString> {
        let inner = self.inner.lock().expect("qkd store poisoned");
        inner.keys.get(&id).cloned().ok_or(Error::UnknownQkdId(id))
    }
}

/// Computational expansion of `key` under `context` to `out_bits` bits
/// (SHA-256 in counter mode). Carries computational entropy only.
pub fn expand(key: &[u8], context: &[u8], out_bits: usize) -> BitString {
    let mut out = Vec::with_capacity(out_bits.div_ceil(256) * 32);
    let mut counter = 0u32;
    while out.len() * 8 < out_bits {
        let block = Sha256::new()
            .chain_update(counter.to_be_bytes())
            .chain_update((key.len() as u64).to_be_bytes())
            .chain_update(key)
            .chain_update(context)
            .finalize();
        out.extend_from_slice(&block);
        counter += 1;
    }
    BitString::from_bytes(&out, out_bits).expect("enough bytes generated")
}

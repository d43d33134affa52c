//! One-time Wegman-Carter MAC: a Toeplitz hash of the message masked with a
//! one-time pad.
//!
//! The hash is the full Toeplitz family (seed `tag + |msg| - 1`), which is
//! XOR-universal: for any nonzero message difference every tag difference
//! occurs for exactly a `2^-tag` fraction of seeds. The identity block of the
//! modified family would let an attacker flip trailing message bits and the
//! matching tag bits without detection.

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::extractor::{ExtractorParams, SeededHash};
use crate::gf2::gf64_mul;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacKey {
    hash_seed: BitString,
    pad: BitString,
}

impl MacKey {
    pub fn new(hash_seed: BitString, pad: BitString) -> Result<Self> {
        if pad.is_empty() {
            return Err(Error::InvalidParams("MAC tag must be at least one bit".into()));
        }
        if hash_seed.len() < pad.len() {
            return Err(Error::InvalidParams(format!(
                "hash seed of {} bits cannot serve a {}-bit tag",
                hash_seed.len(),
                pad.len()
            )));
        }
        Ok(Self { hash_seed, pad })
    }

    /// Key bits needed for one `msg_len`-bit message and a `tag_len`-bit tag.
    pub fn key_len(msg_len: usize, tag_len: usize) -> usize {
        msg_len + 2 * tag_len - 1
    }

    /// Splits `bits` into hash seed followed by pad.
    pub fn from_bits(bits: &BitString, msg_len: usize, tag_len: usize) -> Result<Self> {
        let need = Self::key_len(msg_len, tag_len);
        if bits.len() != need {
            return Err(Error::LengthMismatch {
                expected: need,
                actual: bits.len(),
            });
        }
        let (hash_seed, pad) = bits.split(need - tag_len)?;
        Self::new(hash_seed, pad)
    }

    pub fn tag_len(&self) -> usize {
        self.pad.len()
    }

    /// Message length this key authenticates.
    pub fn msg_len(&self) -> usize {
        self.hash_seed.len() + 1 - self.pad.len()
    }

    pub fn hash_seed(&self) -> &BitString {
        &self.hash_seed
    }

    pub fn pad(&self) -> &BitString {
        &self.pad
    }
}

pub fn its_mac_auth(key: &MacKey, msg: &BitString) -> Result<BitString> {
    if msg.len() != key.msg_len() {
        return Err(Error::LengthMismatch {
            expected: key.msg_len(),
            actual: msg.len(),
        });
    }
    let params = ExtractorParams::regular(msg.len(), key.tag_len())?;
    let hash = SeededHash::new(params, key.hash_seed.clone())?;
    hash.extract_fast(msg)?.xor(&key.pad)
}

pub fn its_mac_verify(key: &MacKey, msg: &BitString, tag: &BitString) -> Result<bool> {
    if tag.len() != key.tag_len() {
        return Ok(false);
    }
    let want = its_mac_auth(key, msg)?;
    // fold over every bit so the comparison does not stop early
    Ok(want.iter().zip(tag.iter()).fold(true, |ok, (a, b)| ok & (a == b)))
}

/// Key bits taken by the seed digest.
pub const DIGEST_KEY_BITS: usize = 64;

/// Polynomial-evaluation hash over GF(2^64): every part is split into 64-bit
/// blocks (zero-padded) followed by a block holding its bit length, and the
/// blocks are Horner-evaluated at `r`. Two distinct inputs with `b` blocks
/// collide for at most `b` values of `r`.
pub fn poly_digest(r: u64, parts: &[&BitString]) -> u64 {
    let mut acc = 0u64;
    for part in parts {
        for chunk in part.to_bytes().chunks(8) {
            let mut block = [0u8; 8];
            block[..chunk.len()].copy_from_slice(chunk);
            acc = gf64_mul(acc ^ u64::from_be_bytes(block), r);
        }
        acc = gf64_mul(acc ^ part.len() as u64, r);
    }
    acc
}

/// Key for the handshake finish tags: a Toeplitz MAC over the traffic view
/// plus a short polynomial digest of the extractor seeds. The seeds are far
/// longer than any key the schedule can afford, so they cannot go through
/// the Toeplitz hash, whose key grows with the message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinishKey {
    mac: MacKey,
    digest_key: u64,
}

impl FinishKey {
    /// `|traffic| + 2 tag - 1 + 64`.
    pub fn key_len(traffic_len: usize, tag_len: usize) -> usize {
        MacKey::key_len(traffic_len, tag_len) + DIGEST_KEY_BITS
    }

    /// Layout: Toeplitz seed, digest point, pad.
    pub fn from_bits(bits: &BitString, traffic_len: usize, tag_len: usize) -> Result<Self> {
        if tag_len > 64 {
            return Err(Error::InvalidParams(format!(
                "finish tag of {tag_len} bits exceeds the 64-bit digest"
            )));
        }
        let need = Self::key_len(traffic_len, tag_len);
        if bits.len() != need {
            return Err(Error::LengthMismatch {
                expected: need,
                actual: bits.len(),
            });
        }
        let seed_len = traffic_len + tag_len - 1;
        let parts = bits.split_many(&[seed_len, DIGEST_KEY_BITS, tag_len])?;
        Ok(Self {
            mac: MacKey::new(parts[0].clone(), parts[2].clone())?,
            digest_key: parts[1].to_u64(),
        })
    }

    pub fn tag_len(&self) -> usize {
        self.mac.tag_len()
    }
}

/// `T_h(traffic) xor top_tag(poly_digest(r, seeds)) xor pad`.
pub fn finish_tag(key: &FinishKey, traffic: &BitString, seeds: &[&BitString]) -> Result<BitString> {
    let digest = poly_digest(key.digest_key, seeds);
    let tag_len = key.tag_len();
    let digest = BitString::from_u64(digest >> (64 - tag_len), tag_len);
    its_mac_auth(&key.mac, traffic)?.xor(&digest)
}

pub fn finish_verify(key: &FinishKey, traffic: &BitString, seeds: &[&BitString], tag: &BitString) -> Result<bool> {
    if tag.len() != key.tag_len() {
        return Ok(false);
    }
    let want = finish_tag(key, traffic, seeds)?;
    Ok(want.iter().zip(tag.iter()).fold(true, |ok, (a, b)| ok & (a == b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_message_tags_to_pad() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in 1..40 {
            let key = MacKey::new(BitString::random(&mut rng, len + 7), BitString::random(&mut rng, 8)).unwrap();
            assert_eq!(its_mac_auth(&key, &BitString::zeros(len)).unwrap(), *key.pad());
        }
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (len, tag) = (rng.gen_range(1..300), rng.gen_range(1..40));
            let key = MacKey::from_bits(&BitString::random(&mut rng, MacKey::key_len(len, tag)), len, tag).unwrap();
            let msg = BitString::random(&mut rng, len);
            let t = its_mac_auth(&key, &msg).unwrap();
            assert!(its_mac_verify(&key, &msg, &t).unwrap());
            assert!(!its_mac_verify(&key, &msg, &t.flip(0).unwrap()).unwrap());
        }
    }

    #[test]
    fn key_size_checks() {
        let key = MacKey::new(BitString::zeros(10), BitString::zeros(4)).unwrap();
        assert_eq!(key.msg_len(), 7);
        assert!(its_mac_auth(&key, &BitString::zeros(8)).is_err());
        assert!(MacKey::new(BitString::zeros(2), BitString::zeros(4)).is_err());
        assert!(MacKey::from_bits(&BitString::zeros(10), 7, 3).is_err());
    }

    /// Substitution forgery against the modified family: flipping the last
    /// message bit and the last tag bit always verifies. The full Toeplitz
    /// hash used here catches the same edit for most keys.
    #[test]
    fn identity_block_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (len, tag) = (10, 4);
        let mut caught = 0;
        for _ in 0..200 {
            let msg = BitString::random(&mut rng, len);
            let forged = msg.flip(len - 1).unwrap();

            let modified = SeededHash::new(
                ExtractorParams::modified(len, tag).unwrap(),
                BitString::random(&mut rng, len - 1),
            )
            .unwrap();
            let pad = BitString::random(&mut rng, tag);
            let t = modified.extract(&msg).unwrap().xor(&pad).unwrap();
            let t_forged = modified.extract(&forged).unwrap().xor(&pad).unwrap();
            assert_eq!(t_forged, t.flip(tag - 1).unwrap());

            let key = MacKey::from_bits(&BitString::random(&mut rng, MacKey::key_len(len, tag)), len, tag).unwrap();
            let t = its_mac_auth(&key, &msg).unwrap();
            if !its_mac_verify(&key, &forged, &t.flip(tag - 1).unwrap()).unwrap() {
                caught += 1;
            }
        }
        assert!(caught > 150, "{caught}");
    }

    #[test]
    fn digest_collisions_bounded() {
        // two 2-block inputs differing in one bit: at most 2 colliding points
        // among a sample of random r, so none expected
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = BitString::random(&mut rng, 100);
        let b = a.flip(99).unwrap();
        let hits = (0..10_000).filter(|_| {
            let r: u64 = rng.gen();
            poly_digest(r, &[&a]) == poly_digest(r, &[&b])
        });
        assert_eq!(hits.count(), 0);
        assert_eq!(poly_digest(0, &[&a]), 0);
        // part boundaries are encoded
        let (x, y) = a.split(50).unwrap();
        let (x2, y2) = a.split(51).unwrap();
        assert_ne!(poly_digest(12345, &[&x, &y]), poly_digest(12345, &[&x2, &y2]));
    }

    #[test]
    fn finish_tag_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let (len, tag) = (rng.gen_range(1..400), 8 * rng.gen_range(4..=8));
            let key =
                FinishKey::from_bits(&BitString::random(&mut rng, FinishKey::key_len(len, tag)), len, tag).unwrap();
            let t = BitString::random(&mut rng, len);
            let s1_len = rng.gen_range(0..900);
            let s1 = BitString::random(&mut rng, s1_len);
            let s2 = BitString::random(&mut rng, 77);
            let good = finish_tag(&key, &t, &[&s1, &s2]).unwrap();
            assert!(finish_verify(&key, &t, &[&s1, &s2], &good).unwrap());
            let bad_seed = s2.flip(rng.gen_range(0..77)).unwrap();
            assert!(!finish_verify(&key, &t, &[&s1, &bad_seed], &good).unwrap());
            let bad_traffic = t.flip(rng.gen_range(0..len)).unwrap();
            assert!(!finish_verify(&key, &bad_traffic, &[&s1, &s2], &good).unwrap());
        }
        assert!(FinishKey::from_bits(&BitString::zeros(FinishKey::key_len(10, 72)), 10, 72).is_err());
    }
}

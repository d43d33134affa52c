//! Quick exhaustive checks of the library against brute-force computations,
//! sized to finish in a few seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitString;
use crate::bounds::{combine_case_bound, qlhl_basic, qlhl_general, ThreatCase};
use crate::entropy::SecurityLevel;
use crate::extractor::{collision_probability, exact_extraction_distance, Distribution, ExtractorParams, SeededHash};
use crate::handshake::mac::its_mac_auth;
use crate::handshake::{budget, run_handshake, HandshakeConfig, MacKey, PartyConfig, Tamper};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn universality() -> Check {
    let mut worst = 0.0f64;
    let mut ok = true;
    for n in 2..=6usize {
        for m in 1..=n {
            let p = ExtractorParams::modified(n, m).expect("valid sizes");
            for a in 0..1u64 << n {
                for b in a + 1..1u64 << n {
                    let cp = collision_probability(&p, &BitString::from_u64(a, n), &BitString::from_u64(b, n))
                        .expect("distinct");
                    let ratio = *cp.numer() as f64 / *cp.denom() as f64 * (m as f64).exp2();
                    worst = worst.max(ratio);
                    ok &= cp <= num_rational::Ratio::new(1, 1u64 << m);
                }
            }
        }
    }
    check("universality n<=6", ok, format!("max Pr[collision] * 2^m = {worst}"))
}

fn leftover_distance() -> Check {
    let mut ok = true;
    let mut cases = 0;
    for n in 3..=8usize {
        for k in 1..n {
            let dist = Distribution::flat(n, 0..1u64 << k).expect("valid support");
            let eps = SecurityLevel::pow2(2);
            let m = qlhl_basic(k as f64, SecurityLevel::PERFECT, eps).max_output_len;
            if m < 1 || m as usize > n {
                continue;
            }
            let d = exact_extraction_distance(&ExtractorParams::modified(n, m as usize).expect("valid"), &dist)
                .expect("small");
            ok &= d <= eps.eps() + 1e-12;
            cases += 1;
        }
    }
    check("leftover distance n<=8", ok, format!("{cases} flat sources"))
}

fn fast_path() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=300);
        let m = rng.gen_range(1..=n);
        let p = ExtractorParams::modified(n, m).expect("valid");
        let h = SeededHash::new(p, BitString::random(&mut rng, p.seed_len())).expect("seed fits");
        let x = BitString::random(&mut rng, n);
        if h.extract(&x).expect("length") != h.extract_fast(&x).expect("length") {
            mismatches += 1;
        }
    }
    check("fast path", mismatches == 0, format!("{mismatches} mismatches in 500"))
}

fn bound_fixtures() -> Check {
    let e32 = SecurityLevel::pow2(32);
    let e0 = SecurityLevel::PERFECT;
    let got = [
        qlhl_basic(100.0, e0, e32).max_output_len,
        qlhl_general(80.0, e0, 50.0, e0, 63.0, SecurityLevel::pow2(20)).max_output_len,
        combine_case_bound(ThreatCase::NoReveal, 256, 256, e0, e0, e32, 0.0, 0.0).max_output_len,
        budget(256, SecurityLevel::pow2(64), None)
            .map(|p| p.qkd_budget as i64)
            .unwrap_or(-1),
    ];
    check("bound fixtures", got == [38, 29, 194, 2808], format!("{got:?}"))
}

fn mac_forgery() -> Check {
    // every key of a 6-bit message / 3-bit tag MAC; a substituted message
    // must verify under at most 2^-3 of the keys
    let (len, tag) = (6usize, 3usize);
    let key_len = MacKey::key_len(len, tag);
    let msg = BitString::from_u64(0b101100, len);
    let mut worst = 0usize;
    for flip in 0..len {
        let forged = msg.flip(flip).expect("in range");
        for target in 0..1u64 << tag {
            let target = BitString::from_u64(target, tag);
            let mut hits = 0usize;
            for k in 0..1u64 << key_len {
                let key = MacKey::from_bits(&BitString::from_u64(k, key_len), len, tag).expect("sized");
                let t = its_mac_auth(&key, &msg).expect("sized");
                let t2 = its_mac_auth(&key, &forged).expect("sized");
                hits += usize::from(t2.xor(&t).expect("same len") == target);
            }
            worst = worst.max(hits);
        }
    }
    let total = 1usize << key_len;
    check(
        "mac forgery",
        worst * (1 << tag) <= total,
        format!("worst {worst}/{total}"),
    )
}

fn handshake() -> Check {
    let (i, r) = PartyConfig::fixture_pair(1, SecurityLevel::pow2(40), 16);
    let params = HandshakeConfig::new(16, SecurityLevel::pow2(16));
    let clean = match run_handshake(&i, &r, &params, None) {
        Ok(res) => res,
        Err(e) => return check("handshake", false, e.to_string()),
    };
    let mut ok = clean.outcome.is_success() && clean.init_finals == clean.resp_finals;
    let mut tampered = 0;
    for (idx, rec) in clean.wire.iter().enumerate() {
        for bit in (0..rec.len() * 8).step_by(97) {
            let t = Tamper::FlipBit {
                message: idx as u8 + 1,
                bit,
            };
            let res = run_handshake(&i, &r, &params, Some(t)).expect("layout valid");
            ok &= !res.outcome.is_success() && res.init_finals.is_none();
            tampered += 1;
        }
    }
    check("handshake", ok, format!("clean run + {tampered} tampered runs"))
}

/// Runs every check in order.
pub fn run_all() -> Vec<Check> {
    vec![
        universality(),
        leftover_distance(),
        fast_path(),
        bound_fixtures(),
        mac_forgery(),
        handshake(),
    ]
}

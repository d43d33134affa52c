//! Leftover-hash output-length bounds and their epsilon budgets.
//!
//! Every bound is evaluated on real numbers, with `log2(1/eps)` taken as the
//! exact `-log2(eps)`; only the final length is floored.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::entropy::{EntropyKind, SecurityLevel};
use crate::error::{Error, Result};
use crate::kv::KvDoc;

/// `2^(-5/4)`: below this hash epsilon the controlled-key case cannot be satisfied.
pub const CONTROLLED_KEY_EPS_THRESHOLD_NEG_LOG2: f64 = 1.25;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    /// Floor of `raw`, or `-1` when `raw < 0`.
    pub max_output_len: i64,
    pub feasible: bool,
    pub out_eps: SecurityLevel,
    pub kind: EntropyKind,
    /// Unfloored right-hand side.
    pub raw: f64,
    pub terms: Vec<(String, f64)>,
}

impl BoundReport {
    fn from_raw(raw: f64, out_eps: SecurityLevel, terms: Vec<(&str, f64)>) -> Self {
        let feasible = raw >= 0.0;
        let max_output_len = if feasible { raw.floor() as i64 } else { -1 };
        let mut terms: Vec<(String, f64)> = terms.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        terms.push(("raw_value".into(), raw));
        terms.push(("floor_applied".into(), if feasible { raw - raw.floor() } else { 0.0 }));
        Self {
            max_output_len,
            feasible,
            out_eps,
            kind: EntropyKind::MinEntropy,
            raw,
            terms,
        }
    }

    pub fn with_kind(mut self, kind: EntropyKind) -> Self {
        self.kind = kind;
        self
    }

    /// Whether `requested` output bits fit under the bound.
    pub fn allows(&self, requested: u64) -> bool {
        self.feasible && requested as i128 <= self.max_output_len as i128
    }

    /// Marks the report infeasible unless `requested` fits.
    pub fn require(mut self, requested: u64) -> Self {
        self.feasible = self.allows(requested);
        self.terms.push(("requested".into(), requested as f64));
        self
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("max_output_len", self.max_output_len)
            .set("feasible", self.feasible)
            .set("out_eps_neg_log2", self.out_eps.neg_log2())
            .set("kind", self.kind);
        for (k, v) in &self.terms {
            doc.set(k.as_str(), v);
        }
        doc
    }
}

fn hash_penalty(eps_hash: SecurityLevel) -> f64 {
    2.0 * eps_hash.neg_log2()
}

/// Leftover hash lemma: `|out| <= H_min(in) - 2 log2(1/eps) + 2`,
/// output `(eps_smooth + eps_hash)`-close to uniform.
pub fn qlhl_basic(hmin_input: f64, eps_smooth: SecurityLevel, eps_hash: SecurityLevel) -> BoundReport {
    let penalty = hash_penalty(eps_hash);
    let raw = hmin_input - penalty + 2.0;
    BoundReport::from_raw(
        raw,
        eps_smooth + eps_hash,
        vec![
            ("hmin_input", hmin_input),
            ("seed_penalty", 0.0),
            ("hash_penalty_bits", penalty),
            ("constant_2", 2.0),
        ],
    )
}

/// Weak seed handled by scaling the hash epsilon by `2^lambda`, which costs
/// `2 * lambda` bits: `|out| <= H_min(in) + 2 (H_min(seed) - |seed|) - 2 log2(1/eps) + 2`.
pub fn qlhl_weak_seed_penalized(
    hmin_input: f64,
    eps_smooth: SecurityLevel,
    seed_len: f64,
    hmin_seed: f64,
    eps_target: SecurityLevel,
) -> BoundReport {
    let seed_penalty = 2.0 * (hmin_seed - seed_len);
    let penalty = hash_penalty(eps_target);
    let raw = hmin_input + seed_penalty - penalty + 2.0;
    BoundReport::from_raw(
        raw,
        eps_smooth + eps_target,
        vec![
            ("hmin_input", hmin_input),
            ("seed_penalty", seed_penalty),
            ("hash_penalty_bits", penalty),
            ("constant_2", 2.0),
            ("seed_deficiency", seed_len - hmin_seed),
        ],
    )
}

/// Hash epsilon an extractor must reach so that a seed with deficiency
/// `lambda` still yields `eps_target`: `eps = 2^-lambda * eps_target`.
pub fn weak_seed_inner_eps(eps_target: SecurityLevel, lambda: f64) -> SecurityLevel {
    SecurityLevel::from_neg_log2(eps_target.neg_log2() + lambda).expect("non-negative")
}

/// Distance bound of a `(k, eps)` extractor run on a seed with deficiency `lambda`: `2^lambda * eps`.
pub fn weak_seed_distance_bound(eps: SecurityLevel, lambda: f64) -> SecurityLevel {
    eps.scale_pow2(lambda)
}

/// Generalized bound with independent smoothed input and seed:
/// `|out| <= H_min(in) + H_min(seed) - |seed| - 2 log2(1/eps') + 2`,
/// output `(eps_input + eps_seed + eps')`-close to uniform.
pub fn qlhl_general(
    hmin_input: f64,
    eps_input: SecurityLevel,
    hmin_seed: f64,
    eps_seed: SecurityLevel,
    seed_len: f64,
    eps_hash: SecurityLevel,
) -> BoundReport {
    let seed_penalty = hmin_seed - seed_len;
    let penalty = hash_penalty(eps_hash);
    let raw = hmin_input + seed_penalty - penalty + 2.0;
    BoundReport::from_raw(
        raw,
        SecurityLevel::sum([eps_input, eps_seed, eps_hash]),
        vec![
            ("hmin_input", hmin_input),
            ("seed_penalty", seed_penalty),
            ("hash_penalty_bits", penalty),
            ("constant_2", 2.0),
            ("hmin_seed", hmin_seed),
            ("seed_len", seed_len),
        ],
    )
}

/// Pre-smoothing distance bound `1/2 * sqrt(2^(m - k + |seed| - H_min(seed)))`.
pub fn leftover_distance_bound(output_len: f64, hmin_input: f64, seed_deficiency: f64) -> f64 {
    0.5 * (output_len - hmin_input + seed_deficiency).exp2().sqrt()
}

/// Compromise scenarios for two combined keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ThreatCase {
    NoReveal,
    /// The adversary controls the generation of one key.
    ControlledKey,
    /// One key is revealed after extraction.
    RevealedKey,
    /// The combined output is revealed.
    RevealOutput,
    /// The output and one key are revealed.
    RevealOutputAndKey,
}

impl ThreatCase {
    pub const ALL: [ThreatCase; 5] = [
        ThreatCase::NoReveal,
        ThreatCase::ControlledKey,
        ThreatCase::RevealedKey,
        ThreatCase::RevealOutput,
        ThreatCase::RevealOutputAndKey,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ThreatCase::NoReveal => "no-reveal",
            ThreatCase::ControlledKey => "controlled",
            ThreatCase::RevealedKey => "revealed-key",
            ThreatCase::RevealOutput => "reveal-output",
            ThreatCase::RevealOutputAndKey => "reveal-both",
        }
    }

    /// Whether a key may be known to the adversary.
    pub fn exposes_key(self) -> bool {
        matches!(
            self,
            ThreatCase::ControlledKey | ThreatCase::RevealedKey | ThreatCase::RevealOutputAndKey
        )
    }

    pub fn reveals_output(self) -> bool {
        matches!(self, ThreatCase::RevealOutput | ThreatCase::RevealOutputAndKey)
    }
}

impl fmt::Display for ThreatCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ThreatCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ThreatCase::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown threat case {s:?}")))
    }
}

/// Private-seed combining bound of two secure keys under `case`.
///
/// Lengths double as min-entropies (secure sources). `lambda1`/`lambda2` are
/// the residual min-entropies each key must keep when the output is revealed.
#[allow(clippy::too_many_arguments)]
pub fn combine_case_bound(
    case: ThreatCase,
    len1: u64,
    len2: u64,
    eps1: SecurityLevel,
    eps2: SecurityLevel,
    eps_hash: SecurityLevel,
    lambda1: f64,
    lambda2: f64,
) -> BoundReport {
    let (l1, l2) = (len1 as f64, len2 as f64);
    let total = l1 + l2;
    let penalty = hash_penalty(eps_hash);
    // seed and input each carry eps1 + eps2
    let out_eps = SecurityLevel::sum([eps1, eps1, eps2, eps2, eps_hash]);
    let no_reveal = (total + 1.0) / 2.0 - penalty + 2.0;

    match case {
        ThreatCase::NoReveal => BoundReport::from_raw(
            no_reveal,
            out_eps,
            vec![
                ("input_len", (total + 1.0) / 2.0),
                ("hash_penalty_bits", penalty),
                ("constant_2", 2.0),
            ],
        ),
        ThreatCase::ControlledKey => {
            let x1_controlled = (l2 - l1 + 1.0) / 2.0 - penalty + 2.0;
            let x2_controlled = (l1 - l2 + 1.0) / 2.0 - penalty + 2.0;
            let summed = 5.0 - 4.0 * eps_hash.neg_log2();
            let mut r = BoundReport::from_raw(
                x1_controlled.min(x2_controlled),
                out_eps,
                vec![
                    ("controlled_x1_only", x1_controlled),
                    ("controlled_x2_only", x2_controlled),
                    ("summed_constraint", summed),
                    ("hash_penalty_bits", penalty),
                    ("constant_2", 2.0),
                ],
            );
            if eps_hash.neg_log2() > CONTROLLED_KEY_EPS_THRESHOLD_NEG_LOG2 || summed < 0.0 {
                r.feasible = false;
                r.max_output_len = -1;
            }
            r
        }
        ThreatCase::RevealedKey => {
            let x1_revealed = (l2 + l2 / total) / 2.0;
            let x2_revealed = (l1 + l1 / total) / 2.0;
            BoundReport::from_raw(
                x1_revealed.min(x2_revealed) - penalty + 2.0,
                out_eps,
                vec![
                    ("x1_revealed_input_entropy", x1_revealed),
                    ("x2_revealed_input_entropy", x2_revealed),
                    ("hash_penalty_bits", penalty),
                    ("constant_2", 2.0),
                ],
            )
        }
        // With independent keys, revealing one key as well leaves the same
        // residual constraints as revealing only the output.
        ThreatCase::RevealOutput | ThreatCase::RevealOutputAndKey => {
            let residual1 = l1 - lambda1;
            let residual2 = l2 - lambda2;
            BoundReport::from_raw(
                no_reveal.min(residual1).min(residual2),
                out_eps,
                vec![
                    ("extraction_bound", no_reveal),
                    ("residual_limit_x1", residual1),
                    ("residual_limit_x2", residual2),
                    ("lambda1", lambda1),
                    ("lambda2", lambda2),
                ],
            )
        }
    }
}

/// Public uniform seed applied to `X1 || X2`.
///
/// Without reveals every key contributes; if any key may be revealed the
/// output must fit under each key alone (`min` rule).
pub fn public_seed_bound(
    len1: f64,
    len2: f64,
    eps1: SecurityLevel,
    eps2: SecurityLevel,
    eps_seed: SecurityLevel,
    eps_hash: SecurityLevel,
    reveal_allowed: bool,
) -> BoundReport {
    public_seed_bound_multi(&[(len1, eps1), (len2, eps2)], eps_seed, eps_hash, reveal_allowed)
}

/// [`public_seed_bound`] for any number of keys given as `(min-entropy, eps)`.
pub fn public_seed_bound_multi(
    keys: &[(f64, SecurityLevel)],
    eps_seed: SecurityLevel,
    eps_hash: SecurityLevel,
    reveal_allowed: bool,
) -> BoundReport {
    let penalty = hash_penalty(eps_hash);
    let total: f64 = keys.iter().map(|(h, _)| h).sum();
    let smallest = keys.iter().map(|(h, _)| *h).fold(f64::INFINITY, f64::min);
    let entropy = if reveal_allowed { smallest } else { total };
    let out_eps = SecurityLevel::sum(keys.iter().map(|(_, e)| *e).chain([eps_seed, eps_hash]));
    BoundReport::from_raw(
        entropy - penalty + 2.0,
        out_eps,
        vec![
            ("hmin_input", entropy),
            ("seed_penalty", 0.0),
            ("hash_penalty_bits", penalty),
            ("constant_2", 2.0),
            ("reveal_allowed", f64::from(u8::from(reveal_allowed))),
        ],
    )
}

/// Min-entropy each key needs for an `output_len`-bit output when keys may be revealed.
pub fn required_hmin_for_output(output_len: u64, eps_hash: SecurityLevel) -> f64 {
    output_len as f64 + hash_penalty(eps_hash) - 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AlphaPartition {
    pub alpha: Ratio<u64>,
    pub seed_len: u64,
    pub input_len: u64,
}

/// Splits `len1 + len2` bits into seed and input with `|seed| = |input| - 1`.
pub fn alpha_partition(len1: u64, len2: u64) -> Result<AlphaPartition> {
    let total = len1 + len2;
    if total < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 bits in total, got {total}"
        )));
    }
    if total.is_multiple_of(2) {
        return Err(Error::EvenTotalLength(total));
    }
    Ok(AlphaPartition {
        alpha: Ratio::new(total - 1, 2 * total),
        seed_len: (total - 1) / 2,
        input_len: total.div_ceil(2),
    })
}

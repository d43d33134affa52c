//! Key schedule: four chained extractions and the QKD key budget they imply.

use crate::bits::BitString;
use crate::bounds::{qlhl_general, BoundReport};
use crate::entropy::SecurityLevel;
use crate::error::{Error, Result};
use crate::extractor::{ExtractorParams, SeededHash};
use crate::kv::KvDoc;

/// Lengths of the nine derived secrets, in budget order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyLengths {
    pub iats: u64,
    pub rats: u64,
    pub sec_state_next: u64,
    pub fk_i: u64,
    pub fk_r: u64,
    pub iahts: u64,
    pub rahts: u64,
    pub ihts: u64,
    pub rhts: u64,
}

impl KeyLengths {
    pub fn uniform(n: u64) -> Self {
        Self::from_array([n; 9])
    }

    pub fn from_array(a: [u64; 9]) -> Self {
        Self {
            iats: a[0],
            rats: a[1],
            sec_state_next: a[2],
            fk_i: a[3],
            fk_r: a[4],
            iahts: a[5],
            rahts: a[6],
            ihts: a[7],
            rhts: a[8],
        }
    }

    pub fn as_array(&self) -> [u64; 9] {
        [
            self.iats,
            self.rats,
            self.sec_state_next,
            self.fk_i,
            self.fk_r,
            self.iahts,
            self.rahts,
            self.ihts,
            self.rhts,
        ]
    }
}

/// How `log2(1/eps')` is made integral in the per-stage penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyRounding {
    /// `floor`, as in the closed-form budget.
    Floor,
    /// `ceil`, which keeps every stage within its exact bound.
    Ceil,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleParams {
    pub n: u64,
    pub eps_prime: SecurityLevel,
    pub lengths: KeyLengths,
    /// `2 * log2(1/eps') - 2` after rounding.
    pub stage_penalty: i64,
    pub k3: u64,
    pub k2: u64,
    pub k1: u64,
    pub qkd_budget: u64,
    /// `L1..L4`, filled in once message sizes are known.
    pub seed_lens: Option<[u64; 4]>,
}

impl ScheduleParams {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("n", self.n)
            .set("eps_prime_neg_log2", self.eps_prime.neg_log2())
            .set("stage_penalty", self.stage_penalty)
            .set("k3", self.k3)
            .set("k2", self.k2)
            .set("k1", self.k1)
            .set("qkd_budget", self.qkd_budget);
        let names = [
            "iats",
            "rats",
            "sec_state_next",
            "fk_i",
            "fk_r",
            "iahts",
            "rahts",
            "ihts",
            "rhts",
        ];
        for (name, len) in names.iter().zip(self.lengths.as_array()) {
            doc.set(format!("len.{name}"), len);
        }
        if let Some(ls) = self.seed_lens {
            for (i, l) in ls.iter().enumerate() {
                doc.set(format!("seed_len.{}", i + 1), l);
            }
        }
        doc
    }
}

fn penalty(eps_prime: SecurityLevel, rounding: PenaltyRounding) -> Result<i64> {
    let f = eps_prime.neg_log2();
    if !f.is_finite() {
        return Err(Error::InvalidParams("eps' must be positive".into()));
    }
    let f = match rounding {
        PenaltyRounding::Floor => f.floor(),
        PenaltyRounding::Ceil => f.ceil(),
    };
    Ok(2 * f as i64 - 2)
}

fn positive(value: i64, what: &str) -> Result<u64> {
    if value < 1 {
        return Err(Error::InvalidParams(format!("{what} would be {value} bits")));
    }
    Ok(value as u64)
}

/// Back-substitutes the four stage inequalities, each tight:
/// `|k3| = finals + p`, `|k2| = |k3| + fk + p`, `|k1| = |k2| + AHTS + p`,
/// `|k_qkd| = |k1| + HTS + p`, with `p = 2 log2(1/eps') - 2`.
pub fn budget_with(
    n: u64,
    eps_prime: SecurityLevel,
    lengths: KeyLengths,
    rounding: PenaltyRounding,
) -> Result<ScheduleParams> {
    if lengths.as_array().iter().any(|&l| l < 1) {
        return Err(Error::InvalidParams("every derived key needs at least one bit".into()));
    }
    let p = penalty(eps_prime, rounding)?;
    let l = |v: u64| v as i64;
    let k3 = positive(
        l(lengths.iats) + l(lengths.rats) + l(lengths.sec_state_next) + p,
        "|k3|",
    )?;
    let k2 = positive(l(k3) + l(lengths.fk_i) + l(lengths.fk_r) + p, "|k2|")?;
    let k1 = positive(l(k2) + l(lengths.iahts) + l(lengths.rahts) + p, "|k1|")?;
    let qkd = positive(l(k1) + l(lengths.ihts) + l(lengths.rhts) + p, "|k_qkd|")?;
    Ok(ScheduleParams {
        n,
        eps_prime,
        lengths,
        stage_penalty: p,
        k3,
        k2,
        k1,
        qkd_budget: qkd,
        seed_lens: None,
    })
}

/// QKD key needed so every intermediate and final key is extracted within
/// the leftover-hash bound. Without explicit lengths all nine keys are `n` bits.
pub fn budget(n: u64, eps_prime: SecurityLevel, per_key_lengths: Option<KeyLengths>) -> Result<ScheduleParams> {
    if per_key_lengths.is_none() && n < 1 {
        return Err(Error::InvalidParams("n must be at least 1".into()));
    }
    budget_with(
        n,
        eps_prime,
        per_key_lengths.unwrap_or(KeyLengths::uniform(n)),
        PenaltyRounding::Floor,
    )
}

/// `9n - 8 + 8 floor(log2(1/eps'))`.
pub fn closed_form_budget(n: u64, eps_prime: SecurityLevel) -> i64 {
    9 * n as i64 - 8 + 8 * eps_prime.neg_log2().floor() as i64
}

/// 64-bit domain-separation label `i` (1..=8): `"QLHL/L<i>"` plus a NUL byte.
pub fn label(i: u8) -> BitString {
    assert!((1..=8).contains(&i), "labels are numbered 1..=8");
    let mut bytes = *b"QLHL/L0\0";
    bytes[6] = b'0' + i;
    BitString::from_byte_slice(&bytes)
}

/// Declared entropy of one stage's input and seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageEntropy {
    /// Min-entropy of the whole input; only the ITS key counts.
    pub hmin_input: f64,
    pub eps_input: SecurityLevel,
    pub eps_seed: SecurityLevel,
    pub eps_hash: SecurityLevel,
}

#[derive(Clone, Debug)]
pub struct StageOutput {
    pub keys: Vec<BitString>,
    pub report: BoundReport,
}

/// `out_1 || ... || out_k = T_seed(key_material || label || traffic)`.
pub fn schedule_stage(
    stage: u8,
    key_material: &[&BitString],
    label: &BitString,
    traffic: &BitString,
    seed: &BitString,
    out_lens: &[usize],
    entropy: &StageEntropy,
) -> Result<StageOutput> {
    if !(1..=4).contains(&stage) {
        return Err(Error::Range(format!("stage {stage} outside 1..=4")));
    }
    let mut input = BitString::concat_all(key_material.iter().copied());
    input.extend(label);
    input.extend(traffic);
    if seed.len() + 1 != input.len() {
        return Err(Error::LengthMismatch {
            expected: input.len() - 1,
            actual: seed.len(),
        });
    }
    let total: usize = out_lens.iter().sum();
    let report = qlhl_general(
        entropy.hmin_input,
        entropy.eps_input,
        seed.len() as f64,
        entropy.eps_seed,
        seed.len() as f64,
        entropy.eps_hash,
    );
    if !report.allows(total as u64) {
        return Err(Error::BudgetExceeded {
            requested: total as u64,
            allowed: report.max_output_len,
        });
    }
    let params = ExtractorParams::modified(input.len(), total)?;
    let out = SeededHash::new(params, seed.clone())?.extract_fast(&input)?;
    Ok(StageOutput {
        keys: out.split_many(out_lens)?,
        report: report.require(total as u64),
    })
}

//! Combining two (or more) independent keys into one through a modified
//! Toeplitz extraction, with either a private seed carved from the keys
//! themselves or a public seed.

use num_rational::Ratio;

use crate::bits::BitString;
use crate::bounds::{alpha_partition, combine_case_bound, public_seed_bound_multi, BoundReport, ThreatCase};
use crate::entropy::{concat_sources, truncate_source, EntropyKind, Independence, SecurityLevel, SourceSpec};
use crate::error::{Error, Result};
use crate::extractor::{ExtractorParams, SeededHash};
use crate::kv::KvDoc;

#[derive(Clone, Debug)]
pub struct KeyInput {
    pub bits: BitString,
    pub spec: SourceSpec,
}

impl KeyInput {
    pub fn new(bits: BitString, spec: SourceSpec) -> Result<Self> {
        if bits.len() as u64 != spec.length() {
            return Err(Error::LengthMismatch {
                expected: spec.length() as usize,
                actual: bits.len(),
            });
        }
        Ok(Self { bits, spec })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyId {
    Key1,
    Key2,
}

/// Threat case plus, optionally, which key the adversary learns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Threat {
    pub case: ThreatCase,
    pub revealed: Option<KeyId>,
}

impl Threat {
    pub fn new(case: ThreatCase) -> Self {
        Self { case, revealed: None }
    }

    pub fn revealing(case: ThreatCase, key: KeyId) -> Self {
        Self {
            case,
            revealed: Some(key),
        }
    }
}

#[derive(Clone, Debug)]
pub enum CombineMode {
    /// Seed carved from both keys; an even total length is fixed by dropping
    /// one bit when `auto_truncate` is set.
    PrivateSeed { auto_truncate: bool },
    /// Uniform public seed; `generated_after_keys` is the caller's assertion
    /// that the seed did not exist before the keys.
    PublicSeed {
        seed: BitString,
        eps_seed: SecurityLevel,
        generated_after_keys: bool,
    },
}

#[derive(Clone, Debug)]
pub struct CombineRequest {
    pub key1: KeyInput,
    pub key2: KeyInput,
    pub mode: CombineMode,
    pub eps_hash: SecurityLevel,
    pub threat: Threat,
    /// Min-entropy each key must keep if the output is revealed.
    pub lambda1: f64,
    pub lambda2: f64,
    /// Output length; defaults to the bound and may only be lowered.
    pub requested: Option<u64>,
    /// Public context appended to the input in public-seed mode.
    pub transcript: Option<BitString>,
    pub independence: Independence,
}

impl CombineRequest {
    pub fn new(key1: KeyInput, key2: KeyInput, mode: CombineMode, eps_hash: SecurityLevel, threat: Threat) -> Self {
        let independence = Independence::mutual(&[&key1.spec, &key2.spec]);
        Self {
            key1,
            key2,
            mode,
            eps_hash,
            threat,
            lambda1: 0.0,
            lambda2: 0.0,
            requested: None,
            transcript: None,
            independence,
        }
    }

    pub fn with_lambdas(mut self, lambda1: f64, lambda2: f64) -> Self {
        self.lambda1 = lambda1;
        self.lambda2 = lambda2;
        self
    }

    pub fn with_requested(mut self, len: u64) -> Self {
        self.requested = Some(len);
        self
    }

    pub fn with_transcript(mut self, transcript: BitString) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn with_independence(mut self, independence: Independence) -> Self {
        self.independence = independence;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub remaining_hmin: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug)]
pub struct CombineResult {
    pub output: BitString,
    pub out_spec: SourceSpec,
    pub report: BoundReport,
    /// Per key, what is left if the output is revealed.
    pub residuals: [Residual; 2],
    pub seed_len: usize,
    pub input_len: usize,
}

impl CombineResult {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("output_len", self.output.len())
            .set("seed_len", self.seed_len)
            .set("input_len", self.input_len);
        for (i, r) in self.residuals.iter().enumerate() {
            doc.set(format!("key{}.residual_hmin", i + 1), r.remaining_hmin)
                .set(format!("key{}.residual_satisfied", i + 1), r.satisfied);
        }
        doc.merge_prefixed("out", &self.out_spec.to_kv());
        doc.merge_prefixed("bound", &self.report.to_kv());
        doc
    }
}

/// Remaining min-entropy of a key after an `output_len`-bit output is revealed.
pub fn residual_after_reveal(spec: &SourceSpec, output_len: u64, lambda_target: f64) -> Residual {
    let out = output_len as f64;
    Residual {
        remaining_hmin: (spec.hmin() - out).max(0.0),
        satisfied: out <= spec.hmin() - lambda_target,
    }
}

/// Descriptor for a post-quantum key: HILL entropy `hill_floor` (default: its length).
pub fn model_pqc_key(length: u64, eps_pqc: SecurityLevel, hill_floor: Option<f64>) -> Result<SourceSpec> {
    SourceSpec::new(
        "pqc",
        length,
        hill_floor.unwrap_or(length as f64),
        eps_pqc,
        EntropyKind::Hill,
    )
}

pub fn xor_combine_baseline(key1: &BitString, key2: &BitString) -> Result<BitString> {
    key1.xor(key2)
}

fn output_kind(threat: Threat, k1: EntropyKind, k2: EntropyKind) -> EntropyKind {
    match threat.revealed {
        Some(KeyId::Key1) => k2,
        Some(KeyId::Key2) => k1,
        None => k1.join(k2),
    }
}

fn infeasible(report: &BoundReport) -> Error {
    Error::Infeasible {
        shortfall_bits: (-report.raw).ceil().max(1.0) as u64,
    }
}

fn choose_len(report: &BoundReport, requested: Option<u64>) -> Result<u64> {
    if !report.feasible {
        return Err(infeasible(report));
    }
    let max = report.max_output_len as u64;
    match requested {
        None => Ok(max),
        Some(r) if r <= max => Ok(r),
        Some(r) => Err(Error::BudgetExceeded {
            requested: r,
            allowed: report.max_output_len,
        }),
    }
}

fn drop_last_bit(key: &KeyInput) -> Result<KeyInput> {
    KeyInput::new(key.bits.truncate(1)?, truncate_source(&key.spec, 1)?)
}

/// Seed and input carved from both keys: `seed = k1[..a1] || k2[..a2]`,
/// `input = k1[a1..] || k2[a2..]` with `a1 = floor(alpha |k1|)`.
pub fn combine_private(req: &CombineRequest) -> Result<CombineResult> {
    let CombineMode::PrivateSeed { auto_truncate } = req.mode else {
        return Err(Error::InvalidParams("combine_private needs private-seed mode".into()));
    };
    for k in [&req.key1, &req.key2] {
        if !k.spec.is_secure() {
            return Err(Error::NotSecure(k.spec.label().to_owned()));
        }
    }
    req.independence.check(&req.key1.spec, &req.key2.spec)?;

    let (mut key1, mut key2) = (req.key1.clone(), req.key2.clone());
    let total = key1.bits.len() + key2.bits.len();
    if total % 2 == 0 {
        if !auto_truncate {
            return Err(Error::EvenTotalLength(total as u64));
        }
        if key1.bits.len() > key2.bits.len() {
            key1 = drop_last_bit(&key1)?;
        } else {
            key2 = drop_last_bit(&key2)?;
        }
    }
    let (l1, l2) = (key1.bits.len() as u64, key2.bits.len() as u64);
    let part = alpha_partition(l1, l2)?;
    let a1 = (part.alpha * Ratio::from_integer(l1)).to_integer();
    let a2 = part.seed_len - a1;
    if a2 > l2 {
        return Err(Error::InvalidParams(format!(
            "key2 too short for a {a2}-bit seed portion"
        )));
    }

    let report = combine_case_bound(
        req.threat.case,
        l1,
        l2,
        key1.spec.eps(),
        key2.spec.eps(),
        req.eps_hash,
        req.lambda1,
        req.lambda2,
    );
    let m = choose_len(&report, req.requested)?;

    let (s1, i1) = key1.bits.split(a1 as usize)?;
    let (s2, i2) = key2.bits.split(a2 as usize)?;
    let seed = s1.concat(&s2);
    let input = i1.concat(&i2);
    let params = ExtractorParams::modified(input.len(), m as usize)?;
    let output = SeededHash::new(params, seed)?.extract_fast(&input)?;
    assert!(report.allows(output.len() as u64), "combined output exceeds its bound");

    let out_spec = SourceSpec::secure(
        "combined",
        m,
        report.out_eps,
        output_kind(req.threat, key1.spec.kind(), key2.spec.kind()),
    );
    Ok(CombineResult {
        output,
        residuals: [
            residual_after_reveal(&key1.spec, m, req.lambda1),
            residual_after_reveal(&key2.spec, m, req.lambda2),
        ],
        report: report.with_kind(out_spec.kind()),
        out_spec,
        seed_len: part.seed_len as usize,
        input_len: part.input_len as usize,
    })
}

/// Public seed applied to `key1 || key2 (|| transcript)`.
pub fn combine_public(req: &CombineRequest) -> Result<CombineResult> {
    let CombineMode::PublicSeed {
        ref seed,
        eps_seed,
        generated_after_keys,
    } = req.mode
    else {
        return Err(Error::InvalidParams("combine_public needs public-seed mode".into()));
    };
    if !generated_after_keys {
        return Err(Error::OrderingViolation);
    }
    req.independence.check(&req.key1.spec, &req.key2.spec)?;

    let (h1, h2) = (req.key1.spec.hmin(), req.key2.spec.hmin());
    let mut report = public_seed_bound_multi(
        &[(h1, req.key1.spec.eps()), (h2, req.key2.spec.eps())],
        eps_seed,
        req.eps_hash,
        req.threat.case.exposes_key(),
    );
    if req.threat.case.reveals_output() {
        let capped = report.raw.min(h1 - req.lambda1).min(h2 - req.lambda2);
        if capped < report.raw {
            report.raw = capped;
            report.feasible = capped >= 0.0;
            report.max_output_len = if report.feasible { capped.floor() as i64 } else { -1 };
        }
        report.terms.push(("residual_limit_x1".into(), h1 - req.lambda1));
        report.terms.push(("residual_limit_x2".into(), h2 - req.lambda2));
    }
    let m = choose_len(&report, req.requested)?;

    let mut input = req.key1.bits.concat(&req.key2.bits);
    if let Some(t) = &req.transcript {
        input.extend(t);
    }
    if seed.len() + 1 != input.len() {
        return Err(Error::LengthMismatch {
            expected: input.len() - 1,
            actual: seed.len(),
        });
    }
    let params = ExtractorParams::modified(input.len(), m as usize)?;
    let output = SeededHash::new(params, seed.clone())?.extract_fast(&input)?;
    assert!(report.allows(output.len() as u64), "combined output exceeds its bound");

    let out_spec = SourceSpec::secure(
        "combined",
        m,
        report.out_eps,
        output_kind(req.threat, req.key1.spec.kind(), req.key2.spec.kind()),
    );
    Ok(CombineResult {
        output,
        residuals: [
            residual_after_reveal(&req.key1.spec, m, req.lambda1),
            residual_after_reveal(&req.key2.spec, m, req.lambda2),
        ],
        report: report.with_kind(out_spec.kind()),
        out_spec,
        seed_len: seed.len(),
        input_len: input.len(),
    })
}

/// Public-seed combining of any number of mutually independent keys.
pub fn combine_public_multi(
    keys: &[KeyInput],
    seed: &BitString,
    eps_seed: SecurityLevel,
    eps_hash: SecurityLevel,
    reveal_allowed: bool,
    requested: Option<u64>,
    independence: &Independence,
) -> Result<(BitString, SourceSpec, BoundReport)> {
    let Some((first, rest)) = keys.split_first() else {
        return Err(Error::InvalidParams("no keys to combine".into()));
    };
    let mut joint = first.spec.clone();
    for k in rest {
        joint = concat_sources(&joint, &k.spec, independence)?;
    }
    let entries: Vec<(f64, SecurityLevel)> = keys.iter().map(|k| (k.spec.hmin(), k.spec.eps())).collect();
    let report = public_seed_bound_multi(&entries, eps_seed, eps_hash, reveal_allowed);
    let m = choose_len(&report, requested)?;

    let input = BitString::concat_all(keys.iter().map(|k| &k.bits));
    if seed.len() + 1 != input.len() {
        return Err(Error::LengthMismatch {
            expected: input.len() - 1,
            actual: seed.len(),
        });
    }
    let params = ExtractorParams::modified(input.len(), m as usize)?;
    let output = SeededHash::new(params, seed.clone())?.extract_fast(&input)?;
    let out_spec = SourceSpec::secure("combined", m, report.out_eps, joint.kind());
    Ok((output, out_spec, report.with_kind(joint.kind())))
}

/// Side-by-side residual security of XOR and extractor combining when the
/// output and key2 are both revealed.
#[derive(Clone, Debug, PartialEq)]
pub struct ResilienceComparison {
    pub key_len: u64,
    pub lambda1: f64,
    /// Key1 bits recovered as `output ^ key2`.
    pub xor_recovered_key1: bool,
    pub xor_residual_hmin: f64,
    pub extractor_output_len: u64,
    pub extractor_residual_hmin: f64,
    pub extractor_satisfied: bool,
}

impl ResilienceComparison {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("key_len", self.key_len)
            .set("lambda1", self.lambda1)
            .set("xor.recovered_key1", self.xor_recovered_key1)
            .set("xor.residual_hmin", self.xor_residual_hmin)
            .set("extractor.output_len", self.extractor_output_len)
            .set("extractor.residual_hmin", self.extractor_residual_hmin)
            .set("extractor.satisfied", self.extractor_satisfied);
        doc
    }
}

/// Runs both combiners on the same pair of secure keys.
pub fn compare_resilience(
    key1: &KeyInput,
    key2: &KeyInput,
    eps_hash: SecurityLevel,
    lambda1: f64,
    lambda2: f64,
) -> Result<ResilienceComparison> {
    let xored = xor_combine_baseline(&key1.bits, &key2.bits)?;
    let recovered = xored.xor(&key2.bits)?;
    let xor_recovered_key1 = recovered == key1.bits;
    // the revealed output pins key1 down exactly
    let xor_residual_hmin = if xor_recovered_key1 {
        0.0
    } else {
        residual_after_reveal(&key1.spec, xored.len() as u64, lambda1).remaining_hmin
    };

    let req = CombineRequest::new(
        key1.clone(),
        key2.clone(),
        CombineMode::PrivateSeed { auto_truncate: true },
        eps_hash,
        Threat::revealing(ThreatCase::RevealOutputAndKey, KeyId::Key2),
    )
    .with_lambdas(lambda1, lambda2);
    let res = combine_private(&req)?;
    Ok(ResilienceComparison {
        key_len: key1.spec.length(),
        lambda1,
        xor_recovered_key1,
        xor_residual_hmin,
        extractor_output_len: res.output.len() as u64,
        extractor_residual_hmin: res.residuals[0].remaining_hmin,
        extractor_satisfied: res.residuals[0].satisfied,
    })
}

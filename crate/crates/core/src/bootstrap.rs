//! Seed bootstrapping from two seedless weak sources: one source is truncated
//! into a modified-Toeplitz seed for the other.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bits::BitString;
use crate::bounds::{qlhl_general, BoundReport};
use crate::entropy::{truncate_source, EntropyKind, Independence, SecurityLevel, SourceSpec};
use crate::error::{Error, Result};
use crate::extractor::{Distribution, ExtractorParams, SeededHash};
use crate::kv::KvDoc;

#[derive(Clone, Debug, PartialEq)]
pub enum WeakModel {
    /// Uniform over the first `2^k` strings (leading `length - k` bits zero).
    FlatK,
    /// Independent bits, each 1 with probability `p`.
    BiasedIid(f64),
    /// Explicit table over `{0,1}^length`.
    Injected(Distribution),
}

/// Simulated weak source with a declared min-entropy, deterministic per `rng_seed`.
#[derive(Clone, Debug)]
pub struct WeakSourceSim {
    length: usize,
    hmin_declared: f64,
    model: WeakModel,
    rng_seed: u64,
    rng: ChaCha20Rng,
}

impl WeakSourceSim {
    pub fn new(length: usize, hmin_declared: f64, model: WeakModel, rng_seed: u64) -> Result<Self> {
        if !(0.0..=length as f64).contains(&hmin_declared) {
            return Err(Error::InvalidParams(format!(
                "declared min-entropy {hmin_declared} outside [0, {length}]"
            )));
        }
        match &model {
            WeakModel::FlatK => {
                if hmin_declared.fract() != 0.0 {
                    return Err(Error::InvalidParams(format!(
                        "flat source needs integral k, got {hmin_declared}"
                    )));
                }
            }
            WeakModel::BiasedIid(p) => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidParams(format!("bias must lie in (0, 1), got {p}")));
                }
                let true_hmin = -(length as f64) * p.max(1.0 - p).log2();
                if hmin_declared > true_hmin + 1e-9 {
                    return Err(Error::InvalidParams(format!(
                        "declared min-entropy {hmin_declared} exceeds true {true_hmin}"
                    )));
                }
            }
            WeakModel::Injected(dist) => {
                if dist.bits() != length {
                    return Err(Error::LengthMismatch {
                        expected: length,
                        actual: dist.bits(),
                    });
                }
                if hmin_declared > dist.min_entropy() + 1e-9 {
                    return Err(Error::InvalidParams(format!(
                        "declared min-entropy {hmin_declared} exceeds table's {}",
                        dist.min_entropy()
                    )));
                }
            }
        }
        Ok(Self {
            length,
            hmin_declared,
            model,
            rng_seed,
            rng: ChaCha20Rng::seed_from_u64(rng_seed),
        })
    }

    pub fn flat(length: usize, k: usize, rng_seed: u64) -> Result<Self> {
        Self::new(length, k as f64, WeakModel::FlatK, rng_seed)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn hmin_declared(&self) -> f64 {
        self.hmin_declared
    }

    pub fn model(&self) -> &WeakModel {
        &self.model
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Restarts the generator from `rng_seed`.
    pub fn reset(&mut self) {
        self.rng = ChaCha20Rng::seed_from_u64(self.rng_seed);
    }

    /// Descriptor with the declared min-entropy and no smoothing.
    pub fn spec(&self, label: &str) -> Result<SourceSpec> {
        SourceSpec::new(
            label,
            self.length as u64,
            self.hmin_declared,
            SecurityLevel::PERFECT,
            EntropyKind::MinEntropy,
        )
    }

    pub fn sample(&mut self) -> BitString {
        match &self.model {
            WeakModel::FlatK => {
                let k = self.hmin_declared as usize;
                let zeros = self.length - k;
                BitString::zeros(zeros).concat(&BitString::random(&mut self.rng, k))
            }
            WeakModel::BiasedIid(p) => {
                let p = *p;
                BitString::from_bits((0..self.length).map(|_| self.rng.gen_bool(p)))
            }
            WeakModel::Injected(dist) => {
                let u: f64 = self.rng.gen();
                let mut acc = 0.0;
                let mut pick = 0u64;
                for (v, p) in dist.probs().iter().enumerate() {
                    if *p > 0.0 {
                        pick = v as u64;
                        acc += p;
                        if u < acc {
                            break;
                        }
                    }
                }
                BitString::from_u64(pick, self.length)
            }
        }
    }

    /// Exact output distribution for small lengths.
    pub fn distribution(&self) -> Result<Distribution> {
        match &self.model {
            WeakModel::FlatK => Distribution::flat(self.length, 0..1u64 << self.hmin_declared as u32),
            WeakModel::BiasedIid(p) => {
                if self.length > 24 {
                    return Err(Error::GuardExceeded(format!(
                        "explicit tables limited to 24 bits, got {}",
                        self.length
                    )));
                }
                let probs = (0..1u64 << self.length)
                    .map(|v| {
                        let ones = v.count_ones() as i32;
                        p.powi(ones) * (1.0 - p).powi(self.length as i32 - ones)
                    })
                    .collect();
                Distribution::new(self.length, probs)
            }
            WeakModel::Injected(dist) => Ok(dist.clone()),
        }
    }
}

pub fn sample_weak_source(sim: &mut WeakSourceSim) -> BitString {
    sim.sample()
}

/// Which source is truncated into the seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeedChoice {
    /// `x2` when it is long enough, otherwise `x1`.
    #[default]
    Auto,
    X1,
    X2,
}

impl FromStr for SeedChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SeedChoice::Auto),
            "x1" => Ok(SeedChoice::X1),
            "x2" => Ok(SeedChoice::X2),
            other => Err(Error::Parse(format!("unknown seed choice {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedRole {
    X1,
    X2,
}

impl fmt::Display for SeedRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedRole::X1 => "x1",
            SeedRole::X2 => "x2",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapPlan {
    pub x1_spec: SourceSpec,
    pub x2_spec: SourceSpec,
    pub output_len: u64,
    pub eps_hash: SecurityLevel,
    /// Bits dropped from the tail of the seed source.
    pub truncation: u64,
    pub seed_role: SeedRole,
    pub params: ExtractorParams,
    /// `qlhl_general` on the truncated seed.
    pub report: BoundReport,
    /// `|seed source| / |input source|`.
    pub length_ratio: f64,
}

impl BootstrapPlan {
    pub fn input_spec(&self) -> &SourceSpec {
        match self.seed_role {
            SeedRole::X1 => &self.x2_spec,
            SeedRole::X2 => &self.x1_spec,
        }
    }

    pub fn seed_spec(&self) -> &SourceSpec {
        match self.seed_role {
            SeedRole::X1 => &self.x1_spec,
            SeedRole::X2 => &self.x2_spec,
        }
    }

    /// Seed source after dropping `truncation` bits, worst-case entropy loss.
    pub fn truncated_seed_spec(&self) -> SourceSpec {
        truncate_source(self.seed_spec(), self.truncation).expect("plan keeps truncation within length")
    }

    pub fn out_spec(&self) -> SourceSpec {
        SourceSpec::secure(
            "bootstrap",
            self.output_len,
            SecurityLevel::sum([self.x1_spec.eps(), self.x2_spec.eps(), self.eps_hash]),
            self.x1_spec.kind().join(self.x2_spec.kind()),
        )
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("output_len", self.output_len)
            .set("eps_hash_neg_log2", self.eps_hash.neg_log2())
            .set("seed_role", self.seed_role)
            .set("truncation", self.truncation)
            .set("input_len", self.params.input_len())
            .set("seed_len", self.params.seed_len())
            .set("length_ratio", self.length_ratio);
        doc.merge_prefixed("x1", &self.x1_spec.to_kv());
        doc.merge_prefixed("x2", &self.x2_spec.to_kv());
        doc.merge_prefixed("bound", &self.report.to_kv());
        doc
    }

    /// Rebuilds a plan from [`BootstrapPlan::to_kv`] output, re-checking feasibility.
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let sub = |prefix: &str| {
            let mut d = KvDoc::new();
            for (k, v) in doc.entries() {
                if let Some(rest) = k.strip_prefix(prefix) {
                    d.set(rest, v);
                }
            }
            d
        };
        let x1 = SourceSpec::from_kv(&sub("x1."))?;
        let x2 = SourceSpec::from_kv(&sub("x2."))?;
        let neg: f64 = doc.parse_field("eps_hash_neg_log2")?;
        let choice = doc.parse_field::<SeedChoice>("seed_role")?;
        let independence = Independence::mutual(&[&x1, &x2]);
        let plan = plan_bootstrap_with(
            &x1,
            &x2,
            doc.parse_field("output_len")?,
            SecurityLevel::from_neg_log2(neg)?,
            &independence,
            choice,
        )?;
        if plan.truncation != doc.parse_field::<u64>("truncation")? {
            return Err(Error::Format("plan truncation does not match its sources".into()));
        }
        Ok(plan)
    }
}

/// Plans with the default seed choice.
pub fn plan_bootstrap(
    x1: &SourceSpec,
    x2: &SourceSpec,
    output_len: u64,
    eps_hash: SecurityLevel,
    independence: &Independence,
) -> Result<BootstrapPlan> {
    plan_bootstrap_with(x1, x2, output_len, eps_hash, independence, SeedChoice::Auto)
}

/// Checks `H(in) + H(seed) >= A + |seed| + 2 log2(1/eps) - 2` with the seed
/// source's untruncated length and entropy; the truncation cancels on both sides.
pub fn plan_bootstrap_with(
    x1: &SourceSpec,
    x2: &SourceSpec,
    output_len: u64,
    eps_hash: SecurityLevel,
    independence: &Independence,
    choice: SeedChoice,
) -> Result<BootstrapPlan> {
    independence.check(x1, x2)?;
    let role = match choice {
        SeedChoice::X1 => SeedRole::X1,
        SeedChoice::X2 => SeedRole::X2,
        SeedChoice::Auto if x2.length() + 1 >= x1.length() => SeedRole::X2,
        SeedChoice::Auto => SeedRole::X1,
    };
    let (input, seed) = match role {
        SeedRole::X1 => (x2, x1),
        SeedRole::X2 => (x1, x2),
    };
    if input.length() == 0 {
        return Err(Error::InvalidParams("input source is empty".into()));
    }
    let needed = input.length() - 1;
    if seed.length() < needed {
        return Err(Error::InsufficientSeedMaterial {
            seed_len: seed.length(),
            needed,
        });
    }
    let truncation = seed.length() - needed;

    let lhs = input.hmin() + seed.hmin();
    let rhs = output_len as f64 + seed.length() as f64 + 2.0 * eps_hash.neg_log2() - 2.0;
    if lhs < rhs {
        return Err(Error::Infeasible {
            shortfall_bits: (rhs - lhs).ceil() as u64,
        });
    }

    let params = ExtractorParams::modified(input.length() as usize, output_len as usize)?;
    let seed_used = truncate_source(seed, truncation)?;
    let report = qlhl_general(
        input.hmin(),
        input.eps(),
        seed_used.hmin(),
        seed_used.eps(),
        seed_used.length() as f64,
        eps_hash,
    )
    .require(output_len);

    Ok(BootstrapPlan {
        x1_spec: x1.clone(),
        x2_spec: x2.clone(),
        output_len,
        eps_hash,
        truncation,
        seed_role: role,
        params,
        report,
        length_ratio: seed.length() as f64 / input.length() as f64,
    })
}

/// Runs the planned extraction: the seed source, truncated by `q`, seeds the
/// modified Toeplitz hash applied to the other source.
pub fn run_bootstrap(
    plan: &BootstrapPlan,
    x1_bits: &BitString,
    x2_bits: &BitString,
) -> Result<(BitString, SourceSpec)> {
    for (bits, spec) in [(x1_bits, &plan.x1_spec), (x2_bits, &plan.x2_spec)] {
        if bits.len() as u64 != spec.length() {
            return Err(Error::LengthMismatch {
                expected: spec.length() as usize,
                actual: bits.len(),
            });
        }
    }
    let (input, seed) = match plan.seed_role {
        SeedRole::X1 => (x2_bits, x1_bits),
        SeedRole::X2 => (x1_bits, x2_bits),
    };
    let seed = seed.truncate(plan.truncation as usize)?;
    let hash = SeededHash::new(plan.params, seed)?;
    let output = hash.extract_fast(input)?;
    Ok((output, plan.out_spec()))
}

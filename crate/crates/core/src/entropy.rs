//! Entropy ledger: source descriptors and the algebra that carries lengths,
//! min-entropies, smoothing parameters and entropy kinds through concatenation,
//! decomposition, truncation and leakage.
//!
//! Closeness parameters are kept as `-log2(eps)` so that values such as
//! `2^-128` stay exact; `eps = 0` is `+inf`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KvDoc;

/// `eps = 2^-neg_log2`, with `neg_log2` in `[0, +inf]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SecurityLevel {
    neg_log2: f64,
}

impl SecurityLevel {
    /// `eps = 0`.
    pub const PERFECT: SecurityLevel = SecurityLevel {
        neg_log2: f64::INFINITY,
    };
    /// `eps = 1`, the trivial bound.
    pub const TRIVIAL: SecurityLevel = SecurityLevel { neg_log2: 0.0 };

    pub fn from_neg_log2(neg_log2: f64) -> Result<Self> {
        if neg_log2.is_nan() || neg_log2 < 0.0 {
            return Err(Error::Parse(format!("-log2(eps) must lie in [0, inf], got {neg_log2}")));
        }
        Ok(Self { neg_log2 })
    }

    /// `eps = 2^-n`.
    pub fn pow2(n: u32) -> Self {
        Self { neg_log2: f64::from(n) }
    }

    pub fn from_eps(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::Parse(format!("eps must lie in [0, 1], got {eps}")));
        }
        Ok(Self {
            neg_log2: if eps == 0.0 { f64::INFINITY } else { -eps.log2() },
        })
    }

    pub fn neg_log2(self) -> f64 {
        self.neg_log2
    }

    /// Linear value; underflows to 0 below about `2^-1074`.
    pub fn eps(self) -> f64 {
        (-self.neg_log2).exp2()
    }

    pub fn is_perfect(self) -> bool {
        self.neg_log2 == f64::INFINITY
    }

    /// `2^lambda * eps`, capped at `eps = 1`.
    pub fn scale_pow2(self, lambda: f64) -> SecurityLevel {
        SecurityLevel {
            neg_log2: (self.neg_log2 - lambda).max(0.0),
        }
    }

    pub fn sum<I: IntoIterator<Item = SecurityLevel>>(levels: I) -> SecurityLevel {
        levels.into_iter().fold(Self::PERFECT, |a, b| a + b)
    }
}

impl std::ops::Add for SecurityLevel {
    type Output = SecurityLevel;

    /// `eps_a + eps_b`, evaluated in the log domain; capped at `eps = 1`.
    fn add(self, other: SecurityLevel) -> SecurityLevel {
        if self.is_perfect() {
            return other;
        }
        if other.is_perfect() {
            return self;
        }
        let (lo, hi) = if self.neg_log2 <= other.neg_log2 {
            (self.neg_log2, other.neg_log2)
        } else {
            (other.neg_log2, self.neg_log2)
        };
        // eps_lo + eps_hi = 2^-lo (1 + 2^-(hi - lo))
        let v = lo - (-(hi - lo)).exp2().ln_1p() / std::f64::consts::LN_2;
        SecurityLevel { neg_log2: v.max(0.0) }
    }
}

/// Sum of two closeness parameters.
pub fn eps_add(a: SecurityLevel, b: SecurityLevel) -> SecurityLevel {
    a + b
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_perfect() {
            f.write_str("0")
        } else {
            write!(f, "2^-{}", self.neg_log2)
        }
    }
}

impl FromStr for SecurityLevel {
    type Err = Error;

    /// Accepts `2^-N` (N may be fractional), `0`, or a decimal in `[0, 1]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(exp) = s.strip_prefix("2^-") {
            let n: f64 = exp
                .parse()
                .map_err(|e| Error::Parse(format!("bad exponent in {s:?}: {e}")))?;
            return Self::from_neg_log2(n);
        }
        if s == "2^0" {
            return Ok(Self::TRIVIAL);
        }
        let eps: f64 = s.parse().map_err(|e| Error::Parse(format!("bad epsilon {s:?}: {e}")))?;
        Self::from_eps(eps)
    }
}

/// What kind of guarantee a min-entropy figure carries.
///
/// Ordered from strongest to weakest; joining takes the weaker, so `Hill`
/// absorbs everything.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntropyKind {
    MinEntropy,
    SmoothMinEntropy,
    /// Computational (pseudo-)entropy; security of anything derived is no longer unconditional.
    Hill,
}

impl EntropyKind {
    pub fn join(self, other: EntropyKind) -> EntropyKind {
        self.max(other)
    }

    pub fn is_information_theoretic(self) -> bool {
        self != EntropyKind::Hill
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntropyKind::MinEntropy => "min-entropy",
            EntropyKind::SmoothMinEntropy => "smooth-min-entropy",
            EntropyKind::Hill => "hill",
        }
    }
}

impl fmt::Display for EntropyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntropyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min-entropy" | "min" => Ok(EntropyKind::MinEntropy),
            "smooth-min-entropy" | "smooth" => Ok(EntropyKind::SmoothMinEntropy),
            "hill" => Ok(EntropyKind::Hill),
            other => Err(Error::Parse(format!("unknown entropy kind {other:?}"))),
        }
    }
}

/// A `(length, H_min(X|E))` source with smoothing/closeness `eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec {
    label: String,
    length: u64,
    hmin: f64,
    eps: SecurityLevel,
    kind: EntropyKind,
    /// Atomic source labels this spec was assembled from.
    origin: Vec<String>,
}

impl SourceSpec {
    pub fn new(
        label: impl Into<String>,
        length: u64,
        hmin: f64,
        eps: SecurityLevel,
        kind: EntropyKind,
    ) -> Result<Self> {
        let label = label.into();
        let spec = Self {
            origin: vec![label.clone()],
            label,
            length,
            hmin,
            eps,
            kind,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A secure source: min-entropy equal to its length, `eps`-close to uniform.
    pub fn secure(label: impl Into<String>, length: u64, eps: SecurityLevel, kind: EntropyKind) -> Self {
        Self::new(label, length, length as f64, eps, kind).expect("hmin = length is always valid")
    }

    fn validate(&self) -> Result<()> {
        if !self.hmin.is_finite() || self.hmin < 0.0 || self.hmin > self.length as f64 {
            return Err(Error::InvalidSource(format!(
                "{}: min-entropy {} outside [0, {}]",
                self.label, self.hmin, self.length
            )));
        }
        Ok(())
    }

    fn derived(&self, label: String, length: u64, hmin: f64) -> Self {
        let out = Self {
            origin: vec![label.clone()],
            label,
            length,
            hmin,
            eps: self.eps,
            kind: self.kind,
        };
        debug_assert!(out.validate().is_ok());
        out
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn hmin(&self) -> f64 {
        self.hmin
    }

    pub fn eps(&self) -> SecurityLevel {
        self.eps
    }

    pub fn kind(&self) -> EntropyKind {
        self.kind
    }

    pub fn origin(&self) -> &[String] {
        &self.origin
    }

    pub fn is_secure(&self) -> bool {
        self.hmin == self.length as f64
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        let label = label.into();
        if self.origin.len() == 1 {
            self.origin = vec![label.clone()];
        }
        self.label = label;
        self
    }

    pub fn with_kind(mut self, kind: EntropyKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("label", &self.label)
            .set("length_bits", self.length)
            .set("hmin_bits", self.hmin)
            .set("neg_log2_eps", self.eps.neg_log2())
            .set("kind", self.kind);
        doc
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let neg: f64 = match doc.require("neg_log2_eps")? {
            "inf" => f64::INFINITY,
            v => v.parse().map_err(|e| Error::Parse(format!("neg_log2_eps: {e}")))?,
        };
        Self::new(
            doc.require("label")?,
            doc.parse_field("length_bits")?,
            doc.parse_field("hmin_bits")?,
            SecurityLevel::from_neg_log2(neg)?,
            doc.parse_field("kind")?,
        )
    }
}

/// Caller-asserted conditional independence between atomic sources.
///
/// The ledger cannot verify independence from descriptors, so every pair that
/// is ever combined must be asserted explicitly.
#[derive(Clone, Debug, Default)]
pub struct Independence {
    pairs: BTreeSet<(String, String)>,
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl Independence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Asserts that every atomic part of `a` is independent of every atomic part of `b`.
    pub fn assert(&mut self, a: &SourceSpec, b: &SourceSpec) -> &mut Self {
        for x in &a.origin {
            for y in &b.origin {
                self.pairs.insert(ordered(x, y));
            }
        }
        self
    }

    /// All pairs among `sources` asserted independent.
    pub fn mutual(sources: &[&SourceSpec]) -> Self {
        let mut ind = Self::new();
        for (i, a) in sources.iter().enumerate() {
            for b in &sources[i + 1..] {
                ind.assert(a, b);
            }
        }
        ind
    }

    pub fn merge(&mut self, other: &Independence) -> &mut Self {
        self.pairs.extend(other.pairs.iter().cloned());
        self
    }

    pub fn check(&self, a: &SourceSpec, b: &SourceSpec) -> Result<()> {
        for x in &a.origin {
            for y in &b.origin {
                if x == y || !self.pairs.contains(&ordered(x, y)) {
                    return Err(Error::NotIndependent(x.clone(), y.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Concatenation of two conditionally independent sources: lengths and
/// min-entropies add, closeness parameters add.
pub fn concat_sources(a: &SourceSpec, b: &SourceSpec, independence: &Independence) -> Result<SourceSpec> {
    independence.check(a, b)?;
    let mut origin = a.origin.clone();
    origin.extend(b.origin.iter().cloned());
    let out = SourceSpec {
        label: format!("{}+{}", a.label, b.label),
        length: a.length + b.length,
        hmin: a.hmin + b.hmin,
        eps: eps_add(a.eps, b.eps),
        kind: a.kind.join(b.kind),
        origin,
    };
    out.validate()?;
    Ok(out)
}

/// Decomposes a secure source into two secure, mutually independent parts
/// that each keep the parent's closeness parameter.
pub fn split_secure(x: &SourceSpec, at: u64) -> Result<(SourceSpec, SourceSpec, Independence)> {
    if !x.is_secure() {
        return Err(Error::NotSecure(x.label.clone()));
    }
    if at > x.length {
        return Err(Error::Range(format!(
            "split point {at} beyond length {} of {}",
            x.length, x.label
        )));
    }
    let head = x.derived(format!("{}[..{at}]", x.label), at, at as f64);
    let tail_len = x.length - at;
    let tail = x.derived(format!("{}[{at}..]", x.label), tail_len, tail_len as f64);
    let independence = Independence::mutual(&[&head, &tail]);
    Ok((head, tail, independence))
}

/// Drops `q` bits; the worst case loses `q` bits of min-entropy.
pub fn truncate_source(x: &SourceSpec, q: u64) -> Result<SourceSpec> {
    if q > x.length {
        return Err(Error::Range(format!(
            "cannot truncate {q} bits from {}-bit source {}",
            x.length, x.label
        )));
    }
    let mut out = x.clone();
    out.length -= q;
    out.hmin = (x.hmin - q as f64).max(0.0).min(out.length as f64);
    Ok(out)
}

/// Conditions on `bits_revealed` bits of classical side information.
pub fn leak(x: &SourceSpec, bits_revealed: f64) -> SourceSpec {
    let mut out = x.clone();
    out.hmin = (x.hmin - bits_revealed.max(0.0)).max(0.0);
    out
}

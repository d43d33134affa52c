//! Toeplitz-family universal hashing over GF(2), used as a strong seeded extractor.
//!
//! The modified family is `H_s = [T_s | I_m]`: an `m x (n-m)` Toeplitz block
//! followed by the `m x m` identity, keyed by `n - 1` seed bits. The regular
//! family is a full `m x n` Toeplitz matrix keyed by `m + n - 1` seed bits.
//!
//! Toeplitz entries are laid out from the seed as
//!
//! ```text
//! T[i][0] = s[i]            for i in 0..m        (first column)
//! T[0][j] = s[m - 1 + j]    for j in 1..width    (rest of first row)
//! T[i][j] = T[i-1][j-1]
//! ```
//!
//! Two evaluation paths exist: [`SeededHash::extract`] walks the matrix entry
//! by entry and is the reference; [`SeededHash::extract_fast`] packs each row
//! into machine words and must agree with it bit for bit.

use num_rational::Ratio;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::gf2;

/// Largest input length for which [`collision_probability`] enumerates seeds.
pub const SEED_ENUMERATION_MAX_INPUT: usize = 20;
/// Largest input length for which [`exact_extraction_distance`] enumerates inputs.
pub const DISTANCE_MAX_INPUT: usize = 12;
/// Largest seed length for which [`exact_extraction_distance`] enumerates seeds.
pub const DISTANCE_MAX_SEED: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    ModifiedToeplitz,
    RegularToeplitz,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modified-toeplitz" | "modified" => Ok(Family::ModifiedToeplitz),
            "regular-toeplitz" | "regular" | "toeplitz" => Ok(Family::RegularToeplitz),
            other => Err(Error::Parse(format!("unknown extractor family {other:?}"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::ModifiedToeplitz => "modified-toeplitz",
            Family::RegularToeplitz => "regular-toeplitz",
        })
    }
}

/// Validated `(input_len, output_len, seed_len)` triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExtractorParams {
    input_len: usize,
    output_len: usize,
    seed_len: usize,
    family: Family,
}

impl ExtractorParams {
    /// Modified Toeplitz: `seed_len = n - 1`, `1 <= m <= n`.
    pub fn modified(input_len: usize, output_len: usize) -> Result<Self> {
        if output_len == 0 || output_len > input_len {
            return Err(Error::InvalidParams(format!(
                "modified Toeplitz needs 1 <= m <= n, got n={input_len} m={output_len}"
            )));
        }
        Ok(Self {
            input_len,
            output_len,
            seed_len: input_len - 1,
            family: Family::ModifiedToeplitz,
        })
    }

    /// Regular Toeplitz: `seed_len = m + n - 1`, `m >= 1`.
    pub fn regular(input_len: usize, output_len: usize) -> Result<Self> {
        if output_len == 0 || input_len == 0 {
            return Err(Error::InvalidParams(format!(
                "regular Toeplitz needs m >= 1 and n >= 1, got n={input_len} m={output_len}"
            )));
        }
        Ok(Self {
            input_len,
            output_len,
            seed_len: output_len + input_len - 1,
            family: Family::RegularToeplitz,
        })
    }

    pub fn new(family: Family, input_len: usize, output_len: usize) -> Result<Self> {
        match family {
            Family::ModifiedToeplitz => Self::modified(input_len, output_len),
            Family::RegularToeplitz => Self::regular(input_len, output_len),
        }
    }

    /// Checks an explicit seed length against the family constraint.
    pub fn with_seed_len(family: Family, input_len: usize, output_len: usize, seed_len: usize) -> Result<Self> {
        let p = Self::new(family, input_len, output_len)?;
        if p.seed_len != seed_len {
            return Err(Error::InvalidParams(format!(
                "{family} with n={input_len} m={output_len} needs a {}-bit seed, got {seed_len}",
                p.seed_len
            )));
        }
        Ok(p)
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn seed_len(&self) -> usize {
        self.seed_len
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Columns covered by the Toeplitz block.
    fn toeplitz_width(&self) -> usize {
        match self.family {
            Family::ModifiedToeplitz => self.input_len - self.output_len,
            Family::RegularToeplitz => self.input_len,
        }
    }
}

/// One member of the hash family, selected by its seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeededHash {
    params: ExtractorParams,
    seed: BitString,
}

impl SeededHash {
    pub fn new(params: ExtractorParams, seed: BitString) -> Result<Self> {
        if seed.len() != params.seed_len {
            return Err(Error::LengthMismatch {
                expected: params.seed_len,
                actual: seed.len(),
            });
        }
        Ok(Self { params, seed })
    }

    pub fn params(&self) -> &ExtractorParams {
        &self.params
    }

    pub fn seed(&self) -> &BitString {
        &self.seed
    }

    /// Entry `(i, j)` of the full `m x n` matrix.
    pub fn entry(&self, i: usize, j: usize) -> bool {
        let m = self.params.output_len;
        let width = self.params.toeplitz_width();
        if j >= width {
            // identity block of the modified family
            return j - width == i;
        }
        if i >= j {
            self.seed.bit(i - j)
        } else {
            self.seed.bit(m - 1 + j - i)
        }
    }

    /// The matrix as ASCII rows of `0`/`1`, for inputs of at most 64 bits.
    pub fn matrix_rows(&self) -> Result<Vec<String>> {
        let n = self.params.input_len;
        if n > 64 {
            return Err(Error::GuardExceeded(format!(
                "matrix dump limited to 64 columns, input has {n}"
            )));
        }
        Ok((0..self.params.output_len)
            .map(|i| (0..n).map(|j| if self.entry(i, j) { '1' } else { '0' }).collect())
            .collect())
    }

    fn check_input(&self, x: &BitString) -> Result<()> {
        if x.len() != self.params.input_len {
            return Err(Error::LengthMismatch {
                expected: self.params.input_len,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Reference evaluation: `z_i = XOR_j H[i][j] & x_j`, entry by entry.
    pub fn extract(&self, x: &BitString) -> Result<BitString> {
        self.check_input(x)?;
        let n = self.params.input_len;
        let xs: Vec<bool> = x.iter().collect();
        Ok(BitString::from_bits((0..self.params.output_len).map(|i| {
            (0..n).fold(false, |acc, j| acc ^ (self.entry(i, j) & xs[j]))
        })))
    }

    /// Same map as [`SeededHash::extract`] via one carry-less polynomial product.
    pub fn extract_fast(&self, x: &BitString) -> Result<BitString> {
        self.check_input(x)?;
        let m = self.params.output_len;
        let width = self.params.toeplitz_width();
        let (x_left, x_right) = x.split(width)?;

        // T x is a window of the carry-less product E * x_left, where E is the
        // diagonal string reversed: E = rev(s[m..]) || s[..m], y_i = (E * x)[i + width - 1].
        let mut out = if width == 0 {
            BitString::zeros(m)
        } else {
            let diag = self
                .seed
                .slice(m, m + width - 1)?
                .reversed()
                .concat(&self.seed.slice(0, m)?);
            let product = gf2::poly_mul(&diag.to_poly(), &x_left.to_poly());
            BitString::from_poly(&product, width - 1, m)
        };
        if self.params.family == Family::ModifiedToeplitz {
            out = out.xor(&x_right)?;
        }
        Ok(out)
    }
}

pub fn extract(h: &SeededHash, x: &BitString) -> Result<BitString> {
    h.extract(x)
}

pub fn extract_fast(h: &SeededHash, x: &BitString) -> Result<BitString> {
    h.extract_fast(x)
}

/// Small-size kernel for the exhaustive routines: rows as `u32` masks where
/// input bit `j` sits at mask bit `n - 1 - j`, and the output is packed the
/// same way. Seeds are enumerated as integers with `s[k]` at bit `d - 1 - k`.
struct SmallMatrix {
    columns: Vec<u32>,
}

impl SmallMatrix {
    fn new(params: &ExtractorParams, seed: u32) -> Self {
        let (n, m, d) = (params.input_len, params.output_len, params.seed_len);
        let seed_bit = |k: usize| (seed >> (d - 1 - k)) & 1 == 1;
        let width = params.toeplitz_width();
        let mut columns = vec![0u32; n];
        for (j, col) in columns.iter_mut().enumerate() {
            for i in 0..m {
                let e = if j >= width {
                    j - width == i
                } else if i >= j {
                    seed_bit(i - j)
                } else {
                    seed_bit(m - 1 + j - i)
                };
                if e {
                    *col |= 1 << (m - 1 - i);
                }
            }
        }
        Self { columns }
    }

    fn apply(&self, v: u32) -> u32 {
        let n = self.columns.len();
        let mut z = 0;
        let mut rest = v;
        while rest != 0 {
            let b = rest.trailing_zeros() as usize;
            z ^= self.columns[n - 1 - b];
            rest &= rest - 1;
        }
        z
    }

    /// Image of every input `0..2^n`, built incrementally from the lowest set bit.
    fn image_table(&self) -> Vec<u32> {
        let n = self.columns.len();
        let mut table = vec![0u32; 1 << n];
        for v in 1..table.len() {
            let b = v.trailing_zeros() as usize;
            table[v] = table[v & (v - 1)] ^ self.columns[n - 1 - b];
        }
        table
    }
}

/// Exact fraction of seeds under which `x` and `x2` collide.
pub fn collision_probability(params: &ExtractorParams, x: &BitString, x2: &BitString) -> Result<Ratio<u64>> {
    let n = params.input_len;
    for v in [x, x2] {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: v.len(),
            });
        }
    }
    if x == x2 {
        return Err(Error::IdenticalInputs);
    }
    if n > SEED_ENUMERATION_MAX_INPUT || params.seed_len > SEED_ENUMERATION_MAX_INPUT {
        return Err(Error::GuardExceeded(format!(
            "seed enumeration limited to n, d <= {SEED_ENUMERATION_MAX_INPUT} (n={n}, d={})",
            params.seed_len
        )));
    }
    // linear: H(x) = H(x2) iff H(x ^ x2) = 0
    let delta = x.xor(x2)?.to_u64() as u32;
    let seeds = 1u64 << params.seed_len;
    let collisions = (0..seeds)
        .filter(|&s| SmallMatrix::new(params, s as u32).apply(delta) == 0)
        .count() as u64;
    Ok(Ratio::new(collisions, seeds))
}

/// Explicit probability table over `{0,1}^n`; index `v` is the string whose
/// big-endian value is `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    bits: usize,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(bits: usize, probs: Vec<f64>) -> Result<Self> {
        if bits > 24 {
            return Err(Error::GuardExceeded(format!(
                "explicit tables limited to 24 bits, got {bits}"
            )));
        }
        if probs.len() != 1 << bits {
            return Err(Error::LengthMismatch {
                expected: 1 << bits,
                actual: probs.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParams(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self { bits, probs })
    }

    pub fn uniform(bits: usize) -> Result<Self> {
        Self::flat(bits, 0..1u64 << bits)
    }

    pub fn point(bits: usize, value: u64) -> Result<Self> {
        Self::flat(bits, [value])
    }

    /// Uniform over `support`, so min-entropy `log2 |support|`.
    pub fn flat<I: IntoIterator<Item = u64>>(bits: usize, support: I) -> Result<Self> {
        if bits > 24 {
            return Err(Error::GuardExceeded(format!(
                "explicit tables limited to 24 bits, got {bits}"
            )));
        }
        let mut probs = vec![0.0; 1 << bits];
        let mut count = 0usize;
        for v in support {
            let slot = probs
                .get_mut(v as usize)
                .ok_or_else(|| Error::Range(format!("value {v} outside {bits}-bit domain")))?;
            if *slot == 0.0 {
                *slot = 1.0;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::NotNormalized(0.0));
        }
        for p in probs.iter_mut() {
            *p /= count as f64;
        }
        Self::new(bits, probs)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_entropy(&self) -> f64 {
        let max = self.probs.iter().cloned().fold(0.0, f64::max);
        -max.log2()
    }
}

fn check_distance_guard(params: &ExtractorParams, dist: &Distribution) -> Result<()> {
    if params.input_len > DISTANCE_MAX_INPUT || params.seed_len > DISTANCE_MAX_SEED {
        return Err(Error::GuardExceeded(format!(
            "distance enumeration limited to n <= {DISTANCE_MAX_INPUT}, d <= {DISTANCE_MAX_SEED} (n={}, d={})",
            params.input_len, params.seed_len
        )));
    }
    if dist.bits != params.input_len {
        return Err(Error::LengthMismatch {
            expected: params.input_len,
            actual: dist.bits,
        });
    }
    Ok(())
}

/// Distance of `(Ext(X, S), S)` from `(U_m, S)` for a uniform seed:
/// `1/2 * sum_s 2^-d * sum_z |Pr[Ext(X, s) = z] - 2^-m|`.
pub fn exact_extraction_distance(params: &ExtractorParams, dist: &Distribution) -> Result<f64> {
    check_distance_guard(params, dist)?;
    let per_seed = per_seed_distances(params, dist);
    Ok(per_seed.iter().sum::<f64>() / per_seed.len() as f64)
}

/// As [`exact_extraction_distance`] but with the seed drawn from `seed_dist`.
pub fn exact_extraction_distance_with_seed(
    params: &ExtractorParams,
    dist: &Distribution,
    seed_dist: &Distribution,
) -> Result<f64> {
    check_distance_guard(params, dist)?;
    if seed_dist.bits != params.seed_len {
        return Err(Error::LengthMismatch {
            expected: params.seed_len,
            actual: seed_dist.bits,
        });
    }
    let per_seed = per_seed_distances(params, dist);
    Ok(per_seed.iter().zip(&seed_dist.probs).map(|(d, p)| d * p).sum())
}

/// `1/2 * sum_z |Pr[Ext(X, s) = z] - 2^-m|` for every seed `s`.
pub fn per_seed_distances(params: &ExtractorParams, dist: &Distribution) -> Vec<f64> {
    let m = params.output_len;
    let target = (-(m as f64)).exp2();
    let support: Vec<(usize, f64)> = dist
        .probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(v, p)| (v, *p))
        .collect();
    let mut out_probs = vec![0.0f64; 1 << m];
    (0..1u64 << params.seed_len)
        .map(|s| {
            let table = SmallMatrix::new(params, s as u32).image_table();
            out_probs.iter_mut().for_each(|p| *p = 0.0);
            for &(v, p) in &support {
                out_probs[table[v] as usize] += p;
            }
            0.5 * out_probs.iter().map(|p| (p - target).abs()).sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(s: &str) -> BitString {
        s.parse().unwrap()
    }

    /// Independent oracle: build the matrix from the first-column/first-row
    /// recurrence and multiply over GF(2).
    fn oracle_matrix(params: &ExtractorParams, seed: &BitString) -> Vec<Vec<bool>> {
        let (n, m) = (params.input_len(), params.output_len());
        let width = match params.family() {
            Family::ModifiedToeplitz => n - m,
            Family::RegularToeplitz => n,
        };
        let s: Vec<bool> = seed.iter().collect();
        let mut t = vec![vec![false; width]; m];
        for i in 0..m {
            for j in 0..width {
                t[i][j] = if j == 0 {
                    s[i]
                } else if i == 0 {
                    s[m - 1 + j]
                } else {
                    t[i - 1][j - 1]
                };
            }
        }
        (0..m)
            .map(|i| {
                let mut row = t[i].clone();
                if width < n {
                    row.extend((0..m).map(|k| k == i));
                }
                row
            })
            .collect()
    }

    fn oracle_apply(mat: &[Vec<bool>], x: &BitString) -> BitString {
        let xs: Vec<bool> = x.iter().collect();
        BitString::from_bits(
            mat.iter()
                .map(|row| row.iter().zip(&xs).fold(false, |a, (r, x)| a ^ (r & x))),
        )
    }

    #[test]
    fn params_constraints() {
        let p = ExtractorParams::modified(10, 4).unwrap();
        assert_eq!(p.seed_len(), 9);
        assert!(ExtractorParams::modified(10, 0).is_err());
        assert!(ExtractorParams::modified(10, 11).is_err());
        assert!(ExtractorParams::modified(10, 10).is_ok());
        let r = ExtractorParams::regular(10, 4).unwrap();
        assert_eq!(r.seed_len(), 13);
        assert!(ExtractorParams::regular(10, 0).is_err());
        assert!(ExtractorParams::regular(4, 10).is_ok());
        assert!(ExtractorParams::with_seed_len(Family::ModifiedToeplitz, 10, 4, 8).is_err());
    }

    #[test]
    fn seed_length_must_match() {
        let p = ExtractorParams::modified(3, 2).unwrap();
        assert!(matches!(
            SeededHash::new(p, b("101")),
            Err(Error::LengthMismatch { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn hand_example_n3_m2() {
        // H = [[s0,1,0],[s1,0,1]] with s = (1,0); x = (1,1,0)
        let p = ExtractorParams::modified(3, 2).unwrap();
        let h = SeededHash::new(p, b("10")).unwrap();
        let x = b("110");
        assert_eq!(h.extract(&x).unwrap(), b("00"));
        assert_eq!(h.extract_fast(&x).unwrap(), b("00"));
        assert_eq!(oracle_apply(&oracle_matrix(&p, h.seed()), &x), b("00"));
        assert_eq!(h.matrix_rows().unwrap(), vec!["110", "001"]);
    }

    #[test]
    fn zero_input_maps_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(n, m) in &[(1, 1), (5, 3), (64, 64), (200, 17)] {
            let p = ExtractorParams::modified(n, m).unwrap();
            let h = SeededHash::new(p, BitString::random(&mut rng, n - 1)).unwrap();
            assert!(h.extract(&BitString::zeros(n)).unwrap().is_zero());
            assert!(h.extract_fast(&BitString::zeros(n)).unwrap().is_zero());
        }
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let p = ExtractorParams::modified(3, 2).unwrap();
        let h = SeededHash::new(p, b("10")).unwrap();
        assert!(h.extract(&b("11")).is_err());
        assert!(h.extract_fast(&b("1100")).is_err());
    }

    #[test]
    fn m_equals_n_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ExtractorParams::modified(70, 70).unwrap();
        let h = SeededHash::new(p, BitString::random(&mut rng, 69)).unwrap();
        let x = BitString::random(&mut rng, 70);
        assert_eq!(h.extract(&x).unwrap(), x);
        assert_eq!(h.extract_fast(&x).unwrap(), x);
    }

    #[test]
    fn both_paths_match_oracle_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.gen_range(1..150);
            let m = rng.gen_range(1..=n);
            let family = if rng.gen() {
                Family::ModifiedToeplitz
            } else {
                Family::RegularToeplitz
            };
            let p = ExtractorParams::new(family, n, m).unwrap();
            let h = SeededHash::new(p, BitString::random(&mut rng, p.seed_len())).unwrap();
            let x = BitString::random(&mut rng, n);
            let want = oracle_apply(&oracle_matrix(&p, h.seed()), &x);
            assert_eq!(h.extract(&x).unwrap(), want);
            assert_eq!(h.extract_fast(&x).unwrap(), want);
        }
    }

    #[test]
    fn linearity_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let n = rng.gen_range(1..130);
            let m = rng.gen_range(1..=n);
            let p = ExtractorParams::modified(n, m).unwrap();
            let h = SeededHash::new(p, BitString::random(&mut rng, n - 1)).unwrap();
            let a = BitString::random(&mut rng, n);
            let c = BitString::random(&mut rng, n);
            let lhs = h.extract(&a.xor(&c).unwrap()).unwrap();
            let rhs = h.extract(&a).unwrap().xor(&h.extract(&c).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn collision_examples() {
        let p = ExtractorParams::modified(2, 1).unwrap();
        assert_eq!(collision_probability(&p, &b("10"), &b("00")).unwrap(), Ratio::new(1, 2));
        let p = ExtractorParams::modified(3, 2).unwrap();
        assert_eq!(
            collision_probability(&p, &b("001"), &b("000")).unwrap(),
            Ratio::new(0, 1)
        );
    }

    #[test]
    fn collision_errors() {
        let p = ExtractorParams::modified(3, 2).unwrap();
        assert!(matches!(
            collision_probability(&p, &b("001"), &b("001")),
            Err(Error::IdenticalInputs)
        ));
        let big = ExtractorParams::modified(21, 2).unwrap();
        let x = BitString::zeros(21);
        let y = x.flip(0).unwrap();
        assert!(matches!(
            collision_probability(&big, &x, &y),
            Err(Error::GuardExceeded(_))
        ));
    }

    #[test]
    fn collision_matches_enumeration_oracle() {
        // Direct enumeration with the oracle matrix, for every pair at n = 4.
        for m in 1..=4 {
            let p = ExtractorParams::modified(4, m).unwrap();
            for x in 0..16u64 {
                for y in (x + 1)..16 {
                    let (xb, yb) = (BitString::from_u64(x, 4), BitString::from_u64(y, 4));
                    let hits = (0..8u64)
                        .filter(|&s| {
                            let mat = oracle_matrix(&p, &BitString::from_u64(s, 3));
                            oracle_apply(&mat, &xb) == oracle_apply(&mat, &yb)
                        })
                        .count() as u64;
                    assert_eq!(collision_probability(&p, &xb, &yb).unwrap(), Ratio::new(hits, 8));
                }
            }
        }
    }

    #[test]
    fn modified_family_is_full_rank() {
        // [T | I] always has rank m; check via Gaussian elimination on the oracle rows.
        for n in 1..=8 {
            for m in 1..=n {
                let p = ExtractorParams::modified(n, m).unwrap();
                for s in 0..1u64 << (n - 1) {
                    let rows: Vec<u32> = oracle_matrix(&p, &BitString::from_u64(s, n - 1))
                        .iter()
                        .map(|r| r.iter().fold(0u32, |a, &b| (a << 1) | b as u32))
                        .collect();
                    assert_eq!(gf2_rank(rows), m, "n={n} m={m} s={s}");
                }
            }
        }
    }

    fn gf2_rank(mut rows: Vec<u32>) -> usize {
        let mut rank = 0;
        for bit in (0..32).rev() {
            if let Some(pos) = (rank..rows.len()).find(|&r| rows[r] >> bit & 1 == 1) {
                rows.swap(rank, pos);
                for r in 0..rows.len() {
                    if r != rank && rows[r] >> bit & 1 == 1 {
                        rows[r] ^= rows[rank];
                    }
                }
                rank += 1;
            }
        }
        rank
    }

    #[test]
    fn distance_uniform_input_is_zero() {
        for n in 1..=6 {
            for m in 1..=n {
                let p = ExtractorParams::modified(n, m).unwrap();
                let d = exact_extraction_distance(&p, &Distribution::uniform(n).unwrap()).unwrap();
                assert!(d.abs() < 1e-12, "n={n} m={m} d={d}");
            }
        }
    }

    #[test]
    fn distance_point_mass() {
        let p = ExtractorParams::modified(2, 2).unwrap();
        for v in 0..4 {
            let dist = Distribution::point(2, v).unwrap();
            for d in per_seed_distances(&p, &dist) {
                assert!((d - 0.75).abs() < 1e-12);
            }
            assert!((exact_extraction_distance(&p, &dist).unwrap() - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_guards_and_normalization() {
        let p = ExtractorParams::modified(13, 2).unwrap();
        assert!(matches!(
            exact_extraction_distance(&p, &Distribution::uniform(13).unwrap()),
            Err(Error::GuardExceeded(_))
        ));
        let r = ExtractorParams::regular(12, 10).unwrap();
        assert!(exact_extraction_distance(&r, &Distribution::uniform(12).unwrap()).is_err());
        assert!(matches!(
            Distribution::new(1, vec![0.5, 0.6]),
            Err(Error::NotNormalized(_))
        ));
        let p = ExtractorParams::modified(3, 2).unwrap();
        assert!(exact_extraction_distance(&p, &Distribution::uniform(4).unwrap()).is_err());
    }

    #[test]
    fn distance_matches_oracle_on_random_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let raw: Vec<f64> = (0..32).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let dist = Distribution::new(n, raw.iter().map(|p| p / total).collect()).unwrap();
        for m in 1..=n {
            let p = ExtractorParams::modified(n, m).unwrap();
            let mut acc = 0.0;
            for s in 0..16u64 {
                let mat = oracle_matrix(&p, &BitString::from_u64(s, 4));
                let mut out = vec![0.0; 1 << m];
                for v in 0..32u64 {
                    let z = oracle_apply(&mat, &BitString::from_u64(v, n)).to_u64();
                    out[z as usize] += dist.probs()[v as usize];
                }
                acc += 0.5 * out.iter().map(|q| (q - (0.5f64).powi(m as i32)).abs()).sum::<f64>();
            }
            let want = acc / 16.0;
            let got = exact_extraction_distance(&p, &dist).unwrap();
            assert!((want - got).abs() < 1e-12, "m={m}: {want} vs {got}");
        }
    }
}

//! Exact bit strings and GF(2) helpers.
//!
//! Bit 0 is the leading (most significant) bit. Storage packs bits MSB-first
//! into `u64` words, so the big-endian byte serialization is a straight copy
//! of the words' bytes. Unused low bits of the last word are always zero.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};

const WORD: usize = 64;

/// Magic prefix of the binary key/seed file format.
pub const FILE_MAGIC: &[u8; 8] = b"QLHLBITS";
/// Current binary file format version.
pub const FILE_VERSION: u8 = 0x01;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD)
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut out = Self {
            words: vec![u64::MAX; words_for(len)],
            len,
        };
        out.clear_tail();
        out
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        let mut out = Self {
            words: (0..words_for(len)).map(|_| rng.gen()).collect(),
            len,
        };
        out.clear_tail();
        out
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = Self::new();
        for b in bits {
            out.push(b);
        }
        out
    }

    /// Parses a string of `0`/`1` characters. Whitespace and `_` are ignored.
    pub fn parse_binary(s: &str) -> Result<Self> {
        let mut out = Self::new();
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                '_' => {}
                c if c.is_whitespace() => {}
                c => return Err(Error::Parse(format!("invalid bit character {c:?}"))),
            }
        }
        Ok(out)
    }

    /// Takes the first `len` bits of `bytes`, big-endian within each byte.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::Range(format!("{} bytes cannot hold {len} bits", bytes.len())));
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, chunk) in bytes[..len.div_ceil(8)].chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_be_bytes(buf);
        }
        let mut out = Self { words, len };
        out.clear_tail();
        Ok(out)
    }

    /// Whole bytes, 8 bits each.
    pub fn from_byte_slice(bytes: &[u8]) -> Self {
        Self::from_bytes(bytes, bytes.len() * 8).expect("length fits by construction")
    }

    /// Big-endian bytes, zero-padded in the low bits of the final byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            out.extend_from_slice(&w.to_be_bytes());
        }
        out.truncate(self.len.div_ceil(8));
        out
    }

    /// Low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64);
        Self::from_bits((0..len).rev().map(|i| (value >> i) & 1 == 1))
    }

    /// Interprets the string as an unsigned big-endian integer (len ≤ 64).
    pub fn to_u64(&self) -> u64 {
        assert!(self.len <= 64);
        if self.len == 0 {
            0
        } else {
            self.words[0] >> (WORD - self.len)
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Result<bool> {
        if i >= self.len {
            return Err(Error::Range(format!(
                "bit index {i} out of range for length {}",
                self.len
            )));
        }
        Ok(self.bit(i))
    }

    #[inline]
    pub(crate) fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD] >> (WORD - 1 - i % WORD)) & 1 == 1
    }

    /// Returns a copy with bit `i` inverted.
    pub fn flip(&self, i: usize) -> Result<Self> {
        if i >= self.len {
            return Err(Error::Range(format!(
                "bit index {i} out of range for length {}",
                self.len
            )));
        }
        let mut out = self.clone();
        out.words[i / WORD] ^= 1 << (WORD - 1 - i % WORD);
        Ok(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bit(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Polynomial view: bit `i` becomes coefficient `i`, LSB-first words.
    pub(crate) fn to_poly(&self) -> Vec<u64> {
        self.words.iter().map(|w| w.reverse_bits()).collect()
    }

    /// Coefficients `[start, start + len)` of an LSB-first polynomial.
    pub(crate) fn from_poly(poly: &[u64], start: usize, len: usize) -> Self {
        let base = start / WORD;
        let sh = start % WORD;
        let at = |k: usize| poly.get(k).copied().unwrap_or(0);
        let mut out = Self {
            words: (0..words_for(len))
                .map(|k| {
                    let lo = at(base + k);
                    let q = if sh == 0 {
                        lo
                    } else {
                        (lo >> sh) | (at(base + k + 1) << (WORD - sh))
                    };
                    q.reverse_bits()
                })
                .collect(),
            len,
        };
        out.clear_tail();
        out
    }

    /// The bits in reverse order.
    pub fn reversed(&self) -> Self {
        Self::from_bits((0..self.len).rev().map(|i| self.bit(i)))
    }

    fn push(&mut self, b: bool) {
        if self.len.is_multiple_of(WORD) {
            self.words.push(0);
        }
        if b {
            let i = self.len;
            self.words[i / WORD] |= 1 << (WORD - 1 - i % WORD);
        }
        self.len += 1;
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= u64::MAX << (WORD - rem);
            }
        }
    }

    /// 64 bits starting at `offset`, zero-filled past the end.
    #[inline]
    pub(crate) fn word_at(&self, offset: usize) -> u64 {
        let idx = offset / WORD;
        let sh = offset % WORD;
        let hi = self.words.get(idx).copied().unwrap_or(0);
        if sh == 0 {
            hi
        } else {
            let lo = self.words.get(idx + 1).copied().unwrap_or(0);
            (hi << sh) | (lo >> (WORD - sh))
        }
    }

    /// Bits `[start, end)` as a new string.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len {
            return Err(Error::Range(format!(
                "slice {start}..{end} out of range for length {}",
                self.len
            )));
        }
        let len = end - start;
        let mut out = Self {
            words: (0..words_for(len)).map(|k| self.word_at(start + k * WORD)).collect(),
            len,
        };
        out.clear_tail();
        Ok(out)
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    /// Appends `other` in place.
    pub fn extend(&mut self, other: &BitString) {
        let sh = self.len % WORD;
        if sh == 0 {
            self.words.extend_from_slice(&other.words);
        } else {
            for &w in &other.words {
                *self.words.last_mut().expect("sh != 0 implies a partial word") |= w >> sh;
                self.words.push(w << (WORD - sh));
            }
        }
        self.len += other.len;
        self.words.truncate(words_for(self.len));
        self.clear_tail();
    }

    /// Concatenates every part, in order.
    pub fn concat_all<'a, I: IntoIterator<Item = &'a BitString>>(parts: I) -> BitString {
        let mut out = BitString::new();
        for p in parts {
            out.extend(p);
        }
        out
    }

    pub fn split(&self, at: usize) -> Result<(BitString, BitString)> {
        if at > self.len {
            return Err(Error::Range(format!("split point {at} beyond length {}", self.len)));
        }
        Ok((self.slice(0, at)?, self.slice(at, self.len)?))
    }

    /// Splits into consecutive parts of the given lengths, which must sum to `len()`.
    pub fn split_many(&self, lens: &[usize]) -> Result<Vec<BitString>> {
        let total: usize = lens.iter().sum();
        if total != self.len {
            return Err(Error::LengthMismatch {
                expected: total,
                actual: self.len,
            });
        }
        let mut at = 0;
        lens.iter()
            .map(|&l| {
                let part = self.slice(at, at + l);
                at += l;
                part
            })
            .collect()
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        Ok(BitString {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        })
    }

    /// Drops the trailing `q` bits, keeping the prefix.
    pub fn truncate(&self, q: usize) -> Result<BitString> {
        if q > self.len {
            return Err(Error::Range(format!(
                "cannot truncate {q} bits from length {}",
                self.len
            )));
        }
        self.slice(0, self.len - q)
    }

    /// Parity of the bitwise AND, i.e. the GF(2) inner product.
    pub fn dot(&self, other: &BitString) -> Result<bool> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        Ok(ones & 1 == 1)
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.len.div_ceil(4));
        for b in self.to_bytes() {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    /// Inverse of [`to_hex`](Self::to_hex); `len` selects how many leading bits are kept.
    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        let hex = hex.trim();
        if !hex.len().is_multiple_of(2) {
            return Err(Error::Parse("hex string has odd length".into()));
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|e| Error::Parse(format!("invalid hex: {e}"))))
            .collect::<Result<Vec<u8>>>()?;
        Self::from_bytes(&bytes, len)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FILE_MAGIC)?;
        w.write_all(&[FILE_VERSION])?;
        w.write_all(&(self.len as u64).to_le_bytes())?;
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FILE_MAGIC {
            return Err(Error::Format("bad magic, not a bit string file".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != FILE_VERSION {
            return Err(Error::Format(format!("unsupported version {:#04x}", version[0])));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len =
            usize::try_from(u64::from_le_bytes(len)).map_err(|_| Error::Format("bit length overflows usize".into()))?;
        let mut payload = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut payload)?;
        let mut trailing = Vec::new();
        r.read_to_end(&mut trailing)?;
        if !trailing.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                trailing.len()
            )));
        }
        if len % 8 != 0 {
            let pad_mask = 0xffu8 >> (len % 8);
            if payload.last().is_some_and(|b| b & pad_mask != 0) {
                return Err(Error::Format("nonzero padding bits".into()));
            }
        }
        Self::from_bytes(&payload, len)
    }

    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

// Simulation-grade hygiene: overwrite the words before freeing them.
impl Drop for BitString {
    fn drop(&mut self) {
        for w in self.words.iter_mut() {
            // SAFETY: `w` is a valid, aligned, exclusively borrowed u64.
            unsafe { std::ptr::write_volatile(w, 0) };
        }
        std::sync::atomic::compiler_fence(std::sync::atomic::Ordering::SeqCst);
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, hex={})", self.len, self.to_hex())
        }
    }
}

impl std::str::FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_binary(s)
    }
}

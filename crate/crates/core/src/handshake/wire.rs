//! Record codec: `type (1 byte) | payload length (u32 BE) | payload`, where the
//! payload is a sequence of `length (u32 BE) | bytes` fields.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::bits::BitString;
use crate::error::{Error, Result};

pub const MESSAGE_COUNT: u8 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub index: u8,
    pub fields: Vec<Vec<u8>>,
}

impl Message {
    pub fn new(index: u8, fields: Vec<Vec<u8>>) -> Self {
        Self { index, fields }
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload_len: usize = self.fields.iter().map(|f| 4 + f.len()).sum();
        let mut out = Vec::with_capacity(5 + payload_len);
        out.push(self.index);
        out.extend_from_slice(&(payload_len as u32).to_be_bytes());
        for f in &self.fields {
            out.extend_from_slice(&(f.len() as u32).to_be_bytes());
            out.extend_from_slice(f);
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        5 + self.fields.iter().map(|f| 4 + f.len()).sum::<usize>()
    }

    /// Strict decoding: the type must be `expected`, lengths must cover the
    /// buffer exactly and the field count must be `field_count`.
    pub fn decode(bytes: &[u8], expected: u8, field_count: usize) -> Result<Self> {
        let malformed = |what: &str| Error::Format(format!("m{expected}: {what}"));
        let (&index, rest) = bytes.split_first().ok_or_else(|| malformed("empty record"))?;
        if index != expected {
            return Err(malformed(&format!("unexpected message type {index}")));
        }
        let (len, mut payload) = read_u32(rest).ok_or_else(|| malformed("truncated header"))?;
        if payload.len() != len as usize {
            return Err(malformed("payload length mismatch"));
        }
        let mut fields = Vec::with_capacity(field_count);
        while !payload.is_empty() {
            let (flen, body) = read_u32(payload).ok_or_else(|| malformed("truncated field header"))?;
            if body.len() < flen as usize {
                return Err(malformed("truncated field"));
            }
            let (field, tail) = body.split_at(flen as usize);
            fields.push(field.to_vec());
            payload = tail;
        }
        if fields.len() != field_count {
            return Err(malformed(&format!(
                "expected {field_count} fields, got {}",
                fields.len()
            )));
        }
        Ok(Self { index, fields })
    }

    /// Field `i` as an exact-size array.
    pub fn field_array<const N: usize>(&self, i: usize) -> Result<[u8; N]> {
        self.fields[i]
            .as_slice()
            .try_into()
            .map_err(|_| Error::Format(format!("m{} field {i}: expected {N} bytes", self.index)))
    }

    /// Field `i` as a bit string of exactly `len` bits with zero padding.
    pub fn field_bits(&self, i: usize, len: usize) -> Result<BitString> {
        let bytes = &self.fields[i];
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Format(format!(
                "m{} field {i}: expected {} bytes, got {}",
                self.index,
                len.div_ceil(8),
                bytes.len()
            )));
        }
        let bits = BitString::from_bytes(bytes, len)?;
        if bits.to_bytes() != *bytes {
            return Err(Error::Format(format!("m{} field {i}: nonzero padding", self.index)));
        }
        Ok(bits)
    }
}

fn read_u32(bytes: &[u8]) -> Option<(u32, &[u8])> {
    if bytes.len() < 4 {
        return None;
    }
    let (head, rest) = bytes.split_at(4);
    Some((u32::from_be_bytes(head.try_into().ok()?), rest))
}

/// Active interference with one message on the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tamper {
    /// Flip wire bit `bit` (MSB of byte 0 is bit 0) of message `message`.
    FlipBit {
        message: u8,
        bit: usize,
    },
    Drop {
        message: u8,
    },
}

impl Tamper {
    pub fn message(&self) -> u8 {
        match *self {
            Tamper::FlipBit { message, .. } | Tamper::Drop { message } => message,
        }
    }

    /// Applies the tamper to `wire` if it targets `index`; `None` means dropped.
    pub fn apply(&self, index: u8, mut wire: Vec<u8>) -> Option<Vec<u8>> {
        match *self {
            Tamper::FlipBit { message, bit } if message == index => {
                if let Some(byte) = wire.get_mut(bit / 8) {
                    *byte ^= 0x80 >> (bit % 8);
                }
                Some(wire)
            }
            Tamper::Drop { message } if message == index => None,
            _ => Some(wire),
        }
    }
}

impl FromStr for Tamper {
    type Err = Error;

    /// `m7:bit3` or `m2:drop`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("tamper spec {s:?}: expected mN:bitK or mN:drop"));
        let (msg, what) = s.split_once(':').ok_or_else(bad)?;
        let message: u8 = msg.strip_prefix('m').and_then(|m| m.parse().ok()).ok_or_else(bad)?;
        if !(1..=MESSAGE_COUNT).contains(&message) {
            return Err(bad());
        }
        if what == "drop" {
            return Ok(Tamper::Drop { message });
        }
        let bit = what.strip_prefix("bit").and_then(|b| b.parse().ok()).ok_or_else(bad)?;
        Ok(Tamper::FlipBit { message, bit })
    }
}

/// One `mN <hex>` line per record.
pub fn dump_transcript(records: &[Vec<u8>]) -> String {
    let mut out = String::new();
    for rec in records {
        let idx = rec.first().copied().unwrap_or(0);
        let _ = write!(out, "m{idx} ");
        for b in rec {
            let _ = write!(out, "{b:02x}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = Message::new(2, vec![vec![1, 2, 3], vec![], vec![0xff; 10]]);
        let wire = m.encode();
        assert_eq!(wire.len(), m.encoded_len());
        assert_eq!(&wire[..5], &[2, 0, 0, 0, 25]);
        assert_eq!(Message::decode(&wire, 2, 3).unwrap(), m);
    }

    #[test]
    fn strict_decoding() {
        let wire = Message::new(3, vec![vec![9; 8]]).encode();
        assert!(Message::decode(&wire, 4, 1).is_err());
        assert!(Message::decode(&wire, 3, 2).is_err());
        assert!(Message::decode(&wire[..wire.len() - 1], 3, 1).is_err());
        let mut longer = wire.clone();
        longer.push(0);
        assert!(Message::decode(&longer, 3, 1).is_err());
        // every single-bit flip of the header or field length is rejected
        for bit in 0..(9 * 8) {
            let flipped = Tamper::FlipBit { message: 3, bit }.apply(3, wire.clone()).unwrap();
            assert!(Message::decode(&flipped, 3, 1).is_err(), "bit {bit}");
        }
    }

    #[test]
    fn bit_fields_check_padding() {
        let m = Message::new(1, vec![vec![0b1010_0000]]);
        assert_eq!(m.field_bits(0, 3).unwrap(), "101".parse().unwrap());
        let m = Message::new(1, vec![vec![0b1010_0001]]);
        assert!(m.field_bits(0, 3).is_err());
        assert!(m.field_bits(0, 9).is_err());
    }

    #[test]
    fn tamper_specs() {
        assert_eq!(
            "m7:bit3".parse::<Tamper>().unwrap(),
            Tamper::FlipBit { message: 7, bit: 3 }
        );
        assert_eq!("m2:drop".parse::<Tamper>().unwrap(), Tamper::Drop { message: 2 });
        for bad in ["m9:bit1", "m0:drop", "7:bit1", "m7:bitx", "m7"] {
            assert!(bad.parse::<Tamper>().is_err(), "{bad}");
        }
        let t = Tamper::FlipBit { message: 1, bit: 0 };
        assert_eq!(t.apply(1, vec![0x00]), Some(vec![0x80]));
        assert_eq!(t.apply(2, vec![0x00]), Some(vec![0x00]));
        assert_eq!(Tamper::Drop { message: 1 }.apply(1, vec![1]), None);
    }

    #[test]
    fn dump_format() {
        assert_eq!(dump_transcript(&[vec![1, 0xab]]), "m1 01ab\n");
    }
}

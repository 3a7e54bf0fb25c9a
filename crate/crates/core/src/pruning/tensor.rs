use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::mask::{Mask, NmPattern};

/// A flat weight array with its keep-mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTensor {
    values: Vec<f64>,
    mask: Mask,
    group: Option<NmPattern>,
}

impl MaskedTensor {
    pub fn new(values: Vec<f64>, mask: Mask, group: Option<NmPattern>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::InvalidInput(format!(
                "values ({}) and mask ({}) differ in length",
                values.len(),
                mask.len()
            )));
        }
        if let Some(p) = group {
            if values.len() % p.m() != 0 {
                return Err(Error::InvalidInput(format!(
                    "length {} is not a multiple of the {p} group size",
                    values.len()
                )));
            }
        }
        Ok(Self { values, mask, group })
    }

    pub fn dense(values: Vec<f64>) -> Self {
        let mask = Mask::all_kept(values.len());
        Self { values, mask, group: None }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn group(&self) -> Option<NmPattern> {
        self.group
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Installs a new mask and zeroes the newly pruned entries.
    pub fn set_mask(&mut self, mask: Mask) -> Result<()> {
        if mask.len() != self.values.len() {
            return Err(Error::InvalidInput("mask length mismatch".into()));
        }
        self.mask = mask;
        self.zero_pruned();
        Ok(())
    }

    pub fn zero_pruned(&mut self) {
        for (v, &k) in self.values.iter_mut().zip(self.mask.as_slice()) {
            if !k {
                *v = 0.0;
            }
        }
    }

    /// Serializes to the flat binary layout:
    ///
    /// ```text
    /// magic "SPMT" | u32 version=1 | u64 len | u32 n | u32 m   (n = m = 0: no group)
    /// len x f64 values | ceil(len / 8) mask bytes, bit i%8 of byte i/8 set = kept
    /// ```
    ///
    /// All integers and floats are little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let len = self.values.len();
        let mut out = Vec::with_capacity(24 + 8 * len + len.div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(len as u64).to_le_bytes());
        let (n, m) = self.group.map_or((0, 0), |p| (p.n() as u32, p.m() as u32));
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&m.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut bits = vec![0u8; len.div_ceil(8)];
        for i in self.mask.kept_indices() {
            bits[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = bytes
            .get(..HEADER_LEN)
            .ok_or_else(|| Error::Format(format!("need {HEADER_LEN} header bytes, got {}", bytes.len())))?;
        if &header[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
        let m = u32::from_le_bytes(header[20..24].try_into().unwrap()) as usize;
        let expected = len
            .checked_mul(8)
            .and_then(|v| v.checked_add(HEADER_LEN + len.div_ceil(8)))
            .ok_or_else(|| Error::Format("length overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!("expected {expected} bytes, got {}", bytes.len())));
        }
        let group = match (n, m) {
            (0, 0) => None,
            _ => Some(NmPattern::new(n, m).map_err(|e| Error::Format(e.to_string()))?),
        };
        let body = &bytes[HEADER_LEN..];
        let values = body[..8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bits = &body[8 * len..];
        let mask = Mask::from((0..len).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect::<Vec<_>>());
        MaskedTensor::new(values, mask, group).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_bytes(&buf)
    }
}

const MAGIC: &[u8; 4] = b"SPMT";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Root-mean-square over kept entries only.
pub fn sparsity_aware_rms(t: &MaskedTensor) -> Result<f64> {
    rms_over(t.values(), t.mask())
}

pub(crate) fn rms_over(values: &[f64], mask: &Mask) -> Result<f64> {
    let (sum, count) = values
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &k)| k)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v * v, c + 1));
    if count == 0 {
        return Err(Error::EmptySupport);
    }
    Ok((sum / count as f64).sqrt())
}

/// Copy of `t` with every pruned entry set to zero.
pub fn apply_mask(t: &MaskedTensor) -> MaskedTensor {
    let mut out = t.clone();
    out.zero_pruned();
    out
}

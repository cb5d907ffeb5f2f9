//! Binary instance and factor files.
//!
//! Instance layout, all little-endian:
//!
//! ```text
//! "WLRA" | version u16 = 1 | n u64 | flags u16
//! A: n·n f64, row-major
//! W: n·n f64, row-major           (flags bit 0; otherwise W is all ones)
//! side-car: 4 × n u32 group ids   (flags bit 1; W rows, W cols, W∘A rows, W∘A cols)
//! ```
//!
//! Factor layout: `"WLRF" | version u16 = 1 | n u64 | k u64 | U: n·k f64 | V: n·k f64`.

use std::io::{Read, Write};

use wlra_core::{DenseMatrix, StructuredInstance};

use crate::error::{CliError, Result};

pub const INSTANCE_MAGIC: &[u8; 4] = b"WLRA";
pub const FACTOR_MAGIC: &[u8; 4] = b"WLRF";
pub const VERSION: u16 = 1;
pub const FLAG_DENSE_W: u16 = 1;
pub const FLAG_SIDECAR: u16 = 1 << 1;

const HEADER_LEN: usize = 16;

/// Group ids of the four pattern partitions, as stored in the side-car.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sidecar {
    pub w_rows: Vec<u32>,
    pub w_cols: Vec<u32>,
    pub wa_rows: Vec<u32>,
    pub wa_cols: Vec<u32>,
}

impl Sidecar {
    pub fn from_instance(inst: &StructuredInstance) -> Self {
        let ids = |g: &[usize]| g.iter().map(|&x| x as u32).collect();
        Self {
            w_rows: ids(inst.w_rows().group_of()),
            w_cols: ids(inst.w_cols().group_of()),
            wa_rows: ids(inst.wa_rows().group_of()),
            wa_cols: ids(inst.wa_cols().group_of()),
        }
    }

    fn arrays(&self) -> [&Vec<u32>; 4] {
        [&self.w_rows, &self.w_cols, &self.wa_rows, &self.wa_cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub a: DenseMatrix,
    /// `None` means all-ones weights.
    pub w: Option<DenseMatrix>,
    pub sidecar: Option<Sidecar>,
}

impl InstanceFile {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn weights(&self) -> DenseMatrix {
        self.w
            .clone()
            .unwrap_or_else(|| DenseMatrix::filled(self.n(), self.n(), 1.0))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.n();
        let mut flags = 0;
        if self.w.is_some() {
            flags |= FLAG_DENSE_W;
        }
        if self.sidecar.is_some() {
            flags |= FLAG_SIDECAR;
        }
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * n * n + 16 * n);
        out.extend_from_slice(INSTANCE_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&flags.to_le_bytes());
        put_f64s(&mut out, self.a.as_slice());
        if let Some(w) = &self.w {
            put_f64s(&mut out, w.as_slice());
        }
        if let Some(s) = &self.sidecar {
            for arr in s.arrays() {
                for &g in arr {
                    out.extend_from_slice(&g.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        if cur.take(4)? != INSTANCE_MAGIC {
            return Err(CliError::Corrupt("bad magic".into()));
        }
        let version = cur.u16()?;
        if version != VERSION {
            return Err(CliError::Corrupt(format!("unsupported version {version}")));
        }
        let n = usize::try_from(cur.u64()?)
            .map_err(|_| CliError::Corrupt("n does not fit in memory".into()))?;
        let flags = cur.u16()?;
        if flags & !(FLAG_DENSE_W | FLAG_SIDECAR) != 0 {
            return Err(CliError::Corrupt(format!("unknown flags {flags:#06x}")));
        }
        let nn = n
            .checked_mul(n)
            .ok_or_else(|| CliError::Corrupt("n·n overflows".into()))?;
        let mut expected = nn.checked_mul(8);
        if flags & FLAG_DENSE_W != 0 {
            expected = expected.and_then(|e| e.checked_mul(2));
        }
        if flags & FLAG_SIDECAR != 0 {
            expected = expected.and_then(|e| e.checked_add(16 * n));
        }
        if expected != Some(bytes.len() - HEADER_LEN) {
            return Err(CliError::Corrupt(format!(
                "payload is {} bytes, header implies {}",
                bytes.len() - HEADER_LEN,
                expected.map_or_else(|| "overflow".to_string(), |e| e.to_string())
            )));
        }
        let a = DenseMatrix::from_vec(n, n, cur.f64s(nn)?)?;
        let w = if flags & FLAG_DENSE_W != 0 {
            Some(DenseMatrix::from_vec(n, n, cur.f64s(nn)?)?)
        } else {
            None
        };
        let sidecar = if flags & FLAG_SIDECAR != 0 {
            Some(Sidecar {
                w_rows: cur.u32s(n)?,
                w_cols: cur.u32s(n)?,
                wa_rows: cur.u32s(n)?,
                wa_cols: cur.u32s(n)?,
            })
        } else {
            None
        };
        Ok(Self { a, w, sidecar })
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(&self.to_bytes())
    }

    pub fn read_from(inp: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        inp.read_to_end(&mut bytes)
            .map_err(|e| CliError::io("<stream>", e))?;
        Self::from_bytes(&bytes)
    }
}

/// Serializes the factor pair `(U, V)`.
pub fn factors_to_bytes(u: &DenseMatrix, v: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 16 * u.as_slice().len());
    out.extend_from_slice(FACTOR_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(u.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(u.cols() as u64).to_le_bytes());
    put_f64s(&mut out, u.as_slice());
    put_f64s(&mut out, v.as_slice());
    out
}

pub fn factors_from_bytes(bytes: &[u8]) -> Result<(DenseMatrix, DenseMatrix)> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4)? != FACTOR_MAGIC || cur.u16()? != VERSION {
        return Err(CliError::Corrupt("not a version-1 factor file".into()));
    }
    let n = cur.u64()? as usize;
    let k = cur.u64()? as usize;
    let len = n
        .checked_mul(k)
        .ok_or_else(|| CliError::Corrupt("n·k overflows".into()))?;
    let u = DenseMatrix::from_vec(n, k, cur.f64s(len)?)?;
    let v = DenseMatrix::from_vec(n, k, cur.f64s(len)?)?;
    if cur.pos != bytes.len() {
        return Err(CliError::Corrupt("trailing bytes after factors".into()));
    }
    Ok((u, v))
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CliError::Corrupt("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(count * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, count: usize) -> Result<Vec<u32>> {
        Ok(self
            .take(count * 4)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize, with_w: bool) -> InstanceFile {
        let a = DenseMatrix::from_fn(n, n, |i, j| (i * n + j) as f64 * 0.25 - 3.0);
        let w = with_w.then(|| DenseMatrix::from_fn(n, n, |i, _| (i % 2) as f64 + 0.5));
        let inst = wlra_core::build_instance(&a, w.as_ref().unwrap_or(&DenseMatrix::filled(n, n, 1.0)), 0.0).unwrap();
        InstanceFile {
            a,
            w,
            sidecar: Some(Sidecar::from_instance(&inst)),
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = sample(2, true).to_bytes();
        assert_eq!(&bytes[..4], b"WLRA");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..14], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[14..16], &[3, 0]);
        assert_eq!(&bytes[16..24], &(-3.0f64).to_le_bytes());
        assert_eq!(bytes.len(), 16 + 2 * 4 * 8 + 4 * 2 * 4);
    }

    #[test]
    fn missing_w_means_ones() {
        let f = InstanceFile { sidecar: None, ..sample(3, false) };
        let back = InstanceFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.w, None);
        assert_eq!(back.weights(), DenseMatrix::filled(3, 3, 1.0));
    }

    #[test]
    fn corrupt_files_rejected() {
        let good = sample(3, true).to_bytes();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(InstanceFile::from_bytes(&bad_magic).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(InstanceFile::from_bytes(&bad_version).is_err());
        assert!(InstanceFile::from_bytes(&good[..good.len() - 1]).is_err());
        let mut long = good.clone();
        long.push(0);
        assert!(InstanceFile::from_bytes(&long).is_err());
        let mut huge_n = good.clone();
        huge_n[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(InstanceFile::from_bytes(&huge_n).is_err());
        assert!(InstanceFile::from_bytes(&good[..5]).is_err());
    }

    #[test]
    fn factor_file_round_trip() {
        let u = DenseMatrix::from_fn(4, 2, |i, j| (i + j) as f64);
        let v = DenseMatrix::from_fn(4, 2, |i, j| (i * j) as f64 - 0.5);
        let bytes = factors_to_bytes(&u, &v);
        assert_eq!(factors_from_bytes(&bytes).unwrap(), (u, v));
        assert!(factors_from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    proptest! {
        #[test]
        fn instance_round_trip_is_bitwise(
            n in 1usize..6,
            bits in proptest::collection::vec(any::<u64>(), 72),
            with_w in any::<bool>(),
            with_sidecar in any::<bool>(),
        ) {
            let a = DenseMatrix::from_fn(n, n, |i, j| f64::from_bits(bits[i * n + j]));
            let w = with_w.then(|| DenseMatrix::from_fn(n, n, |i, j| f64::from_bits(bits[36 + i * n + j])));
            let sidecar = with_sidecar.then(|| Sidecar {
                w_rows: (0..n as u32).collect(),
                w_cols: vec![0; n],
                wa_rows: (0..n as u32).rev().collect(),
                wa_cols: vec![7; n],
            });
            let f = InstanceFile { a, w, sidecar };
            let back = InstanceFile::from_bytes(&f.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), f.to_bytes());
            prop_assert_eq!(back.sidecar, f.sidecar);
        }
    }
}

//! Binary model files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CPG1"  u32 version  u64 total_length
//! u64 n_items, then per item: u32 byte length + UTF-8 id
//! u32 n_categories, then per category: u32 byte length + UTF-8 name
//! n_items × u32 category index
//! params block
//! u32 fingerprint length + fingerprint
//! u64 nnz, then nnz × (u32 row, u32 col, f64 weight), row-major
//! u32 CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::directionality::{AggregationFunction, AggregationKind, DeltaMode, TiePolicy};
use crate::error::{Error, FormatError, Result};
use crate::model::{ComplementarityModel, ModelParams};
use crate::projection::PruningPolicy;
use crate::sparse::SparseMatrix;

pub const MAGIC: &[u8; 4] = b"CPG1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_model(model: &ComplementarityModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes());

    out.extend_from_slice(&(model.items.len() as u64).to_le_bytes());
    for id in &model.items {
        put_str(&mut out, id);
    }
    out.extend_from_slice(&(model.categories.len() as u32).to_le_bytes());
    for c in &model.categories {
        put_str(&mut out, c);
    }
    for &c in &model.item_category {
        out.extend_from_slice(&c.to_le_bytes());
    }
    put_params(&mut out, &model.params);
    put_str(&mut out, &model.fingerprint);

    let w = &model.weights;
    out.extend_from_slice(&(w.nnz() as u64).to_le_bytes());
    for (r, c, v) in w.triplets() {
        out.extend_from_slice(&r.to_le_bytes());
        out.extend_from_slice(&c.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }

    let total = out.len() as u64 + 4;
    out[8..16].copy_from_slice(&total.to_le_bytes());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_params(out: &mut Vec<u8>, p: &ModelParams) {
    out.extend_from_slice(&p.alpha.to_le_bytes());
    out.extend_from_slice(&p.lambda.to_le_bytes());
    out.extend_from_slice(&p.kappa.to_le_bytes());
    out.push(p.aggregation.kind.code());
    out.extend_from_slice(&p.aggregation.scale.to_le_bytes());
    let (mode, m, eps) = match p.pruning {
        PruningPolicy::None => (0u8, 0u64, 0.0f64),
        PruningPolicy::TopMPerRow(m) => (1, m as u64, 0.0),
        PruningPolicy::EpsilonThreshold(e) => (2, 0, e),
    };
    out.push(mode);
    out.extend_from_slice(&m.to_le_bytes());
    out.extend_from_slice(&eps.to_le_bytes());
    out.extend_from_slice(&p.min_core.to_le_bytes());
    out.push(match p.delta_mode {
        DeltaMode::Steps => 0,
        DeltaMode::Days => 1,
    });
    out.push(match p.ties {
        TiePolicy::SequenceOrder => 0,
        TiePolicy::Bidirectional => 1,
    });
}

pub fn decode_model(bytes: &[u8]) -> Result<ComplementarityModel, FormatError> {
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) && !bytes.is_empty() {
            FormatError::Truncated {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            }
        } else {
            FormatError::BadMagic
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version == 0 || version > FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let total = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let found = bytes.len() as u64;
    if found < total {
        return Err(FormatError::Truncated { expected: total, found });
    }
    if found > total || total < HEADER_LEN as u64 + 4 {
        return Err(FormatError::Malformed(format!("declared length {total}, file has {found} bytes")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed });
    }

    let mut r = Reader {
        buf: body,
        pos: HEADER_LEN,
    };
    let n_items = r.u64()? as usize;
    let items = (0..n_items).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let n_categories = r.u32()? as usize;
    let categories = (0..n_categories).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let item_category = (0..n_items).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    if item_category.iter().any(|&c| c as usize >= n_categories) {
        return Err(FormatError::Malformed("item category out of range".into()));
    }
    let params = read_params(&mut r)?;
    let fingerprint = r.string()?;

    let nnz = r.u64()? as usize;
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_items];
    let mut last: Option<(u32, u32)> = None;
    for _ in 0..nnz {
        let (row, col, w) = (r.u32()?, r.u32()?, r.f64()?);
        if row as usize >= n_items || last.is_some_and(|prev| prev >= (row, col)) {
            return Err(FormatError::Malformed(format!("triplet ({row}, {col}) out of order or range")));
        }
        last = Some((row, col));
        rows[row as usize].push((col, w));
    }
    if r.pos != body.len() {
        return Err(FormatError::Malformed("trailing bytes after weights".into()));
    }
    let weights = SparseMatrix::from_rows(n_items, rows).map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(ComplementarityModel::from_parts(
        weights,
        items,
        categories,
        item_category,
        params,
        fingerprint,
    ))
}

fn read_params(r: &mut Reader<'_>) -> Result<ModelParams, FormatError> {
    let alpha = r.f64()?;
    let lambda = r.u32()?;
    let kappa = r.u32()?;
    let kind = AggregationKind::from_code(r.u8()?).ok_or_else(|| FormatError::Malformed("aggregation code".into()))?;
    let scale = r.f64()?;
    let mode = r.u8()?;
    let m = r.u64()?;
    let eps = r.f64()?;
    let pruning = match mode {
        0 => PruningPolicy::None,
        1 => PruningPolicy::TopMPerRow(m as usize),
        2 => PruningPolicy::EpsilonThreshold(eps),
        _ => return Err(FormatError::Malformed("pruning code".into())),
    };
    let min_core = r.u32()?;
    let delta_mode = match r.u8()? {
        0 => DeltaMode::Steps,
        1 => DeltaMode::Days,
        _ => return Err(FormatError::Malformed("delta mode code".into())),
    };
    let ties = match r.u8()? {
        0 => TiePolicy::SequenceOrder,
        1 => TiePolicy::Bidirectional,
        _ => return Err(FormatError::Malformed("tie policy code".into())),
    };
    let params = ModelParams {
        alpha,
        lambda,
        kappa,
        aggregation: AggregationFunction { kind, scale },
        pruning,
        min_core,
        delta_mode,
        ties,
    };
    params.validate().map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(params)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FormatError::Malformed(format!("field at byte {} runs past the body", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| FormatError::Malformed("invalid UTF-8 string".into()))
    }
}

pub fn save_model(model: &ComplementarityModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ComplementarityModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_model(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Interaction, InteractionLog};
    use crate::model::build_model;

    fn three_item_model() -> ComplementarityModel {
        let log = InteractionLog::from_interactions(
            [
                ("u", "a", 1, "X"),
                ("u", "b", 2, "Y"),
                ("u", "c", 3, ""),
                ("v", "a", 1, "X"),
                ("v", "c", 2, ""),
            ]
            .map(|(u, i, t, c)| Interaction::new(u, i, t, c)),
        )
        .unwrap();
        build_model(&log, &ModelParams::default().with_triplet(0.3, 2, 2)).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = three_item_model();
        assert!(m.weights().nnz() > 0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cpg");
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            back.weights().triplets().collect::<Vec<_>>(),
            m.weights().triplets().collect::<Vec<_>>()
        );
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let mut bytes = encode_model(&three_item_model());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode_model(&bytes), Err(FormatError::ChecksumMismatch { .. })));
    }

    #[test]
    fn newer_version_is_reported() {
        let mut bytes = encode_model(&three_item_model());
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert_eq!(
            decode_model(&bytes).unwrap_err(),
            FormatError::UnsupportedVersion { found: 7, supported: 1 }
        );
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = encode_model(&three_item_model());
        for cut in [2, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode_model(&bytes[..cut]), Err(FormatError::Truncated { .. })),
                "cut at {cut}"
            );
        }
        assert_eq!(decode_model(b"PNG\x89rest").unwrap_err(), FormatError::BadMagic);
        assert_eq!(decode_model(b"").unwrap_err(), FormatError::BadMagic);
    }

    #[test]
    fn encoding_is_deterministic() {
        assert_eq!(encode_model(&three_item_model()), encode_model(&three_item_model()));
    }
}

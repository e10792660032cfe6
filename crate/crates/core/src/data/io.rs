//! USKD binary dataset files.
//!
//! Layout (little-endian): `"USKD"`, u32 version, N, T, C, V, classes; V parent
//! indices (0xFFFFFFFF marks the root); N labels; N·T·C·V f32 values in
//! sample, frame, channel, joint order.

use std::fs;
use std::path::Path;

use super::dataset::Dataset;
use super::skeleton::{KinematicTree, SkeletonSequence};
use crate::error::{Error, Result};

pub const USKD_MAGIC: &[u8; 4] = b"USKD";
pub const USKD_VERSION: u32 = 1;
const ROOT_SENTINEL: u32 = u32::MAX;
const HEADER_BYTES: usize = 4 + 6 * 4;

pub fn dataset_to_bytes(d: &Dataset) -> Vec<u8> {
    let per = d.frames * d.channels * d.joints;
    let mut out = Vec::with_capacity(HEADER_BYTES + 4 * (d.joints + d.len() * (1 + per)));
    out.extend_from_slice(USKD_MAGIC);
    for v in [USKD_VERSION, d.len() as u32, d.frames as u32, d.channels as u32, d.joints as u32, d.num_classes as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in d.tree.parents() {
        let v = p.map_or(ROOT_SENTINEL, |p| p as u32);
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in &d.samples {
        out.extend_from_slice(&(s.label.unwrap_or(0) as u32).to_le_bytes());
    }
    for s in &d.samples {
        for v in &s.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != USKD_MAGIC {
        return Err(Error::format(0, "bad magic, expected USKD"));
    }
    let version = r.u32("version")?;
    if version != USKD_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let n = r.u32("sample count")? as usize;
    let t = r.u32("frame count")? as usize;
    let c = r.u32("channel count")? as usize;
    let v = r.u32("joint count")? as usize;
    let classes = r.u32("class count")? as usize;
    if t < 2 || c < 1 || v < 1 {
        return Err(Error::format(12, format!("invalid geometry T={t} C={c} V={v}")));
    }

    let per = t * c * v;
    let expected = HEADER_BYTES as u128 + 4 * (v as u128 + n as u128 * (1 + per as u128));
    if expected != bytes.len() as u128 {
        return Err(Error::format(
            8,
            format!(
                "header declares {n} samples ({expected} bytes) but file has {} bytes",
                bytes.len()
            ),
        ));
    }

    let tree_offset = r.pos;
    let mut parents = Vec::with_capacity(v);
    for _ in 0..v {
        let p = r.u32("parent index")?;
        parents.push(if p == ROOT_SENTINEL { None } else { Some(p as usize) });
    }
    let tree = KinematicTree::new(parents).map_err(|e| Error::format(tree_offset as u64, e.to_string()))?;

    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let offset = r.pos;
        let l = r.u32("label")? as usize;
        if l >= classes {
            return Err(Error::format(offset as u64, format!("label {l} out of range for {classes} classes")));
        }
        labels.push(l);
    }

    let mut samples = Vec::with_capacity(n);
    for label in labels {
        let offset = r.pos;
        let raw = r.take(4 * per, "sample payload")?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let s = SkeletonSequence::new(t, c, v, values, Some(label))
            .map_err(|e| Error::format(offset as u64, e.to_string()))?;
        samples.push(s);
    }
    Dataset::new(t, c, v, classes, tree, samples)
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_bytes(d))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    dataset_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Scenario};

    fn sample() -> Dataset {
        generate_synthetic(Scenario::Balanced, 3, 2, 8, 8, 4).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let d = sample();
        let bytes = dataset_to_bytes(&d);
        let back = dataset_from_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(dataset_to_bytes(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.uskd");
        write_dataset(&sample(), &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), sample());
    }

    fn offset_of(e: Error) -> u64 {
        match e {
            Error::DataFormat { offset, .. } => offset,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic() {
        let mut b = dataset_to_bytes(&sample());
        b[0] = b'X';
        assert_eq!(offset_of(dataset_from_bytes(&b).unwrap_err()), 0);
    }

    #[test]
    fn wrong_version() {
        let mut b = dataset_to_bytes(&sample());
        b[4] = 2;
        assert_eq!(offset_of(dataset_from_bytes(&b).unwrap_err()), 4);
    }

    #[test]
    fn count_inconsistent_with_payload() {
        let mut b = dataset_to_bytes(&sample());
        b[8] += 1;
        assert_eq!(offset_of(dataset_from_bytes(&b).unwrap_err()), 8);
        let b = dataset_to_bytes(&sample());
        assert!(dataset_from_bytes(&b[..b.len() - 3]).is_err());
        assert_eq!(offset_of(dataset_from_bytes(&b[..10]).unwrap_err()), 8);
    }

    #[test]
    fn bad_label_reports_its_offset() {
        let d = sample();
        let mut b = dataset_to_bytes(&d);
        let at = HEADER_BYTES + 4 * d.joints;
        b[at] = 9;
        assert_eq!(offset_of(dataset_from_bytes(&b).unwrap_err()), at as u64);
    }
}

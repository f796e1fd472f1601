//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                                  |
//! |--------------|----------------------------------------------------------|
//! | 8            | magic `TBCKPT01`                                         |
//! | 8            | `u64` manifest length `n`                                |
//! | n            | UTF-8 JSON manifest: `[{"name", "shape", "dtype"}, ...]` |
//! | 8 · Σ|shape| | values of every entry in manifest order, row-major `f64` |
//!
//! `dtype` is always `"f64"`; narrower scalar types are widened on save.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Scalar, Tensor};
use crate::error::{bail, Error, Result};

pub const MAGIC: &[u8; 8] = b"TBCKPT01";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

pub fn to_bytes<F: Scalar>(params: &ParamStore<F>) -> Result<Vec<u8>> {
    let manifest: Vec<ManifestEntry> = params
        .iter()
        .map(|p| ManifestEntry { name: p.name.clone(), shape: p.value.shape().to_vec(), dtype: "f64".into() })
        .collect();
    let manifest = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + manifest.len() + 8 * params.num_values());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    for p in params.iter() {
        for &x in p.value.data() {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes<F: Scalar>(bytes: &[u8]) -> Result<ParamStore<F>> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        bail!(Format, "not a checkpoint (bad magic)");
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let Some(manifest) = bytes.get(16..16 + n) else {
        bail!(Format, "truncated checkpoint manifest");
    };
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(manifest)?;
    let mut cursor = 16 + n;
    let mut store = ParamStore::new();
    for entry in manifest {
        if entry.dtype != "f64" {
            bail!(Format, "unsupported dtype {:?} for {}", entry.dtype, entry.name);
        }
        let count: usize = entry.shape.iter().product();
        let Some(raw) = bytes.get(cursor..cursor + 8 * count) else {
            bail!(Format, "truncated values for {}", entry.name);
        };
        let data = raw
            .chunks_exact(8)
            .map(|c| F::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        cursor += 8 * count;
        store.add(entry.name, Tensor::from_vec(&entry.shape, data)?)?;
    }
    if cursor != bytes.len() {
        bail!(Format, "{} trailing bytes after checkpoint values", bytes.len() - cursor);
    }
    Ok(store)
}

pub fn save<F: Scalar>(params: &ParamStore<F>, path: &Path) -> Result<()> {
    let bytes = to_bytes(params)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load<F: Scalar>(path: &Path) -> Result<ParamStore<F>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            a in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 6),
            b in any::<f64>().prop_filter("finite", |x| x.is_finite()),
        ) {
            let mut store = ParamStore::new();
            store.add("m", Tensor::from_vec(&[2, 3], a).unwrap()).unwrap();
            store.add("s", Tensor::scalar(b)).unwrap();
            let bytes = to_bytes(&store).unwrap();
            let back: ParamStore<f64> = from_bytes(&bytes).unwrap();
            prop_assert_eq!(to_bytes(&back).unwrap(), bytes);
            for (x, y) in store.iter().zip(back.iter()) {
                prop_assert_eq!(&x.name, &y.name);
                prop_assert_eq!(x.value.shape(), y.value.shape());
                for (p, q) in x.value.data().iter().zip(y.value.data()) {
                    prop_assert_eq!(p.to_bits(), q.to_bits());
                }
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(from_bytes::<f64>(b"nope").is_err());
        let mut store = ParamStore::<f64>::new();
        store.add("v", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let mut bytes = to_bytes(&store).unwrap();
        bytes.pop();
        assert!(from_bytes::<f64>(&bytes).is_err());
    }

    #[test]
    fn layout_is_documented_layout() {
        let mut store = ParamStore::<f64>::new();
        store.add("v", Tensor::vector(vec![1.5])).unwrap();
        let bytes = to_bytes(&store).unwrap();
        let manifest = br#"[{"name":"v","shape":[1],"dtype":"f64"}]"#;
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize, manifest.len());
        assert_eq!(&bytes[16..16 + manifest.len()], manifest);
        assert_eq!(&bytes[16 + manifest.len()..], &1.5f64.to_le_bytes());
    }
}

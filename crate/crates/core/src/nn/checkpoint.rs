//! Checkpoint layout: the magic bytes `JWD1`, a little-endian `u32` header
//! length, a JSON header, then every parameter as a little-endian `f32`.
//! Parameters go layer by layer (hidden layers, then the main head, then the
//! value head), each layer's `fan_in × fan_out` weights row-major followed by
//! its bias. When the header carries Adam state, the first and then the
//! second moments follow in the same order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, Architecture, Dense, DenseNet, Head, NetError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"JWD1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamHeader {
    pub config: AdamConfig,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    /// Input width followed by hidden widths.
    pub dims: Vec<usize>,
    pub head: Head,
    pub config_hash: Option<u64>,
    pub adam: Option<AdamHeader>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl CheckpointHeader {
    pub fn arch(&self) -> Result<Architecture, NetError> {
        let (&input, hidden) = self
            .dims
            .split_first()
            .ok_or_else(|| NetError::Checkpoint("empty dims".into()))?;
        Ok(Architecture {
            input,
            hidden: hidden.to_vec(),
            head: self.head,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub net: DenseNet<f32>,
    pub adam: Option<Adam<f32>>,
}

/// Checks applied when loading; `None` fields are not checked.
#[derive(Debug, Clone, Default)]
pub struct Expect {
    pub arch: Option<Architecture>,
    pub config_hash: Option<u64>,
}

fn put(out: &mut Vec<u8>, layers: &[Dense<f32>]) {
    for l in layers {
        for v in l.w.iter().chain(l.b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn take(blob: &[u8], pos: &mut usize, arch: &Architecture) -> Vec<Dense<f32>> {
    arch.layer_shapes()
        .into_iter()
        .map(|(i, o)| {
            let mut next = || {
                let v = f32::from_le_bytes(blob[*pos..*pos + 4].try_into().unwrap());
                *pos += 4;
                v
            };
            let w = ndarray::Array2::from_shape_fn((i, o), |_| next());
            let b = ndarray::Array1::from_shape_fn(o, |_| next());
            Dense { w, b }
        })
        .collect()
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    net: &DenseNet<f32>,
    adam: Option<&Adam<f32>>,
    config_hash: Option<u64>,
    metadata: BTreeMap<String, serde_json::Value>,
) -> Result<(), NetError> {
    let arch = net.arch();
    let mut dims = vec![arch.input];
    dims.extend(&arch.hidden);
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        dims,
        head: arch.head,
        config_hash,
        adam: adam.map(|a| AdamHeader {
            config: a.config,
            step: a.step,
        }),
        metadata,
    };
    let json = serde_json::to_vec(&header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len() + 4 * net.param_count() * if adam.is_some() { 3 } else { 1 });
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    put(&mut out, net.layers());
    if let Some(a) = adam {
        put(&mut out, &a.m);
        put(&mut out, &a.v);
    }
    w.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R, expect: &Expect) -> Result<Checkpoint, NetError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let bad = |m: &str| NetError::Checkpoint(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[8..header_end]).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(NetError::Checkpoint(format!("unsupported version {}", header.version)));
    }
    let arch = header.arch()?;
    if let Some(want) = &expect.arch {
        if *want != arch {
            return Err(NetError::Checkpoint(format!(
                "architecture mismatch: file has {arch:?}, expected {want:?}"
            )));
        }
    }
    if let Some(want) = expect.config_hash {
        if header.config_hash != Some(want) {
            return Err(NetError::Checkpoint(format!(
                "config hash mismatch: file has {:?}, expected {want}",
                header.config_hash
            )));
        }
    }
    let n = arch.param_count();
    let blocks = if header.adam.is_some() { 3 } else { 1 };
    let blob = &bytes[header_end..];
    if blob.len() != 4 * n * blocks {
        return Err(NetError::Checkpoint(format!(
            "parameter blob has {} bytes, expected {}",
            blob.len(),
            4 * n * blocks
        )));
    }
    let mut pos = 0;
    let layers = take(blob, &mut pos, &arch);
    let net = DenseNet::from_layers(arch.clone(), layers)?;
    let adam = header.adam.as_ref().map(|h| {
        let m = take(blob, &mut pos, &arch);
        let v = take(blob, &mut pos, &arch);
        Adam {
            config: h.config,
            step: h.step,
            m,
            v,
        }
    });
    Ok(Checkpoint { header, net, adam })
}

/// Writes to a temporary sibling and renames, so readers never see a partial file.
pub fn save_checkpoint(
    path: &Path,
    net: &DenseNet<f32>,
    adam: Option<&Adam<f32>>,
    config_hash: Option<u64>,
    metadata: BTreeMap<String, serde_json::Value>,
) -> Result<(), NetError> {
    let tmp = path.with_extension("jwd.tmp");
    {
        let f = std::fs::File::create(&tmp)?;
        let mut w = std::io::BufWriter::new(f);
        write_checkpoint(&mut w, net, adam, config_hash, metadata)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expect: &Expect) -> Result<Checkpoint, NetError> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?), expect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{train_step, Loss};
    use ndarray::array;

    fn trained() -> (DenseNet<f32>, Adam<f32>) {
        let arch = Architecture {
            input: 3,
            hidden: vec![5, 4],
            head: Head::PolicyValue { classes: 3 },
        };
        let mut net = DenseNet::new(arch, 2).unwrap();
        let mut adam = Adam::new(&net, AdamConfig::default());
        let x = array![[1.0f32, 0.0, 1.0]];
        let y = array![[0.2f32, 0.3, 0.5, -0.4]];
        for _ in 0..3 {
            train_step(&mut net, &mut adam, x.view(), y.view(), Loss::PolicyValue, 1e-4).unwrap();
        }
        (net, adam)
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let (net, adam) = trained();
        let mut meta = BTreeMap::new();
        meta.insert("version".to_string(), serde_json::json!(4));
        let mut a = Vec::new();
        write_checkpoint(&mut a, &net, Some(&adam), Some(42), meta).unwrap();
        assert_eq!(&a[..4], b"JWD1");
        let ck = read_checkpoint(&a[..], &Expect::default()).unwrap();
        assert_eq!(ck.net, net);
        assert_eq!(ck.adam.as_ref(), Some(&adam));
        let mut b = Vec::new();
        write_checkpoint(&mut b, &ck.net, ck.adam.as_ref(), ck.header.config_hash, ck.header.metadata).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let (net, _) = trained();
        let mut a = Vec::new();
        write_checkpoint(&mut a, &net, None, None, BTreeMap::new()).unwrap();
        for cut in [3, 7, 20, a.len() - 1] {
            assert!(read_checkpoint(&a[..cut], &Expect::default()).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn strict_checks() {
        let (net, _) = trained();
        let mut a = Vec::new();
        write_checkpoint(&mut a, &net, None, Some(7), BTreeMap::new()).unwrap();
        let wrong_hash = Expect {
            config_hash: Some(8),
            ..Expect::default()
        };
        assert!(read_checkpoint(&a[..], &wrong_hash).is_err());
        let right = Expect {
            config_hash: Some(7),
            arch: Some(net.arch().clone()),
        };
        assert!(read_checkpoint(&a[..], &right).is_ok());
        let mut other = net.arch().clone();
        other.hidden = vec![5, 5];
        let wrong_arch = Expect {
            arch: Some(other),
            ..Expect::default()
        };
        assert!(read_checkpoint(&a[..], &wrong_arch).is_err());
        let mut bad_magic = a.clone();
        bad_magic[0] = b'X';
        assert!(read_checkpoint(&bad_magic[..], &Expect::default()).is_err());
    }

    #[test]
    fn file_save_load() {
        let (net, adam) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pv_v1.jwd");
        save_checkpoint(&path, &net, Some(&adam), Some(1), BTreeMap::new()).unwrap();
        let ck = load_checkpoint(&path, &Expect::default()).unwrap();
        assert_eq!(ck.net, net);
    }
}

//! Versioned little-endian checkpoint container. See FORMATS.md for the
//! byte layout.

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::mlp::{Dense, Mlp, MlpGrads};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"FDGENCK\0";
pub const VERSION: u32 = 1;

/// Serializable state of a `ChaCha8Rng`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

/// A named network together with its optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NetRecord {
    pub name: String,
    pub net: Mlp,
    pub adam: AdamState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Resolved configuration in `key = value` form.
    pub config_text: String,
    pub step: u64,
    pub rng: RngState,
    pub nets: Vec<NetRecord>,
}

/// SHA-256 over every network's name and layer sizes.
pub fn arch_hash<'a>(nets: impl IntoIterator<Item = (&'a str, Vec<usize>)>) -> [u8; 32] {
    let mut h = Sha256::new();
    for (name, sizes) in nets {
        h.update((name.len() as u32).to_le_bytes());
        h.update(name.as_bytes());
        h.update((sizes.len() as u32).to_le_bytes());
        for s in sizes {
            h.update((s as u32).to_le_bytes());
        }
    }
    h.finalize().into()
}

pub fn config_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl Checkpoint {
    pub fn arch_hash(&self) -> [u8; 32] {
        arch_hash(self.nets.iter().map(|r| (r.name.as_str(), r.net.sizes())))
    }

    pub fn net(&self, name: &str) -> Result<&NetRecord> {
        self.nets
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("network '{name}' not present")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.arch_hash());
        out.extend_from_slice(&config_hash(&self.config_text));
        out.extend_from_slice(&(self.config_text.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for rec in &self.nets {
            out.extend_from_slice(&(rec.name.len() as u32).to_le_bytes());
            out.extend_from_slice(rec.name.as_bytes());
            write_layers(&mut out, rec.net.layers());
            out.extend_from_slice(&rec.adam.t.to_le_bytes());
            write_values(&mut out, &rec.adam.m.layers);
            write_values(&mut out, &rec.adam.v.layers);
        }
        let digest: [u8; 32] = Sha256::digest(&out).into();
        out.extend_from_slice(&digest);
        out
    }

    /// Parses and verifies magic, version, checksum, and both hashes.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let actual: [u8; 32] = Sha256::digest(body).into();
        if actual.as_slice() != digest {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let stored_arch: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stored_cfg: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let cfg_len = r.u64()? as usize;
        let config_text = String::from_utf8(r.take(cfg_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("config is not utf-8".into()))?;
        let step = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let n_nets = r.u32()? as usize;
        let mut nets = Vec::with_capacity(n_nets);
        for _ in 0..n_nets {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("network name is not utf-8".into()))?;
            let layers = r.layers()?;
            let t = r.u64()?;
            let m = r.values_like(&layers)?;
            let v = r.values_like(&layers)?;
            nets.push(NetRecord {
                name,
                net: Mlp::from_layers(layers),
                adam: AdamState {
                    m: MlpGrads { layers: m },
                    v: MlpGrads { layers: v },
                    t,
                },
            });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let ck = Self {
            config_text,
            step,
            rng: RngState { seed, stream, word_pos },
            nets,
        };
        if ck.arch_hash() != stored_arch {
            return Err(Error::Checkpoint("architecture hash mismatch".into()));
        }
        if config_hash(&ck.config_text) != stored_cfg {
            return Err(Error::Checkpoint("config hash mismatch".into()));
        }
        Ok(ck)
    }

    /// Rejects the checkpoint unless its architecture hash equals `expected`.
    pub fn expect_arch(&self, expected: [u8; 32]) -> Result<()> {
        if self.arch_hash() != expected {
            return Err(Error::Checkpoint(
                "architecture does not match the configuration".into(),
            ));
        }
        Ok(())
    }
}

fn write_layers(out: &mut Vec<u8>, layers: &[Dense]) {
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        out.extend_from_slice(&(l.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(l.output_dim() as u32).to_le_bytes());
    }
    write_values(out, layers);
}

fn write_values(out: &mut Vec<u8>, layers: &[Dense]) {
    for l in layers {
        for v in l.w.iter().chain(l.b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn layers(&mut self) -> Result<Vec<Dense>> {
        let n = self.u32()? as usize;
        if n == 0 {
            return Err(Error::Checkpoint("network without layers".into()));
        }
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            shapes.push((self.u32()? as usize, self.u32()? as usize));
        }
        for pair in shapes.windows(2) {
            if pair[0].1 != pair[1].0 {
                return Err(Error::Checkpoint("inconsistent layer sizes".into()));
            }
        }
        let zeros: Vec<Dense> = shapes.iter().map(|&(i, o)| Dense::zeros(i, o)).collect();
        self.values_like(&zeros)
    }

    fn values_like(&mut self, like: &[Dense]) -> Result<Vec<Dense>> {
        like.iter()
            .map(|l| {
                let (i, o) = (l.input_dim(), l.output_dim());
                let w = self.f64s(i * o)?;
                let b = self.f64s(o)?;
                Ok(Dense {
                    w: Array2::from_shape_vec((i, o), w).expect("weight shape"),
                    b: Array1::from(b),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 5, 2], &mut rng);
        let mut adam = AdamState::new(&net);
        adam.t = 7;
        adam.m.layers[0].w.fill(0.25);
        Checkpoint {
            config_text: "N = 4\n".into(),
            step: 42,
            rng: RngState {
                seed: [9; 32],
                stream: 1,
                word_pos: 1 << 70,
            },
            nets: vec![NetRecord {
                name: "actor".into(),
                net,
                adam,
            }],
        }
    }

    #[test]
    fn round_trip() {
        let ck = sample();
        let bytes = ck.encode();
        assert_eq!(&bytes[..8], b"FDGENCK\0");
        assert_eq!(Checkpoint::decode(&bytes).unwrap(), ck);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample().encode();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(Checkpoint::decode(&bytes).is_err());
        assert!(Checkpoint::decode(&bytes[..20]).is_err());
    }

    #[test]
    fn architecture_check() {
        let ck = sample();
        assert!(ck.expect_arch(arch_hash([("actor", vec![3, 5, 2])])).is_ok());
        assert!(ck.expect_arch(arch_hash([("actor", vec![3, 6, 2])])).is_err());
    }
}

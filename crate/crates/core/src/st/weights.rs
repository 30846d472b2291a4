//! SplitNet weight file.
//!
//! Little-endian layout:
//!
//! ```text
//! b"SPLTNET1"
//! u32 × 6     D, d_h, h, m_ind, L, M
//! u32         tensor count
//! per tensor: u16 name length, UTF-8 name, u8 rank, u32 × rank dims,
//!             row-major f32 data
//! ```
//!
//! Affine maps are stored as `[in, out]` matrices applied as `y = x·W + b`.
//! See [`expected_tensors`] for the canonical names and shapes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPLTNET1";

/// Architecture hyperparameters stored in the file header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StMeta {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub inducing: usize,
    pub layers: usize,
    pub seeds: usize,
}

impl StMeta {
    /// d_h=64, h=4, m_ind=32, L=2, M=2.
    pub fn default_for_dim(input_dim: usize) -> Self {
        Self { input_dim, hidden_dim: 64, heads: 4, inducing: 32, layers: 2, seeds: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("D", self.input_dim),
            ("d_h", self.hidden_dim),
            ("h", self.heads),
            ("m_ind", self.inducing),
            ("L", self.layers),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidWeights(format!("{name} must be positive")));
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidWeights(format!(
                "d_h = {} is not divisible by h = {}",
                self.hidden_dim, self.heads
            )));
        }
        if self.seeds != 2 {
            return Err(Error::InvalidWeights(format!("M must be 2, got {}", self.seeds)));
        }
        Ok(())
    }

    pub fn tensor_count(&self) -> usize {
        21 + 17 * self.layers
    }
}

pub const MAB_PARTS: [&str; 8] = ["wq", "wk", "wv", "wo", "ff_att.w", "ff_att.b", "ff_out.w", "ff_out.b"];

fn mab_shapes(prefix: &str, dh: usize, out: &mut Vec<(String, Vec<usize>)>) {
    for part in MAB_PARTS {
        let dims = if part.ends_with(".b") { vec![dh] } else { vec![dh, dh] };
        out.push((format!("{prefix}.{part}"), dims));
    }
}

/// Canonical tensor names and shapes, in file order.
pub fn expected_tensors(meta: &StMeta) -> Vec<(String, Vec<usize>)> {
    let dh = meta.hidden_dim;
    let mut out = vec![("embed.w".to_string(), vec![meta.input_dim, dh]), ("embed.b".to_string(), vec![dh])];
    for l in 0..meta.layers {
        out.push((format!("enc.isab{l}.ind"), vec![meta.inducing, dh]));
        mab_shapes(&format!("enc.isab{l}.mab_inner"), dh, &mut out);
        mab_shapes(&format!("enc.isab{l}.mab_outer"), dh, &mut out);
    }
    out.push(("dec.pma.seeds".to_string(), vec![meta.seeds, dh]));
    mab_shapes("dec.pma.mab", dh, &mut out);
    mab_shapes("dec.point_mab", dh, &mut out);
    out.push(("dec.out.w".to_string(), vec![dh, 1]));
    out.push(("dec.out.b".to_string(), vec![1]));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// Row-wise affine map `y = x·W + b`.
#[derive(Clone, Debug)]
pub struct Affine {
    pub w: DMatrix<f32>,
    pub b: DVector<f32>,
}

impl Affine {
    pub fn apply(&self, x: &DMatrix<f32>) -> DMatrix<f32> {
        let mut y = x * &self.w;
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.b[j]);
        }
        y
    }

    pub fn apply_relu(&self, x: &DMatrix<f32>) -> DMatrix<f32> {
        let mut y = self.apply(x);
        y.apply(|v| *v = v.max(0.0));
        y
    }
}

#[derive(Clone, Debug)]
pub struct MabWeights {
    pub wq: DMatrix<f32>,
    pub wk: DMatrix<f32>,
    pub wv: DMatrix<f32>,
    pub wo: DMatrix<f32>,
    pub ff_att: Affine,
    pub ff_out: Affine,
}

#[derive(Clone, Debug)]
pub struct IsabWeights {
    pub inducing: DMatrix<f32>,
    pub inner: MabWeights,
    pub outer: MabWeights,
}

/// A loaded SplitNet: raw tensors plus the typed views used by the forward pass.
#[derive(Clone, Debug)]
pub struct StWeights {
    pub meta: StMeta,
    tensors: BTreeMap<String, Tensor>,
    pub(crate) embed: Affine,
    pub(crate) isabs: Vec<IsabWeights>,
    pub(crate) pma_seeds: DMatrix<f32>,
    pub(crate) pma: MabWeights,
    pub(crate) point_mab: MabWeights,
    pub(crate) out: Affine,
}

impl StWeights {
    /// Validates names, shapes and values, then builds the typed network.
    pub fn from_tensors(meta: StMeta, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        meta.validate()?;
        let expected = expected_tensors(&meta);
        for (name, dims) in &expected {
            let t =
                tensors.get(name).ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {name}")))?;
            if &t.dims != dims {
                return Err(Error::ShapeMismatch(format!("{name}: expected {dims:?}, found {:?}", t.dims)));
            }
            if t.data.len() != dims.iter().product::<usize>() {
                return Err(Error::CorruptTensor(format!("{name}: wrong element count")));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::CorruptTensor(format!("{name}: non-finite value")));
            }
        }
        if tensors.len() != expected.len() {
            let extra =
                tensors.keys().find(|k| !expected.iter().any(|(n, _)| n == *k)).cloned().unwrap_or_default();
            return Err(Error::ShapeMismatch(format!("unexpected tensor {extra}")));
        }

        let mat = |name: &str| {
            let t = &tensors[name];
            DMatrix::from_row_slice(t.dims[0], t.dims[1], &t.data)
        };
        let vec = |name: &str| DVector::from_column_slice(&tensors[name].data);
        let affine = |prefix: &str| Affine { w: mat(&format!("{prefix}.w")), b: vec(&format!("{prefix}.b")) };
        let mab = |prefix: &str| MabWeights {
            wq: mat(&format!("{prefix}.wq")),
            wk: mat(&format!("{prefix}.wk")),
            wv: mat(&format!("{prefix}.wv")),
            wo: mat(&format!("{prefix}.wo")),
            ff_att: affine(&format!("{prefix}.ff_att")),
            ff_out: affine(&format!("{prefix}.ff_out")),
        };
        let isabs = (0..meta.layers)
            .map(|l| IsabWeights {
                inducing: mat(&format!("enc.isab{l}.ind")),
                inner: mab(&format!("enc.isab{l}.mab_inner")),
                outer: mab(&format!("enc.isab{l}.mab_outer")),
            })
            .collect();
        Ok(Self {
            meta,
            embed: affine("embed"),
            isabs,
            pma_seeds: mat("dec.pma.seeds"),
            pma: mab("dec.pma.mab"),
            point_mab: mab("dec.point_mab"),
            out: affine("dec.out"),
            tensors,
        })
    }

    /// Uniform ±`scale`/√fan_in initialization; biases and seeds included.
    pub fn random<R: Rng + ?Sized>(meta: StMeta, rng: &mut R, scale: f32) -> Result<Self> {
        meta.validate()?;
        let tensors = expected_tensors(&meta)
            .into_iter()
            .map(|(name, dims)| {
                let fan_in = dims[0] as f32;
                let bound = scale / fan_in.sqrt();
                let len = dims.iter().product();
                let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
                (name, Tensor { dims, data })
            })
            .collect();
        Self::from_tensors(meta, tensors)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let m = &self.meta;
        for v in [m.input_dim, m.hidden_dim, m.heads, m.inducing, m.layers, m.seeds] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, _) in expected_tensors(&self.meta) {
            let t = &self.tensors[&name];
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(|_| Error::BadMagic)? != MAGIC {
            return Err(Error::BadMagic);
        }
        let mut fields = [0usize; 6];
        for f in &mut fields {
            *f = r.u32()? as usize;
        }
        let meta = StMeta {
            input_dim: fields[0],
            hidden_dim: fields[1],
            heads: fields[2],
            inducing: fields[3],
            layers: fields[4],
            seeds: fields[5],
        };
        meta.validate()?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::CorruptTensor("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = dims.iter().product::<usize>();
            let raw = r.take(
                len.checked_mul(4).ok_or_else(|| Error::CorruptTensor(format!("{name}: size overflow")))?,
            )?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if tensors.insert(name.clone(), Tensor { dims, data }).is_some() {
                return Err(Error::ShapeMismatch(format!("duplicate tensor {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptTensor(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::from_tensors(meta, tensors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

pub fn load_weights(path: &Path) -> Result<StWeights> {
    StWeights::from_bytes(&fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
                Error::CorruptTensor(format!("file truncated at byte {}", self.bytes.len()))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_meta() -> StMeta {
        StMeta { input_dim: 2, hidden_dim: 8, heads: 2, inducing: 4, layers: 2, seeds: 2 }
    }

    fn header(meta: [u32; 6], count: u32) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        for v in meta {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&count.to_le_bytes());
        out
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let w = StWeights::random(small_meta(), &mut ChaCha8Rng::seed_from_u64(1), 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        w.save(&path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.meta, w.meta);
        assert_eq!(back.tensors(), w.tensors());
        assert_eq!(back.to_bytes(), w.to_bytes());
        assert_eq!(&back.to_bytes()[..8], b"SPLTNET1");
    }

    #[test]
    fn tensor_count_follows_architecture() {
        for layers in 1..4 {
            let meta = StMeta { layers, ..small_meta() };
            assert_eq!(expected_tensors(&meta).len(), meta.tensor_count());
        }
        assert_eq!(StMeta::default_for_dim(2).tensor_count(), 55);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let w = StWeights::random(small_meta(), &mut ChaCha8Rng::seed_from_u64(2), 1.0).unwrap();
        let bytes = w.to_bytes();
        for cut in [40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(StWeights::from_bytes(&bytes[..cut]), Err(Error::CorruptTensor(_))));
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = header([2, 8, 2, 4, 1, 2], 0);
        bytes[0] = b'X';
        assert!(matches!(StWeights::from_bytes(&bytes), Err(Error::BadMagic)));
        assert!(matches!(StWeights::from_bytes(b"SPL"), Err(Error::BadMagic)));
    }

    #[test]
    fn indivisible_heads_rejected() {
        let bytes = header([2, 33, 4, 4, 1, 2], 0);
        assert!(matches!(StWeights::from_bytes(&bytes), Err(Error::InvalidWeights(_))));
    }

    #[test]
    fn shape_and_value_checks() {
        let w = StWeights::random(small_meta(), &mut ChaCha8Rng::seed_from_u64(3), 1.0).unwrap();
        let mut tensors = w.tensors().clone();
        tensors.get_mut("embed.w").unwrap().dims = vec![8, 2];
        assert!(matches!(StWeights::from_tensors(w.meta, tensors), Err(Error::ShapeMismatch(_))));

        let mut tensors = w.tensors().clone();
        tensors.get_mut("dec.out.b").unwrap().data[0] = f32::NAN;
        assert!(matches!(StWeights::from_tensors(w.meta, tensors), Err(Error::CorruptTensor(_))));

        let mut tensors = w.tensors().clone();
        tensors.remove("dec.pma.seeds");
        assert!(matches!(StWeights::from_tensors(w.meta, tensors), Err(Error::ShapeMismatch(_))));
    }
}

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::graph::{layers, LayerKind};
use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::{BatchStats, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MLCS";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Momentum of the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;

/// Named network tensors: weights, biases, normalization parameters and
/// running statistics, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    tensors: IndexMap<String, Tensor<T>>,
}

/// Batch statistics observed by one normalization layer during a training
/// forward pass.
#[derive(Debug, Clone)]
pub struct BnUpdate<T> {
    pub layer: String,
    pub stats: BatchStats<T>,
}

pub fn is_trainable(name: &str) -> bool {
    !(name.ends_with(".running_mean") || name.ends_with(".running_var"))
}

impl<T: Scalar> Default for ModelParams<T> {
    fn default() -> Self {
        ModelParams {
            tensors: IndexMap::new(),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Fan-in scaled normal convolution weights (`σ = √(2/fan_in)`), zero
    /// biases and shifts, unit scales, fresh running statistics.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.check_graph()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = IndexMap::new();
        for layer in layers(config) {
            match layer.kind {
                LayerKind::Conv(spec) => {
                    let fan_in = spec.in_channels * spec.kernel.0 * spec.kernel.1;
                    let normal =
                        Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    let w = Tensor::from_fn(&spec.weight_shape(), |_| {
                        T::from_f64_lossy(normal.sample(&mut rng))
                    });
                    tensors.insert(format!("{}.weight", layer.name), w);
                    if spec.has_bias {
                        tensors.insert(
                            format!("{}.bias", layer.name),
                            Tensor::zeros(&[spec.out_channels]),
                        );
                    }
                }
                LayerKind::BatchNorm { channels } => {
                    let n = &layer.name;
                    tensors.insert(format!("{n}.gamma"), Tensor::ones(&[channels]));
                    tensors.insert(format!("{n}.beta"), Tensor::zeros(&[channels]));
                    tensors.insert(format!("{n}.running_mean"), Tensor::zeros(&[channels]));
                    tensors.insert(format!("{n}.running_var"), Tensor::ones(&[channels]));
                }
            }
        }
        Ok(ModelParams { tensors })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Option<Tensor<T>> {
        self.tensors.insert(name.into(), t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.iter().filter(|(k, _)| is_trainable(k))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Names and shapes must match the layer graph of `config` exactly.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> = layers(config)
            .iter()
            .flat_map(|l| l.tensors())
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, config expects {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for (name, shape) in expected {
            let t = self.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "params",
                    left: shape,
                    right: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Exponential moving average of batch statistics into running statistics.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<T>], momentum: f64) -> Result<()> {
        let m = T::from_f64_lossy(momentum);
        let keep = T::one() - m;
        for u in updates {
            let var = u.stats.unbiased_var();
            let rm = self.get_mut(&format!("{}.running_mean", u.layer))?;
            for (r, &b) in rm.data_mut().iter_mut().zip(&u.stats.mean) {
                *r = keep * *r + m * b;
            }
            let rv = self.get_mut(&format!("{}.running_var", u.layer))?;
            for (r, &b) in rv.data_mut().iter_mut().zip(&var) {
                *r = keep * *r + m * b;
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // checkpoint format:
    //   "MLCS" | version u32 | count u32 |
    //   per tensor: name_len u32 | name | dtype u8 | rank u32 | extents u32* | payload
    // all integers and floats little-endian

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(T::DTYPE.tag());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a checkpoint; tensors stored in another float width are converted.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r)?;
        let mut tensors = IndexMap::new();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let mut tag = [0u8; 1];
            read_exact(&mut r, &mut tag)?;
            let dtype = DType::from_tag(tag[0])
                .ok_or_else(|| Error::Checkpoint(format!("unknown dtype tag {}", tag[0])))?;
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let width = dtype.size_bytes();
            if r.len() < n * width {
                return Err(Error::Checkpoint(format!("truncated payload for `{name}`")));
            }
            let (payload, rest) = r.split_at(n * width);
            r = rest;
            let data: Vec<T> = if dtype == T::DTYPE {
                payload.chunks(width).map(T::read_le).collect()
            } else {
                match dtype {
                    DType::F32 => payload
                        .chunks(4)
                        .map(|c| T::from_f64_lossy(f32::read_le(c) as f64))
                        .collect(),
                    DType::F64 => payload
                        .chunks(8)
                        .map(|c| T::from_f64_lossy(f64::read_le(c)))
                        .collect(),
                }
            };
            if tensors
                .insert(name.clone(), Tensor::from_vec(shape, data)?)
                .is_some()
            {
                return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
            }
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(ModelParams { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_checkpoint_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of data".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::count_parameters;

    #[test]
    fn init_matches_graph_and_count() {
        let cfg = ModelConfig::miniature();
        let p = ModelParams::<f32>::init(&cfg, 3).unwrap();
        p.check_against(&cfg).unwrap();
        assert_eq!(p.trainable_count(), count_parameters(&cfg).total);
        assert_eq!(p, ModelParams::<f32>::init(&cfg, 3).unwrap());
        assert_ne!(p, ModelParams::<f32>::init(&cfg, 4).unwrap());
        assert_eq!(p.get("head.bias").unwrap(), &Tensor::zeros(&[1]));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = ModelConfig::miniature();
        for seed in 0..3 {
            let p = ModelParams::<f32>::init(&cfg, seed).unwrap();
            let bytes = p.to_checkpoint_bytes();
            assert_eq!(&bytes[..4], b"MLCS");
            let q = ModelParams::<f32>::from_checkpoint_bytes(&bytes).unwrap();
            assert_eq!(q.to_checkpoint_bytes(), bytes);
            for ((a, x), (b, y)) in p.iter().zip(q.iter()) {
                assert_eq!(a, b);
                let xb: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
                let yb: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
                assert_eq!(xb, yb);
            }
            let wide = ModelParams::<f64>::from_checkpoint_bytes(&bytes).unwrap();
            assert_eq!(wide.cast::<f32>(), p);
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let p = ModelParams::<f64>::init(&ModelConfig::miniature(), 0).unwrap();
        let bytes = p.to_checkpoint_bytes();
        assert!(ModelParams::<f64>::from_checkpoint_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelParams::<f64>::from_checkpoint_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(ModelParams::<f64>::from_checkpoint_bytes(&extra).is_err());
    }
}

//! Binary checkpoint codec.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "CVAE" | version u32 | input_channels u32 | latent_dim u32 | log_var u8
//! bn_momentum f64 | bn_epsilon f64 | dropout_seed u64 | dropout_step u64
//! layer_count u32 | layer_count × (section u8, kind u8, dims 3×u32, rate f64)
//! value_count u64 | value_count × f64
//! ```
//!
//! Values follow layer order; batch-norm layers store gamma, beta, running
//! mean, running variance.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::model::{Layer, LayerSpec, Model, ModelConfig};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CVAE";
pub const FORMAT_VERSION: u32 = 1;

const FIXED_HEADER: usize = 4 + 4 + 4 + 4 + 1 + 8 + 8 + 8 + 8 + 4;
const LAYER_RECORD: usize = 1 + 1 + 12 + 8;

const SECTION_ENCODER: u8 = 0;
const SECTION_Z_MEAN: u8 = 1;
const SECTION_Z_LOG_VAR: u8 = 2;
const SECTION_CLASSIFIER: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
struct LayerRecord {
    section: u8,
    kind: u8,
    dims: [u32; 3],
    rate: f64,
}

fn record_of(section: u8, layer: &Layer) -> LayerRecord {
    let (kind, dims, rate) = match layer {
        Layer::Conv1d(c) => (0, [c.in_channels, c.out_channels, c.kernel], 0.0),
        Layer::BatchNorm(bn) => (1, [bn.channels, 0, 0], 0.0),
        Layer::MaxPool1d(size) => (2, [*size, 0, 0], 0.0),
        Layer::Dropout(rate) => (3, [0, 0, 0], *rate),
        Layer::GlobalAvgPool => (4, [0, 0, 0], 0.0),
        Layer::Dense(d) => (5, [d.in_features, d.out_features, 0], 0.0),
        Layer::Relu => (6, [0, 0, 0], 0.0),
        Layer::Sigmoid => (7, [0, 0, 0], 0.0),
    };
    LayerRecord {
        section,
        kind,
        dims: dims.map(|d| d as u32),
        rate,
    }
}

fn spec_of(record: &LayerRecord) -> Result<LayerSpec> {
    let [a, b, c] = record.dims.map(|d| d as usize);
    Ok(match record.kind {
        0 => LayerSpec::Conv1d { filters: b, kernel: c },
        1 => LayerSpec::BatchNorm,
        2 => LayerSpec::MaxPool1d { size: a },
        3 => LayerSpec::Dropout { rate: record.rate },
        4 => LayerSpec::GlobalAvgPool,
        5 => LayerSpec::Dense { units: b },
        6 => LayerSpec::Relu,
        7 => LayerSpec::Sigmoid,
        k => return Err(Error::CorruptCheckpoint(format!("unknown layer kind {k}"))),
    })
}

fn manifest(model: &Model) -> Vec<LayerRecord> {
    let cfg = model.config();
    let enc = cfg.encoder.len();
    let head_end = enc + 1 + usize::from(cfg.include_log_var_head);
    model
        .layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let section = if i < enc {
                SECTION_ENCODER
            } else if i == enc {
                SECTION_Z_MEAN
            } else if i < head_end {
                SECTION_Z_LOG_VAR
            } else {
                SECTION_CLASSIFIER
            };
            record_of(section, layer)
        })
        .collect()
}

/// Bytes preceding the parameter values for this model.
pub fn header_len(model: &Model) -> usize {
    FIXED_HEADER + LAYER_RECORD * model.layers().len() + 8
}

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let cfg = model.config();
    let total: usize = model.all_blocks().iter().map(|b| b.len()).sum();
    let mut out = Vec::with_capacity(header_len(model) + 8 * total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.input_channels as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.latent_dim as u32).to_le_bytes());
    out.push(u8::from(cfg.include_log_var_head));
    out.extend_from_slice(&cfg.bn_momentum.to_le_bytes());
    out.extend_from_slice(&cfg.bn_epsilon.to_le_bytes());
    let (seed, step) = model.dropout_state();
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&step.to_le_bytes());
    let records = manifest(model);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in &records {
        out.push(r.section);
        out.push(r.kind);
        for d in r.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&r.rate.to_le_bytes());
    }
    out.extend_from_slice(&(total as u64).to_le_bytes());
    for block in model.all_blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated while reading {what}")))?;
        self.pos = end;
        let mut out = [0u8; N];
        out.copy_from_slice(chunk);
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take::<4>("magic")? != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let input_channels = r.u32("input channels")? as usize;
    let latent_dim = r.u32("latent dim")? as usize;
    let include_log_var_head = match r.u8("log-var flag")? {
        0 => false,
        1 => true,
        v => return Err(corrupt(format!("log-var flag {v}"))),
    };
    let bn_momentum = r.f64("bn momentum")?;
    let bn_epsilon = r.f64("bn epsilon")?;
    let dropout_seed = r.u64("dropout seed")?;
    let dropout_step = r.u64("dropout step")?;
    let layer_count = r.u32("layer count")? as usize;
    if layer_count > bytes.len() / LAYER_RECORD {
        return Err(corrupt("layer count exceeds file length"));
    }
    let mut records = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let section = r.u8("layer section")?;
        let kind = r.u8("layer kind")?;
        let dims = [r.u32("layer dims")?, r.u32("layer dims")?, r.u32("layer dims")?];
        let rate = r.f64("dropout rate")?;
        records.push(LayerRecord { section, kind, dims, rate });
    }

    let mut encoder = Vec::new();
    let mut classifier = Vec::new();
    for rec in &records {
        match rec.section {
            SECTION_ENCODER => encoder.push(spec_of(rec)?),
            SECTION_CLASSIFIER => classifier.push(spec_of(rec)?),
            SECTION_Z_MEAN | SECTION_Z_LOG_VAR => {}
            s => return Err(corrupt(format!("unknown section {s}"))),
        }
    }
    let config = ModelConfig {
        input_channels,
        encoder,
        latent_dim,
        include_log_var_head,
        classifier,
        bn_momentum,
        bn_epsilon,
    };
    let mut model = Model::new(config, 0).map_err(|e| corrupt(format!("manifest does not describe a valid model: {e}")))?;
    if manifest(&model) != records {
        return Err(corrupt("layer manifest is inconsistent"));
    }
    model.set_dropout_state(dropout_seed, dropout_step);

    let count = r.u64("value count")? as usize;
    let expected: usize = model.all_blocks().iter().map(|b| b.len()).sum();
    if count != expected {
        return Err(corrupt(format!("value count {count}, manifest needs {expected}")));
    }
    let remaining = bytes.len() - r.pos;
    if remaining != 8 * count {
        return Err(corrupt(format!("{remaining} bytes of values, expected {}", 8 * count)));
    }
    for block in model.all_blocks_mut() {
        for v in block.iter_mut() {
            *v = r.f64("values")?;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_model;
    use crate::tensor::Tensor3;

    #[test]
    fn default_model_size_is_values_plus_header() {
        let model = build_model(&ModelConfig::full(), 1).unwrap();
        let bytes = encode_checkpoint(&model);
        assert_eq!(bytes.len(), 8 * 197_093 + header_len(&model));
        assert_eq!(&bytes[..4], b"CVAE");
    }

    #[test]
    fn round_trip_preserves_values_and_outputs() {
        let mut model = build_model(&ModelConfig::scaled([4, 6, 8], 3, [5, 4]).with_log_var_head(true), 2).unwrap();
        let x = Tensor3::from_vec(2, 16, 12, (0..2 * 16 * 12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        model.forward_train(&x).unwrap();
        let restored = decode_checkpoint(&encode_checkpoint(&model)).unwrap();
        let bits = |m: &Model| -> Vec<u64> { m.all_blocks().iter().flat_map(|b| b.iter().map(|v| v.to_bits())).collect() };
        assert_eq!(bits(&model), bits(&restored));
        assert_eq!(model.dropout_state(), restored.dropout_state());
        let a: Vec<u64> = model.predict(&x).unwrap().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = restored.predict(&x).unwrap().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let model = build_model(&ModelConfig::scaled([4, 6, 8], 3, [5, 4]), 2).unwrap();
        let bytes = encode_checkpoint(&model);
        for cut in [0, 3, 10, header_len(&model) - 1, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_checkpoint(&extra), Err(Error::CorruptCheckpoint(_))));
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad_magic), Err(Error::CorruptCheckpoint(_))));
        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(matches!(decode_checkpoint(&bad_version), Err(Error::CorruptCheckpoint(_))));
    }
}

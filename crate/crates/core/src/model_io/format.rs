//! On-disk model format.
//!
//! ```text
//! magic    8 bytes   "VRNGMDL\n"
//! hlen     u32 LE    length of the header in bytes
//! header   hlen      UTF-8 JSON (version, shapes, layer specs, tensor offsets, metadata)
//! payload  ...       little-endian f32 tensors, layer order, contiguous
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv2d, Dense, LayerSpec, MaxPool2d, NetworkModel, TrainingMetadata};

pub const MAGIC: &[u8; 8] = b"VRNGMDL\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    /// Byte offset into the payload.
    pub offset: u64,
    /// Number of f32 values.
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerHeader {
    Dense {
        in_features: usize,
        out_features: usize,
        tensors: Vec<TensorEntry>,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        tensors: Vec<TensorEntry>,
    },
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    #[serde(rename = "batchnorm")]
    BatchNorm {
        channels: usize,
        eps: f32,
        tensors: Vec<TensorEntry>,
    },
    Relu,
    Sigmoid,
    Flatten,
}

impl LayerHeader {
    fn tensors(&self) -> &[TensorEntry] {
        match self {
            LayerHeader::Dense { tensors, .. }
            | LayerHeader::Conv2d { tensors, .. }
            | LayerHeader::BatchNorm { tensors, .. } => tensors,
            _ => &[],
        }
    }

    fn expected_names(&self) -> &'static [&'static str] {
        match self {
            LayerHeader::Dense { .. } | LayerHeader::Conv2d { .. } => &["weight", "bias"],
            LayerHeader::BatchNorm { .. } => &["gamma", "beta", "mean", "var"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub payload_bytes: u64,
    pub layers: Vec<LayerHeader>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<TrainingMetadata>,
}

pub fn encode_model(model: &NetworkModel) -> Result<Vec<u8>> {
    let mut payload: Vec<u8> = Vec::new();
    let mut layers = Vec::with_capacity(model.layers().len());
    for layer in model.layers() {
        let mut tensors = Vec::new();
        for (name, values) in layer.params() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                offset: payload.len() as u64,
                len: values.len() as u64,
            });
            for v in values {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        layers.push(match layer {
            LayerSpec::Dense(d) => LayerHeader::Dense {
                in_features: d.in_features,
                out_features: d.out_features,
                tensors,
            },
            LayerSpec::Conv2d(c) => LayerHeader::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
                tensors,
            },
            LayerSpec::MaxPool2d(p) => LayerHeader::MaxPool2d {
                kernel: p.kernel,
                stride: p.stride,
            },
            LayerSpec::BatchNorm(b) => LayerHeader::BatchNorm {
                channels: b.channels,
                eps: b.eps,
                tensors,
            },
            LayerSpec::Relu => LayerHeader::Relu,
            LayerSpec::Sigmoid => LayerHeader::Sigmoid,
            LayerSpec::Flatten => LayerHeader::Flatten,
        });
    }
    let header = ModelHeader {
        format_version: FORMAT_VERSION,
        input_shape: model.input_shape().to_vec(),
        num_classes: model.num_classes(),
        payload_bytes: payload.len() as u64,
        layers,
        metadata: model.metadata.clone(),
    };
    let json = serde_json::to_vec_pretty(&header)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Splits a model file into its parsed header and raw payload.
pub fn decode_header(bytes: &[u8]) -> Result<(ModelHeader, &[u8])> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::format("magic", "not a model file"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(Error::format("header", "header length exceeds file size"));
    }
    let header: ModelHeader =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::format("header", e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(
            "format_version",
            format!(
                "unsupported version {} (expected {FORMAT_VERSION})",
                header.format_version
            ),
        ));
    }
    Ok((header, &body[hlen..]))
}

pub fn decode_model(bytes: &[u8]) -> Result<NetworkModel> {
    let (header, payload) = decode_header(bytes)?;

    // Tensor entries must tile the declared payload exactly, in layer order.
    let mut cursor = 0u64;
    for (i, layer) in header.layers.iter().enumerate() {
        let names: Vec<&str> = layer.tensors().iter().map(|t| t.name.as_str()).collect();
        if names != layer.expected_names() {
            return Err(Error::format(
                format!("layers[{i}].tensors"),
                format!("expected {:?}, found {names:?}", layer.expected_names()),
            ));
        }
        for t in layer.tensors() {
            if t.offset != cursor {
                return Err(Error::format(
                    format!("layers[{i}].{}.offset", t.name),
                    format!("expected {cursor}, found {}", t.offset),
                ));
            }
            cursor = t
                .len
                .checked_mul(4)
                .and_then(|b| b.checked_add(cursor))
                .ok_or_else(|| Error::format(format!("layers[{i}].{}.len", t.name), "offset overflow"))?;
            if cursor > payload.len() as u64 {
                return Err(Error::TruncatedPayload { layer: i });
            }
        }
    }
    if cursor != header.payload_bytes {
        return Err(Error::format(
            "payload_bytes",
            format!("tensors cover {cursor} bytes, header declares {}", header.payload_bytes),
        ));
    }
    if payload.len() as u64 != header.payload_bytes {
        return Err(Error::format(
            "payload_bytes",
            format!(
                "file carries {} payload bytes, header declares {}",
                payload.len(),
                header.payload_bytes
            ),
        ));
    }

    let read = |t: &TensorEntry| -> Vec<f32> {
        let start = t.offset as usize;
        payload[start..start + 4 * t.len as usize]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let layers = header
        .layers
        .iter()
        .map(|l| {
            let t = l.tensors();
            match l {
                LayerHeader::Dense {
                    in_features,
                    out_features,
                    ..
                } => LayerSpec::Dense(Dense {
                    in_features: *in_features,
                    out_features: *out_features,
                    weight: read(&t[0]),
                    bias: read(&t[1]),
                }),
                LayerHeader::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => LayerSpec::Conv2d(Conv2d {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                    weight: read(&t[0]),
                    bias: read(&t[1]),
                }),
                LayerHeader::MaxPool2d { kernel, stride } => LayerSpec::MaxPool2d(MaxPool2d {
                    kernel: *kernel,
                    stride: *stride,
                }),
                LayerHeader::BatchNorm { channels, eps, .. } => LayerSpec::BatchNorm(BatchNorm {
                    channels: *channels,
                    eps: *eps,
                    gamma: read(&t[0]),
                    beta: read(&t[1]),
                    mean: read(&t[2]),
                    var: read(&t[3]),
                }),
                LayerHeader::Relu => LayerSpec::Relu,
                LayerHeader::Sigmoid => LayerSpec::Sigmoid,
                LayerHeader::Flatten => LayerSpec::Flatten,
            }
        })
        .collect();
    let mut model = NetworkModel::new(header.input_shape, header.num_classes, layers)
        .map_err(|e| Error::format("layers", e.to_string()))?;
    model.metadata = header.metadata;
    Ok(model)
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> NetworkModel {
        let conv = Conv2d {
            in_channels: 1,
            out_channels: 2,
            kernel: 3,
            stride: 1,
            padding: 1,
            weight: (0..18).map(|i| i as f32 * 0.25 - 2.0).collect(),
            bias: vec![0.5, -0.5],
        };
        let bn = BatchNorm {
            channels: 2,
            gamma: vec![1.0, 2.0],
            beta: vec![0.0, 0.1],
            mean: vec![0.2, 0.3],
            var: vec![1.0, 0.5],
            eps: 1e-5,
        };
        let dense = Dense {
            in_features: 8,
            out_features: 3,
            weight: (0..24).map(|i| (i as f32).sin()).collect(),
            bias: vec![f32::MIN_POSITIVE, -0.0, 1e30],
        };
        NetworkModel::new(
            vec![1, 4, 4],
            3,
            vec![
                LayerSpec::Conv2d(conv),
                LayerSpec::BatchNorm(bn),
                LayerSpec::Relu,
                LayerSpec::MaxPool2d(MaxPool2d { kernel: 2, stride: 2 }),
                LayerSpec::Flatten,
                LayerSpec::Dense(dense),
            ],
        )
        .unwrap()
        .with_metadata(TrainingMetadata {
            name: "sample".into(),
            seed: 3,
            dataset: "none".into(),
            ..Default::default()
        })
    }

    fn bits(model: &NetworkModel) -> Vec<u32> {
        model
            .layers()
            .iter()
            .flat_map(|l| l.params().into_iter().flat_map(|(_, v)| v.iter().map(|x| x.to_bits())))
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = sample_model();
        let decoded = decode_model(&encode_model(&model).unwrap()).unwrap();
        assert_eq!(bits(&decoded), bits(&model));
        assert_eq!(decoded, model);
    }

    #[test]
    fn truncated_payload_names_layer() {
        let mut bytes = encode_model(&sample_model()).unwrap();
        bytes.truncate(bytes.len() - 4);
        let err = decode_model(&bytes).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { layer: 5 }), "{err}");
        assert_eq!(err.to_string(), "truncated payload at layer 5");
    }

    #[test]
    fn rejects_inconsistent_header() {
        let bytes = encode_model(&sample_model()).unwrap();
        let (mut header, payload) = decode_header(&bytes).unwrap();
        let rebuild = |h: &ModelHeader| {
            let json = serde_json::to_vec(h).unwrap();
            let mut out = MAGIC.to_vec();
            out.extend_from_slice(&(json.len() as u32).to_le_bytes());
            out.extend_from_slice(&json);
            out.extend_from_slice(payload);
            out
        };

        header.num_classes = 10;
        let err = decode_model(&rebuild(&header)).unwrap_err();
        assert!(err.to_string().contains("10 classes"), "{err}");

        header.num_classes = 3;
        header.format_version = 2;
        assert!(decode_model(&rebuild(&header))
            .unwrap_err()
            .to_string()
            .contains("format_version"));

        header.format_version = FORMAT_VERSION;
        if let LayerHeader::Dense { tensors, .. } = &mut header.layers[5] {
            tensors[1].offset += 4;
        }
        assert!(decode_model(&rebuild(&header))
            .unwrap_err()
            .to_string()
            .contains("offset"));

        assert!(decode_model(b"not a model").is_err());
    }
}

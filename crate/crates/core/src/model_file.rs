//! `SHARDNET1` model files.
//!
//! ```text
//! magic        9 bytes  "SHARDNET1"
//! layer_count  u32 LE   hidden layers plus the head
//! layers       per layer: in_dim u32, out_dim u32, weights (in x out, row-major f32), biases (out f32)
//! label_count  u32 LE   0 for pretrained-only snapshots
//! -- optional extension, absent in bare files --
//! kind         u8       0 = fine-tuned, 1 = pretrained-only
//! decoders     kind 1 only: per layer, d_in f32 decoder biases
//! has_meta     u8
//! meta         window_len u32, step u32, sampling_hz f32,
//!              label count u32 + (len u32, UTF-8 bytes) per name,
//!              has_scaler u8, then dim u32, mins f32 x dim, maxs f32 x dim
//! ```
//! All integers and floats are little-endian. A file that ends right after
//! `label_count` is a fine-tuned model without metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::nn::{DeepModel, LayerParams, Matrix};
use crate::pretrain::AutoencoderLayer;

pub const MODEL_MAGIC: &[u8; 9] = b"SHARDNET1";

const KIND_FINE_TUNED: u8 = 0;
const KIND_PRETRAINED: u8 = 1;

/// What a model needs to serve raw accelerometer requests.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub window_len: usize,
    pub step: usize,
    pub sampling_hz: f32,
    pub labels: Vec<String>,
    pub scaler: Option<Scaler>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    FineTuned(DeepModel),
    PretrainedOnly(Vec<AutoencoderLayer>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub snapshot: Snapshot,
    pub meta: Option<ModelMeta>,
}

fn put_u32<W: Write>(w: &mut W, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn put_layer<W: Write>(w: &mut W, l: &LayerParams) -> Result<()> {
    put_u32(w, l.in_dim(), "in_dim")?;
    put_u32(w, l.out_dim(), "out_dim")?;
    put_f32s(w, l.weights.as_slice())?;
    put_f32s(w, &l.biases)
}

pub fn write_model_to<W: Write>(mut w: W, bundle: &ModelBundle) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    match &bundle.snapshot {
        Snapshot::FineTuned(model) => {
            put_u32(&mut w, model.hidden().len() + 1, "layer count")?;
            for l in model.layers() {
                put_layer(&mut w, l)?;
            }
            put_u32(&mut w, model.label_count(), "label_count")?;
            w.write_all(&[KIND_FINE_TUNED])?;
        }
        Snapshot::PretrainedOnly(layers) => {
            put_u32(&mut w, layers.len(), "layer count")?;
            for l in layers {
                put_layer(&mut w, &l.encoder)?;
            }
            put_u32(&mut w, 0, "label_count")?;
            w.write_all(&[KIND_PRETRAINED])?;
            for l in layers {
                put_f32s(&mut w, &l.decoder_bias)?;
            }
        }
    }
    match &bundle.meta {
        None => w.write_all(&[0])?,
        Some(meta) => {
            w.write_all(&[1])?;
            put_u32(&mut w, meta.window_len, "window_len")?;
            put_u32(&mut w, meta.step, "step")?;
            w.write_all(&meta.sampling_hz.to_le_bytes())?;
            put_u32(&mut w, meta.labels.len(), "label name count")?;
            for name in &meta.labels {
                put_u32(&mut w, name.len(), "label name length")?;
                w.write_all(name.as_bytes())?;
            }
            match &meta.scaler {
                None => w.write_all(&[0])?,
                Some(s) => {
                    w.write_all(&[1])?;
                    put_u32(&mut w, s.dim(), "scaler dim")?;
                    put_f32s(&mut w, &s.mins)?;
                    put_f32s(&mut w, &s.maxs)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_model(path: impl AsRef<Path>, bundle: &ModelBundle) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    write_model_to(BufWriter::new(f), bundle)
}

/// Saves a fine-tuned model.
pub fn save_model(path: impl AsRef<Path>, model: &DeepModel, meta: Option<&ModelMeta>) -> Result<()> {
    write_model(
        path,
        &ModelBundle {
            snapshot: Snapshot::FineTuned(model.clone()),
            meta: meta.cloned(),
        },
    )
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("model file truncated".into()),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n.min(1 << 26));
        for _ in 0..n {
            out.push(f32::from_le_bytes(self.bytes()?));
        }
        Ok(out)
    }

    /// Next byte, or `None` at a clean end of file.
    fn optional_u8(&mut self) -> Result<Option<u8>> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(None),
            _ => Ok(Some(b[0])),
        }
    }

    fn layer(&mut self) -> Result<LayerParams> {
        let in_dim = self.u32()?;
        let out_dim = self.u32()?;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Format("layer with a zero dimension".into()));
        }
        let weights = self.f32s(in_dim * out_dim)?;
        let biases = self.f32s(out_dim)?;
        LayerParams::new(Matrix::from_vec(in_dim, out_dim, weights)?, biases)
    }
}

pub fn read_model_from<R: Read>(r: R) -> Result<ModelBundle> {
    let mut r = Reader { inner: r };
    if &r.bytes::<9>()? != MODEL_MAGIC {
        return Err(Error::Format("not a SHARDNET1 model file".into()));
    }
    let count = r.u32()?;
    if count == 0 {
        return Err(Error::Format("model file holds no layers".into()));
    }
    let mut layers = (0..count).map(|_| r.layer()).collect::<Result<Vec<_>>>()?;
    let label_count = r.u32()?;
    let kind = r.optional_u8()?;
    let snapshot = match kind {
        None | Some(KIND_FINE_TUNED) => {
            if count < 2 {
                return Err(Error::Format("a fine-tuned model needs a hidden layer and a head".into()));
            }
            let head = layers.pop().expect("count checked");
            let model = DeepModel::new(layers, head)?;
            if model.label_count() != label_count {
                return Err(Error::Format(format!(
                    "label_count {label_count} disagrees with head width {}",
                    model.label_count()
                )));
            }
            Snapshot::FineTuned(model)
        }
        Some(KIND_PRETRAINED) => {
            let stack = layers
                .into_iter()
                .map(|l| {
                    let bias = r.f32s(l.in_dim())?;
                    AutoencoderLayer::new(l, bias)
                })
                .collect::<Result<Vec<_>>>()?;
            if stack.windows(2).any(|p| p[0].d_hidden() != p[1].d_in()) {
                return Err(Error::Format("pretrained layers do not chain".into()));
            }
            Snapshot::PretrainedOnly(stack)
        }
        Some(k) => return Err(Error::Format(format!("unknown snapshot kind {k}"))),
    };
    let meta = if kind.is_none() {
        None
    } else {
        match r.u8()? {
            0 => None,
            1 => Some(read_meta(&mut r)?),
            b => return Err(Error::Format(format!("invalid metadata flag {b}"))),
        }
    };
    if r.optional_u8()?.is_some() {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    Ok(ModelBundle { snapshot, meta })
}

fn read_meta<R: Read>(r: &mut Reader<R>) -> Result<ModelMeta> {
    let window_len = r.u32()?;
    let step = r.u32()?;
    let sampling_hz = f32::from_le_bytes(r.bytes()?);
    let n = r.u32()?;
    let mut labels = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let len = r.u32()?;
        let mut buf = vec![0u8; len];
        r.inner.read_exact(&mut buf).map_err(|_| Error::Format("model file truncated".into()))?;
        labels.push(String::from_utf8(buf).map_err(|_| Error::Format("label name is not UTF-8".into()))?);
    }
    let scaler = match r.u8()? {
        0 => None,
        1 => {
            let dim = r.u32()?;
            Some(Scaler {
                mins: r.f32s(dim)?,
                maxs: r.f32s(dim)?,
            })
        }
        b => return Err(Error::Format(format!("invalid scaler flag {b}"))),
    };
    Ok(ModelMeta {
        window_len,
        step,
        sampling_hz,
        labels,
        scaler,
    })
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_model_from(BufReader::new(f))
}

/// Loads a fine-tuned model; pretrained-only snapshots are rejected.
pub fn load_model(path: impl AsRef<Path>) -> Result<(DeepModel, Option<ModelMeta>)> {
    let path = path.as_ref();
    match read_model(path)? {
        ModelBundle {
            snapshot: Snapshot::FineTuned(m),
            meta,
        } => Ok((m, meta)),
        _ => Err(Error::Format(format!(
            "{} holds a pretrained-only snapshot without a classifier head",
            path.display()
        ))),
    }
}

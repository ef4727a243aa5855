//! Versioned binary weight files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "SMV1"
//! u32 model_count
//! per model:  u8 kind (1 = segnet, 2 = feedback)
//!             u8 activation (0 = relu, 1 = identity)
//!             u32 trained_epochs
//!             u32 layer_count
//!             per layer: u32 in_channels, u32 out_channels, u32 kernel
//! f64 parameters, per model in order, per layer: weights then biases
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::feedback::FeedbackModel;
use super::layers::{Activation, Conv2d};
use super::segnet::SegNet;

const MAGIC: &[u8; 4] = b"SMV1";
const KIND_SEGNET: u8 = 1;
const KIND_FEEDBACK: u8 = 2;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelBundle {
    pub segnet: Option<SegNet>,
    pub feedback: Option<FeedbackModel>,
}

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

pub fn encode(bundle: &ModelBundle) -> Vec<u8> {
    let mut models: Vec<(u8, Activation, u32, &[Conv2d])> = Vec::new();
    if let Some(s) = &bundle.segnet {
        models.push((KIND_SEGNET, s.activation, 0, &s.layers));
    }
    if let Some(f) = &bundle.feedback {
        models.push((KIND_FEEDBACK, f.activation, f.trained_epochs, &f.layers));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(models.len() as u32).to_le_bytes());
    for (kind, act, epochs, layers) in &models {
        out.push(*kind);
        out.push(act_code(*act));
        out.extend_from_slice(&epochs.to_le_bytes());
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for l in layers.iter() {
            for v in [l.in_ch, l.out_ch, l.kernel] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
    }
    for (_, _, _, layers) in &models {
        for l in layers.iter() {
            for v in l.weight.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Model(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(buf: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Model("bad magic, expected SMV1".into()));
    }
    let count = r.u32()? as usize;
    if count > 16 {
        return Err(Error::Model(format!("implausible model count {count}")));
    }
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = r.u8()?;
        let act = match r.u8()? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => return Err(Error::Model(format!("unknown activation code {other}"))),
        };
        let epochs = r.u32()?;
        let n = r.u32()? as usize;
        if n > 1024 {
            return Err(Error::Model(format!("implausible layer count {n}")));
        }
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let (i, o, k) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
            if i == 0 || o == 0 || k % 2 == 0 || i * o * k * k > 1 << 24 {
                return Err(Error::Model(format!("bad layer shape ({i}, {o}, {k})")));
            }
            shapes.push((i, o, k));
        }
        headers.push((kind, act, epochs, shapes));
    }
    let mut bundle = ModelBundle::default();
    for (kind, act, epochs, shapes) in headers {
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, o, k) in shapes {
            let mut l = Conv2d::zeros(i, o, k);
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = r.f64()?;
            }
            layers.push(l);
        }
        match kind {
            KIND_SEGNET => bundle.segnet = Some(SegNet::from_layers(act, layers)?),
            KIND_FEEDBACK => {
                bundle.feedback = Some(FeedbackModel::from_layers(act, layers, epochs)?)
            }
            other => return Err(Error::Model(format!("unknown model kind {other}"))),
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Model(format!(
            "{} trailing bytes after parameters",
            buf.len() - r.pos
        )));
    }
    Ok(bundle)
}

pub fn write_models(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(bundle)).map_err(|e| Error::io(path, e))
}

pub fn read_models(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{FeedbackConfig, SegNetConfig};

    fn bundle() -> ModelBundle {
        let mut fb = FeedbackModel::new(&FeedbackConfig::default(), 1.0, 2).unwrap();
        fb.trained_epochs = 7;
        ModelBundle {
            segnet: Some(SegNet::new(&SegNetConfig::default(), 1.0, 1).unwrap()),
            feedback: Some(fb),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let b = bundle();
        let bytes = encode(&b);
        assert_eq!(&bytes[..4], b"SMV1");
        assert_eq!(decode(&bytes).unwrap(), b);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode(&bundle());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}

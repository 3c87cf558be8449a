//! Binary checkpoint (little-endian): `b"AVNN"`, `u32` version, the spec
//! (nine `u64` sizes and an `f64` scale), a `u8` head kind, `u32` tensor
//! count, then per tensor: `u32` name length, UTF-8 name, `u8` frozen flag,
//! `u32` rank, `u64` dims, row-major `f64` values.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{HeadKind, Layer, NetworkParameters, NetworkSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AVNN";
const VERSION: u32 = 1;

struct Tensor {
    name: String,
    frozen: bool,
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.name.len() as u32);
    out.extend_from_slice(t.name.as_bytes());
    out.push(t.frozen as u8);
    put_u32(out, t.dims.len() as u32);
    for &d in &t.dims {
        put_u64(out, d as u64);
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn tensors(net: &NetworkParameters) -> Vec<Tensor> {
    let mut out = vec![
        Tensor {
            name: "input.mean".into(),
            frozen: true,
            dims: vec![net.input_mean.len()],
            data: net.input_mean.clone(),
        },
        Tensor {
            name: "input.scale".into(),
            frozen: true,
            dims: vec![net.input_scale.len()],
            data: net.input_scale.clone(),
        },
    ];
    for l in &net.layers {
        let (r, c) = l.weight.shape();
        out.push(Tensor {
            name: format!("{}.weight", l.name),
            frozen: l.frozen,
            dims: vec![r, c],
            data: l.weight.transpose().as_slice().to_vec(),
        });
        out.push(Tensor {
            name: format!("{}.bias", l.name),
            frozen: l.frozen,
            dims: vec![r],
            data: l.bias.as_slice().to_vec(),
        });
    }
    out
}

pub fn save_checkpoint(net: &NetworkParameters) -> Vec<u8> {
    let s = &net.spec;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    for v in [
        s.conv.0,
        s.conv.1,
        s.conv.2,
        s.fc_layers,
        s.fc_width,
        s.bottleneck,
        s.n_outputs,
        s.context,
        s.n_mels,
    ] {
        put_u64(&mut out, v as u64);
    }
    out.extend_from_slice(&s.scale.to_le_bytes());
    out.push(match net.head_kind {
        HeadKind::Softmax => 0,
        HeadKind::Regression => 1,
    });
    let ts = tensors(net);
    put_u32(&mut out, ts.len() as u32);
    for t in &ts {
        put_tensor(&mut out, t);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn size(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::format("checkpoint", "size overflow"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?;
        let frozen = self.u8()? != 0;
        let rank = self.u32()? as usize;
        if rank > 2 {
            return Err(Error::format(
                "checkpoint",
                format!("tensor {name} has rank {rank}"),
            ));
        }
        let dims = (0..rank).map(|_| self.size()).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::format("checkpoint", "truncated"));
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Tensor {
            name,
            frozen,
            dims,
            data,
        })
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<NetworkParameters> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let mut v = [0usize; 9];
    for x in &mut v {
        *x = r.size()?;
    }
    let spec = NetworkSpec {
        conv: (v[0], v[1], v[2]),
        fc_layers: v[3],
        fc_width: v[4],
        bottleneck: v[5],
        n_outputs: v[6],
        context: v[7],
        n_mels: v[8],
        scale: r.f64()?,
    };
    let head_kind = match r.u8()? {
        0 => HeadKind::Softmax,
        1 => HeadKind::Regression,
        k => {
            return Err(Error::format(
                "checkpoint",
                format!("unknown head kind {k}"),
            ))
        }
    };
    let n = r.u32()? as usize;
    let mut ts = Vec::new();
    for _ in 0..n {
        ts.push(r.tensor()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    if ts.len() < 4
        || ts.len() % 2 != 0
        || ts[0].name != "input.mean"
        || ts[1].name != "input.scale"
    {
        return Err(Error::format("checkpoint", "unexpected tensor layout"));
    }
    let input_scale = ts[1].data.clone();
    let input_mean = ts[0].data.clone();
    let mut layers = Vec::new();
    for pair in ts[2..].chunks(2) {
        let (w, b) = (&pair[0], &pair[1]);
        let name = w
            .name
            .strip_suffix(".weight")
            .filter(|n| b.name.strip_suffix(".bias") == Some(n))
            .ok_or_else(|| Error::format("checkpoint", format!("unpaired tensor {}", w.name)))?;
        if w.dims.len() != 2 || b.dims != [w.dims[0]] {
            return Err(Error::format(
                "checkpoint",
                format!("bad shapes for layer {name}"),
            ));
        }
        layers.push(Layer {
            name: name.to_string(),
            weight: DMatrix::from_row_slice(w.dims[0], w.dims[1], &w.data),
            bias: DVector::from_vec(b.data.clone()),
            frozen: w.frozen,
        });
    }
    let net = NetworkParameters {
        spec,
        head_kind,
        input_mean,
        input_scale,
        layers,
    };
    net.validate()
        .map_err(|e| Error::format("checkpoint", e.to_string()))?;
    Ok(net)
}

pub fn write_checkpoint(path: &Path, net: &NetworkParameters) -> Result<()> {
    fs::write(path, save_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkParameters> {
    load_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

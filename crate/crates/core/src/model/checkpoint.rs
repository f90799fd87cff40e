use std::fs;
use std::path::Path;

use super::net::{Ablation, ArchConfig, ModelParams};
use super::tensor::Tensor;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PPGM";
const VERSION: u32 = 1;

pub fn encode_params(p: &ModelParams) -> Vec<u8> {
    let a = &p.arch;
    let mut w = Writer::new();
    w.magic(MAGIC).u32(VERSION);
    w.u8(a.ablation.code()).u32(a.input_size as u32).u32(a.levels() as u32);
    for (&c, &s) in a.encoder_channels.iter().zip(&a.encoder_strides) {
        w.u32(c as u32).u32(s as u32);
    }
    w.u32(a.action_dim as u32).u32(a.action_channels as u32).u32(a.out_channels as u32);
    w.u32(p.tensors.len() as u32);
    for t in &p.tensors {
        w.u16(t.dims().len() as u16);
        for &d in t.dims() {
            w.u32(d as u32);
        }
        w.f32s(t.data());
    }
    w.into_bytes()
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let ablation = Ablation::from_code(r.u8()?)?;
    let input_size = r.u32()? as usize;
    let levels = r.u32()? as usize;
    if levels > 64 {
        return Err(Error::Format(format!("implausible level count {levels}")));
    }
    let mut encoder_channels = Vec::with_capacity(levels);
    let mut encoder_strides = Vec::with_capacity(levels);
    for _ in 0..levels {
        encoder_channels.push(r.u32()? as usize);
        encoder_strides.push(r.u32()? as usize);
    }
    let arch = ArchConfig {
        ablation,
        input_size,
        encoder_channels,
        encoder_strides,
        action_dim: r.u32()? as usize,
        action_channels: r.u32()? as usize,
        out_channels: r.u32()? as usize,
    };
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = r.u16()? as usize;
        if rank > 4 {
            return Err(Error::Format(format!("tensor rank {rank} above 4")));
        }
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().product();
        tensors.push(Tensor::from_vec(&dims, r.f32s(n)?)?);
    }
    if !r.is_done() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    ModelParams::from_tensors(arch, tensors)
}

pub fn save_params(p: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, encode_params(p))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    decode_params(&fs::read(path)?)
}

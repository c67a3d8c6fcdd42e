//! Parameter checkpoints.
//!
//! ```text
//! ETTW1\n
//! key=value\n            (hyperparameters, table sizes, user tower, adam step)
//! ...
//! \n
//! name\n                  (repeated per tensor until EOF)
//! d0 d1\n
//! <prod(d) little-endian f32>
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::optim::AdamState;
use super::params::{parse, HyperParams, ModelParams, ModelShape, UserTower, Weights};
use super::tensor::Tensor;
use crate::binio::{put_f32s, read_file, write_atomic, ByteReader};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"ETTW1\n";

pub fn encode_checkpoint(model: &ModelParams<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let mut header: Vec<(&str, String)> = model.hyper.to_pairs();
    header.push(("title_vocab", model.shape.title_vocab.to_string()));
    header.push(("aspect_vocab", model.shape.aspect_vocab.to_string()));
    header.push(("categories", model.shape.categories.to_string()));
    header.push(("user_tower", model.user_tower.to_string()));
    header.push(("adam_step", model.adam.step.to_string()));
    for (k, v) in header {
        out.extend_from_slice(format!("{k}={v}\n").as_bytes());
    }
    out.push(b'\n');
    let mut put = |name: &str, t: &Tensor<f32>| {
        out.extend_from_slice(name.as_bytes());
        out.push(b'\n');
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        out.extend_from_slice(dims.join(" ").as_bytes());
        out.push(b'\n');
        put_f32s(&mut out, t.data());
    };
    for (n, t) in model.weights.named() {
        put(&n, t);
    }
    for (n, t) in model.adam.m.named() {
        put(&format!("adam.m.{n}"), t);
    }
    for (n, t) in model.adam.v.named() {
        put(&format!("adam.v.{n}"), t);
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = ByteReader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let mut hyper = HyperParams::default();
    let mut extra = BTreeMap::new();
    loop {
        let at = r.offset();
        let line = r.line()?;
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::integrity(at, format!("header line `{line}` is not key=value")))?;
        if !hyper.set(k, v)? {
            extra.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| {
        extra
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("checkpoint header lacks `{k}`")))
    };
    let shape = ModelShape {
        title_vocab: parse("title_vocab", get("title_vocab")?)?,
        aspect_vocab: parse("aspect_vocab", get("aspect_vocab")?)?,
        categories: parse("categories", get("categories")?)?,
    };
    let user_tower: UserTower = get("user_tower")?.parse()?;
    let adam_step: u64 = parse("adam_step", get("adam_step")?)?;

    let weights = Weights::<f32>::init(&hyper, &shape);
    let mut model = ModelParams {
        hyper,
        shape,
        user_tower,
        adam: AdamState::new(&weights),
        weights,
    };
    model.adam.step = adam_step;

    let mut tensors: BTreeMap<String, (u64, Vec<usize>, Vec<f32>)> = BTreeMap::new();
    while !r.is_eof() {
        let at = r.offset();
        let name = r.line()?.to_string();
        let dims_line = r.line()?;
        let dims = dims_line
            .split_whitespace()
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::integrity(at, format!("bad shape line for `{name}`")))?;
        let n = dims.iter().product();
        let data = r.f32s(n)?;
        if tensors.insert(name.clone(), (at, dims, data)).is_some() {
            return Err(Error::integrity(at, format!("duplicate tensor `{name}`")));
        }
    }

    let mut fill = |prefix: &str, w: &mut Weights<f32>| -> Result<()> {
        for (n, t) in w.named_mut() {
            let key = format!("{prefix}{n}");
            let (at, dims, data) = tensors
                .remove(&key)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor `{key}`")))?;
            if dims != t.shape() {
                return Err(Error::integrity(
                    at,
                    format!("tensor `{key}` has shape {dims:?}, expected {:?}", t.shape()),
                ));
            }
            t.data_mut().copy_from_slice(&data);
        }
        Ok(())
    };
    fill("", &mut model.weights)?;
    fill("adam.m.", &mut model.adam.m)?;
    fill("adam.v.", &mut model.adam.v)?;
    if let Some((name, (at, _, _))) = tensors.into_iter().next() {
        return Err(Error::integrity(at, format!("unexpected tensor `{name}`")));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &ModelParams<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    decode_checkpoint(&read_file(path)?)
}

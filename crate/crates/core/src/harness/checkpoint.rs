//! Binary checkpoints: a model spec plus its flat parameter vector, written
//! little-endian so a saved run can be probed later bit-exactly.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::model::{LossKind, ModelSpec};
use crate::params::ParamVector;

const MAGIC: &[u8; 8] = b"SLABCKPT";
const VERSION: u32 = 1;

pub fn save_checkpoint(
    path: &Path,
    spec: &ModelSpec,
    params: &ParamVector,
) -> io::Result<()> {
    assert_eq!(params.len(), spec.param_count(), "params do not match spec");
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match spec.loss_kind {
        LossKind::Squared => 0,
        LossKind::Logistic => 1,
    });
    buf.extend_from_slice(&spec.weight_decay.to_le_bytes());
    buf.extend_from_slice(&(spec.input_dim as u64).to_le_bytes());
    buf.extend_from_slice(&(spec.num_classes as u64).to_le_bytes());
    buf.extend_from_slice(&(spec.layer_widths.len() as u64).to_le_bytes());
    for &w in &spec.layer_widths {
        buf.extend_from_slice(&(w as u64).to_le_bytes());
    }
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)
}

pub fn load_checkpoint(path: &Path) -> io::Result<(ModelSpec, ParamVector)> {
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let mut cursor = Cursor { bytes: &bytes, pos: 0 };

    let magic = cursor.take(8)?;
    if magic != MAGIC {
        return Err(bad_data("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad_data(&format!("unsupported checkpoint version {version}")));
    }
    let loss_kind = match cursor.take(1)?[0] {
        0 => LossKind::Squared,
        1 => LossKind::Logistic,
        k => return Err(bad_data(&format!("unknown loss kind byte {k}"))),
    };
    let weight_decay = cursor.f64()?;
    let input_dim = cursor.u64()? as usize;
    let num_classes = cursor.u64()? as usize;
    let n_hidden = cursor.u64()? as usize;
    if n_hidden > 1024 {
        return Err(bad_data("implausible layer count"));
    }
    let mut layer_widths = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        layer_widths.push(cursor.u64()? as usize);
    }
    let spec = ModelSpec {
        layer_widths,
        input_dim,
        num_classes,
        loss_kind,
        weight_decay,
    };
    let p = cursor.u64()? as usize;
    if p != spec.param_count() {
        return Err(bad_data(&format!(
            "checkpoint holds {p} parameters but its spec requires {}",
            spec.param_count()
        )));
    }
    let mut values = Vec::with_capacity(p);
    for _ in 0..p {
        values.push(cursor.f64()?);
    }
    if cursor.pos != bytes.len() {
        return Err(bad_data("trailing bytes after parameter block"));
    }
    Ok((spec, ParamVector::new(values)))
}

fn bad_data(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> io::Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(bad_data("truncated checkpoint"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

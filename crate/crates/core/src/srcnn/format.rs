//! Binary model file.
//!
//! ```text
//! "SRCN"  u32 version  u32 channels  u32 n1  u32 n2  u32 f1  u32 f2  u32 f3
//! K1 b1 K2 b2 K3 b3          little-endian f32, kernels [c_out][c_in][k_h][k_w]
//! ```
//! No padding bytes. Parameters held at higher precision are rounded to f32.

use std::fs;
use std::path::Path;

use super::{Architecture, SrcnnModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 4] = b"SRCN";
pub const MODEL_VERSION: u32 = 1;

const FMT: &str = "model";
/// Upper bound on any header dimension; rejects garbage before allocating.
const MAX_DIM: u32 = 4096;

pub fn write_model<T: Scalar>(model: &SrcnnModel<T>) -> Vec<u8> {
    let arch = model.architecture();
    let mut out = Vec::with_capacity(32 + 4 * model.parameter_count());
    out.extend_from_slice(MODEL_MAGIC);
    for v in [MODEL_VERSION, model.channels() as u32, arch.n1 as u32, arch.n2 as u32, arch.f1 as u32, arch.f2 as u32, arch.f3 as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for tensor in model.tensors() {
        for v in tensor {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, field: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(FMT, format!("truncated while reading {field} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self, field: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }
}

pub fn read_model<T: Scalar>(bytes: &[u8]) -> Result<SrcnnModel<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(Error::format(FMT, "bad magic (expected \"SRCN\")"));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::Version { found: version, expected: MODEL_VERSION });
    }
    let mut dims = [0u32; 6];
    for (d, name) in dims.iter_mut().zip(["channels", "n1", "n2", "f1", "f2", "f3"]) {
        *d = r.u32(name)?;
        if *d == 0 || *d > MAX_DIM {
            return Err(Error::format(FMT, format!("{name} out of range: {d}")));
        }
    }
    let [channels, n1, n2, f1, f2, f3] = dims.map(|d| d as usize);
    if channels != 1 && channels != 3 {
        return Err(Error::format(FMT, format!("channels must be 1 or 3, got {channels}")));
    }
    let arch = Architecture { f1, f2, f3, n1, n2 };
    arch.validate().map_err(|e| Error::format(FMT, e.to_string()))?;
    let expected: u64 = arch
        .layer_shapes(channels)
        .iter()
        .map(|&(o, i, k)| (o as u64) * (i as u64) * (k as u64) * (k as u64) + o as u64)
        .sum::<u64>()
        * 4;
    let found = (bytes.len() - r.pos) as u64;
    if expected != found {
        return Err(Error::format(FMT, format!("header declares {expected} parameter bytes, file has {found}")));
    }
    let mut model = SrcnnModel::<T>::zeros(&arch, channels)?;
    let names = ["K1", "b1", "K2", "b2", "K3", "b3"];
    for (tensor, name) in model.tensors_mut().into_iter().zip(names) {
        for v in tensor.iter_mut() {
            let x = r.f32(name)?;
            if !x.is_finite() {
                return Err(Error::format(FMT, format!("non-finite value in {name}")));
            }
            *v = T::from_f64_lossy(f64::from(x));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(FMT, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(model: &SrcnnModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<SrcnnModel<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

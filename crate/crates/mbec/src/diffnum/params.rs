use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use super::DiffnumError;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

const CHECKPOINT_MAGIC: &[u8; 4] = b"MBEC";
const CHECKPOINT_VERSION: u32 = 1;

/// Named gradients, as exported by a finished backward sweep.
pub type GradMap = BTreeMap<String, Tensor>;

struct Entry {
    value: Tensor,
    grad: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Named parameter tensors with per-tensor Adam state.
///
/// Iteration order is the name order, so optimizer sweeps are deterministic.
#[derive(Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Entry>,
    step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let entry = Entry {
            grad: Tensor::zeros_like(&value),
            m: Tensor::zeros_like(&value),
            v: Tensor::zeros_like(&value),
            value,
        };
        self.entries.insert(name.to_string(), entry);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, DiffnumError> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| DiffnumError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, DiffnumError> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| DiffnumError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor, DiffnumError> {
        self.entries
            .get(name)
            .map(|e| &e.grad)
            .ok_or_else(|| DiffnumError::UnknownParam(name.to_string()))
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, data: &[f64]) -> Result<(), DiffnumError> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| DiffnumError::UnknownParam(name.to_string()))?;
        if e.grad.len() != data.len() {
            return Err(DiffnumError::ShapeMismatch {
                op: "accumulate_grad",
                left: e.grad.dims().to_vec(),
                right: vec![data.len()],
            });
        }
        for (g, d) in e.grad.data_mut().iter_mut().zip(data) {
            *g += d;
        }
        Ok(())
    }

    /// Snapshot of the current gradients, keyed by parameter name.
    pub fn grads(&self) -> GradMap {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.grad.clone()))
            .collect()
    }

    /// One Adam update over every parameter from the accumulated gradients.
    /// Gradient accumulators are left untouched; the caller zeroes them.
    pub fn adam_step(&mut self, lr: f64) -> Result<(), DiffnumError> {
        if !(lr > 0.0) {
            return Err(DiffnumError::BadLearningRate { lr });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for e in self.entries.values_mut() {
            let g = e.grad.data();
            let m = e.m.data_mut();
            let v = e.v.data_mut();
            let w = e.value.data_mut();
            for i in 0..g.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        #[cfg(any(debug_assertions, test))]
        self.assert_finite();
        Ok(())
    }

    /// Panics if any parameter is non-finite. Cheap enough for test builds.
    pub fn assert_finite(&self) {
        for (name, e) in &self.entries {
            assert!(e.value.is_finite(), "parameter {name} became non-finite");
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|e| e.value.is_finite())
    }

    /// Copy parameter values from another set; names and shapes must match.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<(), DiffnumError> {
        for (name, src) in other.iter() {
            let dst = self.get_mut(name)?;
            if dst.dims() != src.dims() {
                return Err(DiffnumError::ShapeMismatch {
                    op: "copy_values_from",
                    left: dst.dims().to_vec(),
                    right: src.dims().to_vec(),
                });
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

/// Write named parameter sets to a single binary checkpoint.
///
/// Layout: magic `MBEC`, version u32, then one record per tensor:
/// name length u32, UTF-8 name bytes, rank u32, dims (u32 each), then the
/// values as little-endian f64. Records for a set are prefixed `set/`.
pub fn save_checkpoint(path: &Path, sets: &[(&str, &ParamSet)]) -> Result<(), DiffnumError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (set_name, ps) in sets {
        for (name, t) in ps.iter() {
            let full = format!("{set_name}/{name}");
            w.write_all(&(full.len() as u32).to_le_bytes())?;
            w.write_all(full.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.dims() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint back as a name -> tensor map.
pub fn load_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor>, DiffnumError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(DiffnumError::Checkpoint(format!(
            "bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(DiffnumError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut out = BTreeMap::new();
    loop {
        let name_len = match read_u32_opt(&mut r)? {
            Some(n) => n as usize,
            None => break,
        };
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| DiffnumError::Checkpoint(format!("bad name: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        if rank == 0 || rank > 2 {
            return Err(DiffnumError::Checkpoint(format!(
                "tensor {name:?} has unsupported rank {rank}"
            )));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut r)? as usize);
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let t = if rank == 1 {
            Tensor::vector(data)
        } else {
            Tensor::matrix(dims[0], dims[1], data)
        };
        out.insert(name, t);
    }
    Ok(out)
}

fn read_u32(r: &mut impl Read) -> Result<u32, DiffnumError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Like `read_u32` but reports clean EOF as `None`.
fn read_u32_opt(r: &mut impl Read) -> Result<Option<u32>, DiffnumError> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(DiffnumError::Checkpoint(
                "truncated record header".to_string(),
            ));
        }
        filled += n;
    }
    Ok(Some(u32::from_le_bytes(buf)))
}

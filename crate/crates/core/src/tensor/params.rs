use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::graph::{Graph, Var};
use super::value::{Shape, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MARF";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const STEP_KEY: &str = "step";

#[derive(Clone, Debug, PartialEq)]
struct Param {
    value: Tensor,
    grad: Option<Tensor>,
    m: Tensor,
    v: Tensor,
}

/// Named trainable tensors together with their Adam moments.
///
/// Iteration order is lexicographic by name, which keeps serialization and
/// optimizer updates deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    step: u64,
}

/// Maps parameter names to the graph leaves they were bound to.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: HashMap<String, Var>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("parameter `{name}` is not bound")))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if name == STEP_KEY || name.ends_with(".m") || name.ends_with(".v") {
            return Err(Error::invalid(format!("reserved parameter name `{name}`")));
        }
        if self.params.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        let shape = value.shape();
        self.params.insert(
            name,
            Param {
                value,
                grad: None,
                m: Tensor::zeros(shape),
                v: Tensor::zeros(shape),
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|p| p.grad.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Puts every parameter on the graph as a leaf.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| (name.clone(), graph.leaf(p.value.clone(), trainable)))
            .collect();
        Bindings { vars }
    }

    /// Adds the gradients that `graph` holds for `bindings` into the store.
    pub fn collect_grads(&mut self, graph: &Graph, bindings: &Bindings) {
        for (name, p) in &mut self.params {
            let Some(&var) = bindings.vars.get(name) else { continue };
            let Some(g) = graph.grad(var) else { continue };
            match &mut p.grad {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => p.grad = Some(g.clone()),
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (name, p) in &self.params {
            write_record(&mut out, name, &p.value);
            write_record(&mut out, &format!("{name}.m"), &p.m);
            write_record(&mut out, &format!("{name}.v"), &p.v);
        }
        write_scalar_record(&mut out, STEP_KEY, self.step as f32);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("parameter file", "truncated header"))?;
        if &magic != MAGIC {
            return Err(Error::format("parameter file", "bad magic bytes"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::format(
                "parameter file",
                format!("unsupported version {version}"),
            ));
        }
        let mut records: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut step = 0u64;
        while !r.is_empty() {
            let (name, t) = read_record(&mut r)?;
            if name == STEP_KEY {
                step = t.item() as u64;
            } else {
                records.insert(name, t);
            }
        }
        let mut store = ParamStore {
            params: BTreeMap::new(),
            step,
        };
        let bases: Vec<String> = records
            .keys()
            .filter(|k| !k.ends_with(".m") && !k.ends_with(".v"))
            .cloned()
            .collect();
        for name in bases {
            let value = records.remove(&name).expect("listed above");
            let shape = value.shape();
            let m = records
                .remove(&format!("{name}.m"))
                .unwrap_or_else(|| Tensor::zeros(shape));
            let v = records
                .remove(&format!("{name}.v"))
                .unwrap_or_else(|| Tensor::zeros(shape));
            if m.shape() != shape || v.shape() != shape {
                return Err(Error::format(
                    "parameter file",
                    format!("optimizer state shape differs for `{name}`"),
                ));
            }
            store.params.insert(
                name,
                Param {
                    value,
                    grad: None,
                    m,
                    v,
                },
            );
        }
        if let Some(orphan) = records.keys().next() {
            return Err(Error::format(
                "parameter file",
                format!("optimizer state `{orphan}` without parameter"),
            ));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn write_record(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&4u32.to_le_bytes());
    for d in t.shape().dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_scalar_record(out: &mut Vec<u8>, name: &str, value: f32) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&value.to_le_bytes());
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::format("parameter file", "truncated record"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_record(r: &mut &[u8]) -> Result<(String, Tensor)> {
    let len = read_u32(r)? as usize;
    if r.len() < len + 1 {
        return Err(Error::format("parameter file", "truncated name"));
    }
    let name = std::str::from_utf8(&r[..len])
        .map_err(|_| Error::format("parameter file", "name is not UTF-8"))?
        .to_string();
    let dtype = r[len];
    *r = &r[len + 1..];
    if dtype != DTYPE_F32 {
        return Err(Error::format(
            "parameter file",
            format!("unsupported dtype tag {dtype} for `{name}`"),
        ));
    }
    let rank = read_u32(r)? as usize;
    if rank > 4 {
        return Err(Error::format("parameter file", format!("rank {rank} > 4")));
    }
    let mut dims = [1usize; 4];
    for i in 0..rank {
        dims[4 - rank + i] = read_u32(r)? as usize;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let bytes = shape.numel() * 4;
    if r.len() < bytes {
        return Err(Error::format("parameter file", format!("truncated payload for `{name}`")));
    }
    let data = r[..bytes]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    *r = &r[bytes..];
    Ok((name, Tensor::from_vec(shape, data)?))
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter, then clears gradients.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    if let Some((name, _)) = store.params.iter().find(|(_, p)| p.grad.is_none()) {
        return Err(Error::MissingGradient(name.clone()));
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - (cfg.beta1 as f64).powi(t);
    let bc2 = 1.0 - (cfg.beta2 as f64).powi(t);
    for p in store.params.values_mut() {
        let g = p.grad.take().expect("checked above");
        let (w, m, v) = (p.value.data_mut(), p.m.data_mut(), p.v.data_mut());
        for i in 0..w.len() {
            let gi = g.data()[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] as f64 / bc1;
            let v_hat = v[i] as f64 / bc2;
            w[i] -= (cfg.lr as f64 * m_hat / (v_hat.sqrt() + cfg.eps as f64)) as f32;
        }
    }
    Ok(())
}

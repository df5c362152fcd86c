//! Training state and its single-file archive.
//!
//! Layout: the 8-byte magic `RFCKPT01`, newline-terminated `key=value` meta
//! lines, one `tensor <name> <rows> <cols>` manifest line per tensor, a blank
//! line, then every tensor in manifest order as little-endian row-major floats
//! of the declared `dtype` (`f32` by default, `f64` for exact 64-bit resume).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{cast, ParamStore, Scalar};
use crate::error::{Error, Result};
use crate::losses::{LossReport, Stage};
use crate::pipeline::optim::AdamW;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RFCKPT01";
const M_PREFIX: &str = "adam.m/";
const V_PREFIX: &str = "adam.v/";

/// One logged optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: u8,
    pub epoch: usize,
    pub step: u64,
    #[serde(flatten)]
    pub loss: LossReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<S> {
    pub stage: Stage,
    pub stage1_complete: bool,
    /// Optimizer steps taken in the current stage.
    pub step: u64,
    pub seed: u64,
    pub params: ParamStore<S>,
    pub opt: AdamW<S>,
    pub history: Vec<StepRecord>,
}

impl<S: Scalar> TrainState<S> {
    pub fn new(params: ParamStore<S>, seed: u64) -> Self {
        let opt = AdamW::new(&params);
        Self { stage: Stage::One, stage1_complete: false, step: 0, seed, params, opt, history: Vec::new() }
    }

    pub fn cast<T: Scalar>(&self) -> TrainState<T> {
        TrainState {
            stage: self.stage,
            stage1_complete: self.stage1_complete,
            step: self.step,
            seed: self.seed,
            params: self.params.cast(),
            opt: AdamW { m: self.opt.m.cast(), v: self.opt.v.cast(), t: self.opt.t },
            history: self.history.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(b'\n');
        let history = serde_json::to_string(&self.history).expect("serializable");
        let meta = format!(
            "dtype={}\nstage={}\nstage1_complete={}\nstep={}\nseed={}\nopt_t={}\nhistory={}\n",
            S::DTYPE,
            self.stage.number(),
            self.stage1_complete,
            self.step,
            self.seed,
            self.opt.t,
            history
        );
        out.extend_from_slice(meta.as_bytes());
        let tensors = self.tensors();
        for (name, v) in &tensors {
            out.extend_from_slice(format!("tensor {} {} {}\n", name, v.nrows(), v.ncols()).as_bytes());
        }
        out.push(b'\n');
        for (_, v) in &tensors {
            for &x in v.iter() {
                x.write_le(&mut out);
            }
        }
        out
    }

    fn tensors(&self) -> Vec<(String, &Array2<S>)> {
        let mut t: Vec<(String, &Array2<S>)> = self.params.iter().map(|(n, v)| (n.to_string(), v)).collect();
        t.extend(self.opt.m.iter().map(|(n, v)| (format!("{M_PREFIX}{n}"), v)));
        t.extend(self.opt.v.iter().map(|(n, v)| (format!("{V_PREFIX}{n}"), v)));
        t
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    /// Loads an archive of either dtype, converting to `S`.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Data(m) => Error::data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 || &bytes[..8] != CHECKPOINT_MAGIC || bytes[8] != b'\n' {
            return Err(Error::data("not a checkpoint (bad magic)"));
        }
        let rest = &bytes[9..];
        let end = rest.windows(2).position(|w| w == b"\n\n").ok_or_else(|| Error::data("checkpoint header is unterminated"))?;
        let text = std::str::from_utf8(&rest[..end]).map_err(|_| Error::data("checkpoint header is not UTF-8"))?;
        let payload = &rest[end + 2..];

        let mut meta = BTreeMap::new();
        let mut manifest = Vec::new();
        for line in text.lines() {
            if let Some(spec) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = spec.split(' ').collect();
                let [name, rows, cols] = parts[..] else {
                    return Err(Error::data(format!("malformed manifest line {line:?}")));
                };
                let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::data(format!("malformed manifest line {line:?}")));
                manifest.push((name.to_string(), dim(rows)?, dim(cols)?));
            } else if let Some((k, v)) = line.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            } else {
                return Err(Error::data(format!("malformed checkpoint line {line:?}")));
            }
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::data(format!("checkpoint is missing {k}")));
        let num = |k: &str| get(k)?.parse::<u64>().map_err(|_| Error::data(format!("checkpoint {k} is not an integer")));
        let stage = match get("stage")?.as_str() {
            "1" => Stage::One,
            "2" => Stage::Two,
            other => return Err(Error::data(format!("unknown stage {other}"))),
        };
        let stage1_complete = get("stage1_complete")? == "true";
        let history: Vec<StepRecord> =
            serde_json::from_str(get("history")?).map_err(|e| Error::data(format!("checkpoint history: {e}")))?;

        let (params, m, v) = match get("dtype")?.as_str() {
            "f32" => read_tensors::<f32, S>(&manifest, payload)?,
            "f64" => read_tensors::<f64, S>(&manifest, payload)?,
            other => return Err(Error::data(format!("unsupported dtype {other}"))),
        };
        Ok(Self {
            stage,
            stage1_complete,
            step: num("step")?,
            seed: num("seed")?,
            params,
            opt: AdamW { m, v, t: num("opt_t")? },
            history,
        })
    }
}

type Stores<S> = (ParamStore<S>, ParamStore<S>, ParamStore<S>);

fn read_tensors<F: Scalar, S: Scalar>(manifest: &[(String, usize, usize)], payload: &[u8]) -> Result<Stores<S>> {
    let total: usize = manifest.iter().map(|(_, r, c)| r * c).sum();
    if payload.len() != total * F::BYTES {
        return Err(Error::data(format!("payload holds {} bytes, manifest promises {}", payload.len(), total * F::BYTES)));
    }
    let (mut params, mut m, mut v) = (ParamStore::new(), ParamStore::new(), ParamStore::new());
    let mut off = 0;
    for (name, rows, cols) in manifest {
        let n = rows * cols;
        let vals: Vec<F> = payload[off..off + n * F::BYTES].chunks_exact(F::BYTES).map(F::read_le).collect();
        off += n * F::BYTES;
        let arr: Array2<F> = Array2::from_shape_vec((*rows, *cols), vals).expect("sized");
        let arr: Array2<S> = cast(&arr);
        if let Some(base) = name.strip_prefix(M_PREFIX) {
            m.insert(base, arr);
        } else if let Some(base) = name.strip_prefix(V_PREFIX) {
            v.insert(base, arr);
        } else {
            params.insert(name.clone(), arr);
        }
    }
    let aligned = |other: &ParamStore<S>| {
        other.len() == params.len() && (0..params.len()).all(|i| other.name(i) == params.name(i) && other.value(i).dim() == params.value(i).dim())
    };
    if !aligned(&m) || !aligned(&v) {
        return Err(Error::data("optimizer moments do not match the parameter manifest"));
    }
    Ok((params, m, v))
}

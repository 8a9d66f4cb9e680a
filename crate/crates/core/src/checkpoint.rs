//! `TNN1` checkpoint container.
//!
//! All integers are little-endian `u32`, all values little-endian `f64`:
//!
//! ```text
//! b"TNN1"
//! meta count, then per entry: key length, key bytes, value length, value bytes
//! tensor count, then per tensor: name length, name bytes, ell, m, n,
//!     ell*m*n values in tube-contiguous order (index (i*m + j)*n + k)
//! ```
//!
//! Strings are UTF-8. Metadata carries the architecture so a network can be
//! rebuilt without its original configuration.

use std::fs;
use std::path::Path;

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::loss::Reduction;
use crate::network::{
    Activation, Block, BlockSpec, ClassifierSpec, Init, Network, NetworkSpec, Objective,
};
use crate::tensor::{Matrix, Tensor3};
use crate::transform::{TProductPath, Transform, TransformKind};

pub const MAGIC: &[u8; 4] = b"TNN1";

/// Named tensors plus string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor3)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()?;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| bad("string is not UTF-8"))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.meta.len());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.tensors.len());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            let (a, b, c) = t.dims();
            for d in [a, b, c] {
                put_u32(&mut out, d);
            }
            for v in t.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(bad("missing TNN1 magic"));
        }
        let mut r = Reader { bytes, pos: 4 };
        let nmeta = r.u32()?;
        let mut meta = Vec::new();
        for _ in 0..nmeta {
            let k = r.string()?;
            let v = r.string()?;
            meta.push((k, v));
        }
        let ntensors = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..ntensors {
            let name = r.string()?;
            let dims = (r.u32()?, r.u32()?, r.u32()?);
            let len = dims
                .0
                .checked_mul(dims.1)
                .and_then(|x| x.checked_mul(dims.2))
                .ok_or_else(|| bad(format!("tensor {name}: dims overflow")))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t =
                Tensor3::from_vec(dims, values).map_err(|e| bad(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor3> {
        self.tensors.iter().find(|(k, _)| k == name).map(|(_, t)| t)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| bad(format!("missing metadata key {key}")))
    }
}

fn encode_block(b: &BlockSpec) -> String {
    match *b {
        BlockSpec::Linear { out, activation } => format!("linear:{out}:{}", activation.name()),
        BlockSpec::Residual {
            steps,
            h,
            activation,
        } => {
            format!("residual:{steps}:{h:?}:{}", activation.name())
        }
        BlockSpec::Leapfrog {
            steps,
            h,
            activation,
            shared,
        } => format!(
            "leapfrog:{steps}:{h:?}:{}:{}",
            activation.name(),
            if shared { "shared" } else { "separate" }
        ),
    }
}

/// Parses one block description as written by [`encode_blocks`].
pub fn decode_block(s: &str) -> Result<BlockSpec> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let err = || Error::Config(format!("cannot parse block {s:?}"));
    let num = |i: usize| {
        parts
            .get(i)
            .and_then(|p| p.parse::<usize>().ok())
            .ok_or_else(err)
    };
    let real = |i: usize| {
        parts
            .get(i)
            .and_then(|p| p.parse::<f64>().ok())
            .ok_or_else(err)
    };
    let act = |i: usize| match parts.get(i) {
        None => Ok(Activation::Tanh),
        Some(p) => Activation::parse(p).ok_or_else(err),
    };
    match parts[0] {
        "linear" if parts.len() <= 3 => Ok(BlockSpec::Linear {
            out: num(1)?,
            activation: act(2)?,
        }),
        "residual" if parts.len() <= 4 => Ok(BlockSpec::Residual {
            steps: num(1)?,
            h: real(2)?,
            activation: act(3)?,
        }),
        "leapfrog" if parts.len() <= 5 => Ok(BlockSpec::Leapfrog {
            steps: num(1)?,
            h: real(2)?,
            activation: act(3)?,
            shared: match parts.get(4) {
                None | Some(&"separate") => false,
                Some(&"shared") => true,
                _ => return Err(err()),
            },
        }),
        _ => Err(err()),
    }
}

/// `;`-separated block descriptions.
pub fn encode_blocks(blocks: &[BlockSpec]) -> String {
    blocks
        .iter()
        .map(encode_block)
        .collect::<Vec<_>>()
        .join(";")
}

pub fn decode_blocks(s: &str) -> Result<Vec<BlockSpec>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(decode_block)
        .collect()
}

fn reduction_name(r: Reduction) -> &'static str {
    match r {
        Reduction::Sum => "sum",
        Reduction::Mean => "mean",
    }
}

/// Serializes a network (architecture and parameters) plus extra metadata.
pub fn save_network(net: &Network, extra: &[(String, String)]) -> Checkpoint {
    let t = &net.transform;
    let mut meta = vec![
        (
            "transform".to_string(),
            match t.kind() {
                TransformKind::Circulant => "circulant",
                TransformKind::Orthogonal => "orthogonal",
                TransformKind::Identity => "identity",
            }
            .to_string(),
        ),
        (
            "product_path".into(),
            match t.path() {
                TProductPath::Direct => "direct",
                TProductPath::Fourier => "fourier",
            }
            .into(),
        ),
        ("width".into(), net.spec.width.to_string()),
        ("n".into(), net.spec.n.to_string()),
        ("blocks".into(), encode_blocks(&net.spec.blocks)),
        ("classes".into(), net.classes().to_string()),
        (
            "classifier_bias".into(),
            net.classifier_bias.is_some().to_string(),
        ),
        (
            "objective".into(),
            match net.objective {
                Objective::CrossEntropy(r) => format!("cross_entropy:{}", reduction_name(r)),
                Objective::LeastSquares(r) => format!("least_squares:{}", reduction_name(r)),
            },
        ),
    ];
    meta.extend(extra.iter().cloned());
    let mut tensors = Vec::new();
    if let Some(m) = t.matrix() {
        let (r, c) = m.shape();
        let mt = Tensor3::from_vec((r, c, 1), m.as_slice().to_vec()).expect("matrix dims");
        tensors.push(("transform.matrix".to_string(), mt));
    }
    for (name, p) in net.param_names().into_iter().zip(net.params()) {
        tensors.push((name, p.clone()));
    }
    Checkpoint { meta, tensors }
}

fn parse_reduction(s: &str) -> Result<Reduction> {
    match s {
        "sum" => Ok(Reduction::Sum),
        "mean" => Ok(Reduction::Mean),
        _ => Err(bad(format!("unknown reduction {s}"))),
    }
}

/// Rebuilds a network from [`save_network`] output.
pub fn load_network(ck: &Checkpoint) -> Result<Network> {
    let parse_usize = |key: &str| -> Result<usize> {
        ck.require(key)?
            .parse()
            .map_err(|_| bad(format!("metadata {key} is not an integer")))
    };
    let n = parse_usize("n")?;
    let width = parse_usize("width")?;
    let classes = parse_usize("classes")?;
    let bias = match ck.require("classifier_bias")? {
        "true" => true,
        "false" => false,
        v => return Err(bad(format!("classifier_bias = {v}"))),
    };
    let blocks = decode_blocks(ck.require("blocks")?).map_err(|e| bad(e.to_string()))?;
    let mut transform = match ck.require("transform")? {
        "circulant" => Transform::circulant(n),
        "identity" => Transform::identity(n),
        "orthogonal" => {
            let mt = ck
                .tensor("transform.matrix")
                .ok_or_else(|| bad("orthogonal transform without transform.matrix"))?;
            let (r, c, _) = mt.dims();
            Transform::orthogonal(Matrix::from_vec(r, c, mt.as_slice().to_vec())?)?
        }
        other => return Err(bad(format!("unknown transform {other}"))),
    };
    if ck.meta("product_path") == Some("fourier") {
        transform = transform.with_path(TProductPath::Fourier);
    }
    let objective = match ck.require("objective")?.split_once(':') {
        Some(("cross_entropy", r)) => Objective::CrossEntropy(parse_reduction(r)?),
        Some(("least_squares", r)) => Objective::LeastSquares(parse_reduction(r)?),
        _ => return Err(bad("unknown objective")),
    };
    let spec = NetworkSpec {
        width,
        n,
        blocks,
        classifier: Some(ClassifierSpec { classes, bias }),
    };
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0);
    let mut net = Network::new(spec, transform, Init::Gaussian, objective, &mut rng)
        .map_err(|e| bad(format!("architecture: {e}")))?;
    let names = net.param_names();
    for (name, p) in names.iter().zip(net.params_mut()) {
        let src = ck
            .tensor(name)
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        if src.dims() != p.dims() {
            return Err(bad(format!(
                "tensor {name} has dims {:?}, architecture expects {:?}",
                src.dims(),
                p.dims()
            )));
        }
        *p = src.clone();
    }
    let known = names.len() + usize::from(ck.tensor("transform.matrix").is_some());
    if ck.tensors.len() != known {
        return Err(bad(format!(
            "checkpoint holds {} tensors, architecture uses {known}",
            ck.tensors.len()
        )));
    }
    Ok(net)
}

/// Weight tensors of every multi-step block, as `(block index, step
/// weights)`, for diagnostics.
pub fn step_weights(net: &Network) -> Vec<(usize, &'static str, Vec<&Tensor3>)> {
    net.blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let kind = match b {
                Block::Linear(_) => "linear",
                Block::Residual(_) => "residual",
                Block::Leapfrog(_) => "leapfrog",
            };
            let ws = match b {
                Block::Linear(l) => vec![&l.weight],
                _ => b.weight_sequence(),
            };
            (i, kind, ws)
        })
        .collect()
}

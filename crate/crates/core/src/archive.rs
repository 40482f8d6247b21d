//! Binary model archives.
//!
//! One file holds one artifact — a network, a multiclass SVM, or a full
//! rejecting pipeline — in a fixed little-endian layout:
//!
//! ```text
//! magic "DNRA" | version u32 | kind u8 | payload_len u64 | payload | sha256
//! ```
//!
//! The trailing SHA-256 covers everything before it, so bit rot and
//! truncation are detected before any value is trusted. Floats are
//! stored via their IEEE bit patterns and round-trip exactly; loading
//! re-runs the same structural validation as assembling a model in
//! memory (derived evaluation plans are rebuilt, not stored).

use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::dnr::{DnrModel, LayerTap};
use crate::error::{Error, Result};
use crate::nn::{Layer, Network, Tensor};
use crate::svm::{BinaryRbfSvm, MulticlassSvm, SmoDiagnostics};

const MAGIC: [u8; 4] = *b"DNRA";
/// On-disk format version written and accepted by this build.
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

const KIND_NETWORK: u8 = 1;
const KIND_SVM: u8 = 2;
const KIND_DNR: u8 = 3;

/// Anything an archive can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Network(Network),
    Svm(MulticlassSvm),
    Dnr(DnrModel),
}

impl Artifact {
    fn kind(&self) -> u8 {
        match self {
            Artifact::Network(_) => KIND_NETWORK,
            Artifact::Svm(_) => KIND_SVM,
            Artifact::Dnr(_) => KIND_DNR,
        }
    }

    fn kind_name(kind: u8) -> &'static str {
        match kind {
            KIND_NETWORK => "network",
            KIND_SVM => "svm",
            KIND_DNR => "dnr",
            _ => "unknown",
        }
    }
}

/// Serializes an artifact to the archive byte layout.
pub fn to_bytes(artifact: &Artifact) -> Vec<u8> {
    let mut payload = Vec::new();
    match artifact {
        Artifact::Network(net) => write_network(&mut payload, net),
        Artifact::Svm(svm) => write_svm(&mut payload, svm),
        Artifact::Dnr(model) => write_dnr(&mut payload, model),
    }

    let mut out = Vec::with_capacity(17 + payload.len() + CHECKSUM_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(artifact.kind());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Parses an archive, verifying the checksum and every structural
/// invariant of the artifact inside.
pub fn from_bytes(bytes: &[u8]) -> Result<Artifact> {
    if bytes.len() < 17 + CHECKSUM_LEN {
        return Err(Error::Corrupt(format!(
            "archive of {} bytes is shorter than any valid file",
            bytes.len()
        )));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::format("archive", "bad magic, not a model archive"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let kind = bytes[8];
    let payload_len = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes")) as usize;
    let body_end = 17usize
        .checked_add(payload_len)
        .ok_or_else(|| Error::Corrupt("payload length overflows".into()))?;
    if bytes.len() != body_end + CHECKSUM_LEN {
        return Err(Error::Corrupt(format!(
            "payload length {} disagrees with file size {}",
            payload_len,
            bytes.len()
        )));
    }
    let digest = Sha256::digest(&bytes[..body_end]);
    if digest.as_slice() != &bytes[body_end..] {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }

    let mut r = Reader {
        buf: &bytes[17..body_end],
        pos: 0,
    };
    let artifact = match kind {
        KIND_NETWORK => Artifact::Network(read_network(&mut r)?),
        KIND_SVM => Artifact::Svm(read_svm(&mut r)?),
        KIND_DNR => Artifact::Dnr(read_dnr(&mut r)?),
        other => {
            return Err(Error::format(
                "archive",
                format!("unknown artifact kind {other}"),
            ))
        }
    };
    if r.pos != r.buf.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing payload bytes",
            r.buf.len() - r.pos
        )));
    }
    Ok(artifact)
}

pub fn save(path: &Path, artifact: &Artifact) -> Result<()> {
    fs::write(path, to_bytes(artifact)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load(path: &Path) -> Result<Artifact> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    save(path, &Artifact::Network(net.clone()))
}

pub fn save_svm(path: &Path, svm: &MulticlassSvm) -> Result<()> {
    save(path, &Artifact::Svm(svm.clone()))
}

pub fn save_dnr(path: &Path, model: &DnrModel) -> Result<()> {
    save(path, &Artifact::Dnr(model.clone()))
}

pub fn load_network(path: &Path) -> Result<Network> {
    match load(path)? {
        Artifact::Network(net) => Ok(net),
        other => Err(wrong_kind("network", &other)),
    }
}

pub fn load_svm(path: &Path) -> Result<MulticlassSvm> {
    match load(path)? {
        Artifact::Svm(svm) => Ok(svm),
        other => Err(wrong_kind("svm", &other)),
    }
}

pub fn load_dnr(path: &Path) -> Result<DnrModel> {
    match load(path)? {
        Artifact::Dnr(model) => Ok(model),
        other => Err(wrong_kind("dnr", &other)),
    }
}

fn wrong_kind(wanted: &str, got: &Artifact) -> Error {
    Error::format(
        "archive",
        format!("holds a {}, wanted a {wanted}", Artifact::kind_name(got.kind())),
    )
}

// ---- payload writers ----

fn write_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_usize(out: &mut Vec<u8>, v: usize) {
    write_u64(out, v as u64);
}

fn write_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_bits().to_le_bytes());
}

fn write_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    write_usize(out, vs.len());
    for &v in vs {
        write_f64(out, v);
    }
}

fn write_usizes(out: &mut Vec<u8>, vs: &[usize]) {
    write_usize(out, vs.len());
    for &v in vs {
        write_usize(out, v);
    }
}

fn write_tensor(out: &mut Vec<u8>, t: &Tensor) {
    write_usizes(out, t.shape());
    write_f64s(out, t.data());
}

fn write_layer(out: &mut Vec<u8>, layer: &Layer) {
    match layer {
        Layer::Dense { weight, bias } => {
            out.push(1);
            write_tensor(out, weight);
            write_f64s(out, bias);
        }
        Layer::Relu => out.push(2),
        Layer::Conv2d { weight, bias } => {
            out.push(3);
            write_tensor(out, weight);
            write_f64s(out, bias);
        }
        Layer::MaxPool2x2 => out.push(4),
        Layer::Flatten => out.push(5),
        Layer::Dropout { p } => {
            out.push(6);
            write_f64(out, *p);
        }
        Layer::Softmax => out.push(7),
    }
}

fn write_network(out: &mut Vec<u8>, net: &Network) {
    write_usizes(out, net.input_shape());
    write_usize(out, net.layers().len());
    for layer in net.layers() {
        write_layer(out, layer);
    }
}

fn write_binary_svm(out: &mut Vec<u8>, m: &BinaryRbfSvm) {
    write_usize(out, m.support_vectors.nrows());
    write_usize(out, m.support_vectors.ncols());
    for &v in m.support_vectors.iter() {
        write_f64(out, v);
    }
    write_f64s(out, &m.coefs);
    write_f64(out, m.bias);
    write_f64(out, m.gamma);
    write_f64(out, m.diagnostics.kkt_residual);
    write_usize(out, m.diagnostics.pair_updates);
    write_f64(out, m.diagnostics.objective);
}

fn write_svm(out: &mut Vec<u8>, svm: &MulticlassSvm) {
    write_usize(out, svm.dim());
    write_usize(out, svm.machines().len());
    for m in svm.machines() {
        write_binary_svm(out, m);
    }
}

fn write_dnr(out: &mut Vec<u8>, model: &DnrModel) {
    write_network(out, model.network());
    write_usizes(out, model.taps().indices());
    write_usize(out, model.num_classes());
    write_usize(out, model.base_svms().len());
    for svm in model.base_svms() {
        write_svm(out, svm);
    }
    write_svm(out, model.combiner());
    match model.theta() {
        None => out.push(0),
        Some(t) => {
            out.push(1);
            write_f64(out, t);
        }
    }
}

// ---- payload readers ----

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt("payload ends mid-value".into()))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        // Any honest count fits in the remaining payload (every element
        // is at least one byte); anything else is corruption.
        if v > self.buf.len() as u64 {
            return Err(Error::Corrupt(format!("implausible {what} count {v}")));
        }
        Ok(v as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len("float")?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len("index")?;
        (0..n).map(|_| self.u64().map(|v| v as usize)).collect()
    }
}

fn read_tensor(r: &mut Reader) -> Result<Tensor> {
    let shape = r.usizes()?;
    let data = r.f64s()?;
    Tensor::new(shape, data)
}

fn read_layer(r: &mut Reader) -> Result<Layer> {
    Ok(match r.u8()? {
        1 => Layer::Dense {
            weight: read_tensor(r)?,
            bias: r.f64s()?,
        },
        2 => Layer::Relu,
        3 => Layer::Conv2d {
            weight: read_tensor(r)?,
            bias: r.f64s()?,
        },
        4 => Layer::MaxPool2x2,
        5 => Layer::Flatten,
        6 => Layer::Dropout { p: r.f64()? },
        7 => Layer::Softmax,
        other => {
            return Err(Error::Corrupt(format!("unknown layer tag {other}")));
        }
    })
}

fn read_network(r: &mut Reader) -> Result<Network> {
    let input_shape = r.usizes()?;
    let n = r.len("layer")?;
    let layers = (0..n).map(|_| read_layer(r)).collect::<Result<Vec<_>>>()?;
    Network::from_layers(input_shape, layers)
}

fn read_binary_svm(r: &mut Reader) -> Result<BinaryRbfSvm> {
    let rows = r.len("support vector")?;
    let cols = r.len("feature")?;
    let total = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Corrupt("support vector matrix overflows".into()))?;
    let mut data = Vec::with_capacity(total);
    for _ in 0..total {
        data.push(r.f64()?);
    }
    let support_vectors = Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Corrupt(format!("support vector matrix: {e}")))?;
    let coefs = r.f64s()?;
    if coefs.len() != rows {
        return Err(Error::Corrupt(format!(
            "{} coefficients for {rows} support vectors",
            coefs.len()
        )));
    }
    let bias = r.f64()?;
    let gamma = r.f64()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Corrupt(format!("kernel width {gamma} out of range")));
    }
    let diagnostics = SmoDiagnostics {
        kkt_residual: r.f64()?,
        pair_updates: r.u64()? as usize,
        objective: r.f64()?,
    };
    Ok(BinaryRbfSvm {
        support_vectors,
        coefs,
        bias,
        gamma,
        diagnostics,
    })
}

fn read_svm(r: &mut Reader) -> Result<MulticlassSvm> {
    let dim = r.len("feature")?;
    let n = r.len("machine")?;
    let machines = (0..n)
        .map(|_| read_binary_svm(r))
        .collect::<Result<Vec<_>>>()?;
    MulticlassSvm::from_machines(machines, dim)
}

fn read_dnr(r: &mut Reader) -> Result<DnrModel> {
    let network = read_network(r)?;
    let tap_indices = r.usizes()?;
    let taps = LayerTap::new(tap_indices, &network)?;
    let num_classes = r.len("class")?;
    let n_base = r.len("base machine")?;
    let base_svms = (0..n_base).map(|_| read_svm(r)).collect::<Result<Vec<_>>>()?;
    let combiner = read_svm(r)?;
    let theta = match r.u8()? {
        0 => None,
        1 => Some(r.f64()?),
        other => {
            return Err(Error::Corrupt(format!("unknown threshold tag {other}")));
        }
    };
    DnrModel::assemble(network, taps, base_svms, combiner, theta, num_classes)
}

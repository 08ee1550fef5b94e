//! Binary field files: one JSON header line, then raw little-endian f64
//! samples (complex values interleaved as re, im).

use crate::dnmap::DnMatrix;
use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::SpaceTimeGrid;
use crate::potentials::PotentialPair;
use crate::C64;
use faer::Mat;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub const ORDER: &str = "t-major,row-major";
/// Headers longer than this are treated as malformed.
const MAX_HEADER: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    C128,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::C128 => 16,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub order: String,
    pub meta: Value,
}

impl Header {
    pub fn count(&self) -> Result<usize> {
        self.shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::format("shape overflows"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F64(Vec<f64>),
    C128(Vec<C64>),
}

pub fn write_raw<W: Write>(mut w: W, shape: &[usize], meta: Value, payload: &Payload) -> Result<()> {
    let dtype = match payload {
        Payload::F64(_) => Dtype::F64,
        Payload::C128(_) => Dtype::C128,
    };
    let header = Header { shape: shape.to_vec(), dtype, order: ORDER.to_string(), meta };
    let n = header.count()?;
    let len = match payload {
        Payload::F64(v) => v.len(),
        Payload::C128(v) => v.len(),
    };
    if n != len {
        return Err(Error::format(format!("shape {shape:?} holds {n} samples, payload has {len}")));
    }
    let line = serde_json::to_string(&header).map_err(|e| Error::format(e.to_string()))?;
    let mut buf = Vec::with_capacity(line.len() + 1 + n * dtype.width());
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    match payload {
        Payload::F64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        Payload::C128(v) => v.iter().for_each(|z| {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }),
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_raw<R: Read>(r: R) -> Result<(Header, Payload)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    (&mut r).take(MAX_HEADER as u64 + 1).read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::format("missing or oversized header line"));
    }
    line.pop();
    let text = std::str::from_utf8(&line).map_err(|_| Error::format("header is not UTF-8"))?;
    let header: Header = serde_json::from_str(text).map_err(|e| Error::format(format!("malformed header: {e}")))?;
    if header.order != ORDER {
        return Err(Error::format(format!("unsupported order {:?}", header.order)));
    }
    let n = header.count()?;
    let want = n.checked_mul(header.dtype.width()).ok_or_else(|| Error::format("shape overflows"))?;
    let mut bytes = Vec::with_capacity(want);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != want {
        return Err(Error::format(format!("payload has {} bytes, header implies {want}", bytes.len())));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
    let payload = match header.dtype {
        Dtype::F64 => Payload::F64(bytes.chunks_exact(8).map(f).collect()),
        Dtype::C128 => Payload::C128(bytes.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect()),
    };
    Ok((header, payload))
}

pub fn write_file(path: &Path, shape: &[usize], meta: Value, payload: &Payload) -> Result<()> {
    let mut buf = Vec::new();
    write_raw(&mut buf, shape, meta, payload)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<(Header, Payload)> {
    read_raw(std::fs::File::open(path)?)
}

fn grid_meta(grid: &SpaceTimeGrid) -> Value {
    serde_json::json!({ "nx": grid.nx, "ny": grid.ny, "nt": grid.nt, "t_final": grid.t_final })
}

fn with_kind(kind: &str, mut meta: Value) -> Value {
    if !meta.is_object() {
        meta = serde_json::json!({ "extra": meta });
    }
    meta["kind"] = Value::from(kind);
    meta
}

fn kind_of(h: &Header) -> Option<&str> {
    h.meta.get("kind").and_then(Value::as_str)
}

pub fn write_complex_field(path: &Path, f: &ComplexField, meta: Value) -> Result<()> {
    write_file(path, &f.dims(), with_kind("complex_field", meta), &Payload::C128(f.data().to_vec()))
}

pub fn read_complex_field(path: &Path) -> Result<(ComplexField, Value)> {
    let (h, p) = read_file(path)?;
    let Payload::C128(v) = p else { return Err(Error::format("expected a c128 field")) };
    let dims = three(&h)?;
    Ok((ComplexField::from_vec(dims, v).expect("length checked against shape"), h.meta))
}

pub fn write_real_field(path: &Path, f: &RealField, meta: Value) -> Result<()> {
    write_file(path, &f.dims(), with_kind("real_field", meta), &Payload::F64(f.data().to_vec()))
}

pub fn read_real_field(path: &Path) -> Result<(RealField, Value)> {
    let (h, p) = read_file(path)?;
    let Payload::F64(v) = p else { return Err(Error::format("expected an f64 field")) };
    let dims = three(&h)?;
    Ok((RealField::from_vec(dims, v).expect("length checked against shape"), h.meta))
}

fn three(h: &Header) -> Result<[usize; 3]> {
    <[usize; 3]>::try_from(h.shape.as_slice()).map_err(|_| Error::format(format!("expected a 3-d shape, got {:?}", h.shape)))
}

/// Components `ax, ay, q` stacked along a leading axis of length 3.
pub fn write_potential_pair(path: &Path, grid: &SpaceTimeGrid, p: &PotentialPair) -> Result<()> {
    let d = p.dims();
    let mut v = Vec::with_capacity(3 * p.ax.data().len());
    for f in [&p.ax, &p.ay, &p.q] {
        v.extend_from_slice(f.data());
    }
    let meta = with_kind("potential_pair", serde_json::json!({ "components": ["ax", "ay", "q"], "grid": grid_meta(grid) }));
    write_file(path, &[3, d[0], d[1], d[2]], meta, &Payload::F64(v))
}

pub fn read_potential_pair(path: &Path, grid: &SpaceTimeGrid) -> Result<PotentialPair> {
    let (h, p) = read_file(path)?;
    if kind_of(&h) != Some("potential_pair") {
        return Err(Error::format("file does not hold a potential pair"));
    }
    let Payload::F64(v) = p else { return Err(Error::format("potential pairs are stored as f64")) };
    let d = grid.dims();
    if h.shape != [3, d[0], d[1], d[2]] {
        return Err(Error::invalid(format!("potential shape {:?} does not match the grid {:?}", h.shape, d)));
    }
    let n = d[0] * d[1] * d[2];
    let part = |k: usize| RealField::from_vec(d, v[k * n..(k + 1) * n].to_vec()).expect("sizes match");
    PotentialPair::from_fields(grid, part(0), part(1), part(2))
}

/// DN matrix entries with the basis description in the header.
pub fn write_dn_matrix(path: &Path, m: &DnMatrix) -> Result<()> {
    let (r, c) = (m.entries.nrows(), m.entries.ncols());
    let mut v = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            v.push(m.entries[(i, j)]);
        }
    }
    let meta = with_kind(
        "dn_matrix",
        serde_json::json!({ "l_time": m.l_time, "m_space": m.m_space, "weights": m.weights, "grid_shape": m.grid_shape }),
    );
    write_file(path, &[r, c], meta, &Payload::C128(v))
}

pub fn read_dn_matrix(path: &Path) -> Result<DnMatrix> {
    let (h, p) = read_file(path)?;
    if kind_of(&h) != Some("dn_matrix") || h.shape.len() != 2 {
        return Err(Error::format("file does not hold a DN matrix"));
    }
    let Payload::C128(v) = p else { return Err(Error::format("DN matrices are stored as c128")) };
    #[derive(Deserialize)]
    struct Meta {
        l_time: usize,
        m_space: usize,
        weights: Vec<f64>,
        grid_shape: [usize; 3],
    }
    let meta: Meta = serde_json::from_value(h.meta.clone()).map_err(|e| Error::format(format!("DN matrix metadata: {e}")))?;
    let (r, c) = (h.shape[0], h.shape[1]);
    if meta.weights.len() != c {
        return Err(Error::format("weight count differs from the column count"));
    }
    Ok(DnMatrix {
        entries: Mat::from_fn(r, c, |i, j| v[i * c + j]),
        weights: meta.weights,
        l_time: meta.l_time,
        m_space: meta.m_space,
        grid_shape: meta.grid_shape,
    })
}

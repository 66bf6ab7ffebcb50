//! Residual network: one input bias, two leaky-ReLU layers and a linear
//! output layer, stored as a single flat parameter vector.
//!
//! The flat layout is `[b_in | W_in | W_lay | b_lay | W_out | b_out]` with
//! every matrix stored row-major. The input bias is added to the input before
//! the input weights:
//!
//! ```text
//! out = W_out · σ(W_lay · σ(W_in · (z + b_in)) + b_lay) + b_out
//! ```
//!
//! which gives 198 parameters for a (5, 10, 3) network and 209 for (6, 10, 3).

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slope of the negative half of the activation.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
}

impl MlpSpec {
    pub const DIFF_DRIVE: MlpSpec = MlpSpec::new(5, 10, 3);
    pub const ARM: MlpSpec = MlpSpec::new(6, 10, 3);

    pub const fn new(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        MlpSpec {
            n_in,
            n_hidden,
            n_out,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_hidden == 0 || self.n_out == 0 {
            return Err(Error::invalid("MlpSpec", format!("all widths must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    fn offsets(&self) -> Offsets {
        let (i, h, o) = (self.n_in, self.n_hidden, self.n_out);
        let b_in = 0;
        let w_in = b_in + i;
        let w_lay = w_in + h * i;
        let b_lay = w_lay + h * h;
        let w_out = b_lay + h;
        let b_out = w_out + o * h;
        Offsets {
            b_in,
            w_in,
            w_lay,
            b_lay,
            w_out,
            b_out,
            end: b_out + o,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    b_in: usize,
    w_in: usize,
    w_lay: usize,
    b_lay: usize,
    w_out: usize,
    b_out: usize,
    end: usize,
}

/// Total parameter count of the flat layout.
pub fn param_count(spec: &MlpSpec) -> usize {
    let (i, h, o) = (spec.n_in, spec.n_hidden, spec.n_out);
    i + i * h + h * h + h + o * h + o
}

/// Flat network parameters in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(ParamVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check_spec(&self, spec: &MlpSpec) -> Result<()> {
        let expected = param_count(spec);
        if self.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected,
                got: self.len(),
            });
        }
        Ok(())
    }
}

impl From<DVector<f64>> for ParamVector {
    fn from(v: DVector<f64>) -> Self {
        ParamVector(v.as_slice().to_vec())
    }
}

/// Structured view of the network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub b_in: DVector<f64>,
    pub w_in: DMatrix<f64>,
    pub w_lay: DMatrix<f64>,
    pub b_lay: DVector<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
}

impl MlpWeights {
    pub fn spec(&self) -> MlpSpec {
        MlpSpec::new(self.b_in.len(), self.b_lay.len(), self.b_out.len())
    }
}

pub fn leaky_relu(b: &[f64]) -> Vec<f64> {
    b.iter().map(|&v| leaky(v)).collect()
}

#[inline]
fn leaky(v: f64) -> f64 {
    v.max(LEAKY_SLOPE * v)
}

/// Evaluates the network on `z`.
pub fn forward(params: &ParamVector, spec: &MlpSpec, z: &[f64]) -> Result<Vec<f64>> {
    params.check_spec(spec)?;
    let mut out = vec![0.0; spec.n_out];
    forward_into(params.as_slice(), spec, z, &mut out)?;
    Ok(out)
}

/// Slice-level forward pass writing into `out` (length `n_out`).
pub fn forward_into(params: &[f64], spec: &MlpSpec, z: &[f64], out: &mut [f64]) -> Result<()> {
    let off = spec.offsets();
    if params.len() != off.end {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: off.end,
            got: params.len(),
        });
    }
    if z.len() != spec.n_in {
        return Err(Error::DimensionMismatch {
            what: "network input",
            expected: spec.n_in,
            got: z.len(),
        });
    }
    if out.len() != spec.n_out {
        return Err(Error::DimensionMismatch {
            what: "network output",
            expected: spec.n_out,
            got: out.len(),
        });
    }
    let (n_in, h) = (spec.n_in, spec.n_hidden);

    let shifted: Vec<f64> = z
        .iter()
        .zip(&params[off.b_in..off.w_in])
        .map(|(zi, bi)| zi + bi)
        .collect();

    let mut first = vec![0.0; h];
    for (r, a) in first.iter_mut().enumerate() {
        let row = &params[off.w_in + r * n_in..off.w_in + (r + 1) * n_in];
        *a = leaky(dot(row, &shifted));
    }

    let mut second = vec![0.0; h];
    for (r, a) in second.iter_mut().enumerate() {
        let row = &params[off.w_lay + r * h..off.w_lay + (r + 1) * h];
        *a = leaky(dot(row, &first) + params[off.b_lay + r]);
    }

    for (r, o) in out.iter_mut().enumerate() {
        let row = &params[off.w_out + r * h..off.w_out + (r + 1) * h];
        *o = dot(row, &second) + params[off.b_out + r];
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn pack(weights: &MlpWeights) -> Result<ParamVector> {
    let spec = weights.spec();
    spec.validate()?;
    let (i, h, o) = (spec.n_in, spec.n_hidden, spec.n_out);
    check_shape("W_in", weights.w_in.shape(), (h, i))?;
    check_shape("W_lay", weights.w_lay.shape(), (h, h))?;
    check_shape("W_out", weights.w_out.shape(), (o, h))?;

    let mut v = Vec::with_capacity(param_count(&spec));
    v.extend(weights.b_in.iter());
    push_row_major(&mut v, &weights.w_in);
    push_row_major(&mut v, &weights.w_lay);
    v.extend(weights.b_lay.iter());
    push_row_major(&mut v, &weights.w_out);
    v.extend(weights.b_out.iter());
    ParamVector::from_vec(v)
}

pub fn unpack(params: &ParamVector, spec: &MlpSpec) -> Result<MlpWeights> {
    spec.validate()?;
    params.check_spec(spec)?;
    let off = spec.offsets();
    let p = params.as_slice();
    let (i, h, o) = (spec.n_in, spec.n_hidden, spec.n_out);
    Ok(MlpWeights {
        b_in: DVector::from_column_slice(&p[off.b_in..off.w_in]),
        w_in: DMatrix::from_row_slice(h, i, &p[off.w_in..off.w_lay]),
        w_lay: DMatrix::from_row_slice(h, h, &p[off.w_lay..off.b_lay]),
        b_lay: DVector::from_column_slice(&p[off.b_lay..off.w_out]),
        w_out: DMatrix::from_row_slice(o, h, &p[off.w_out..off.b_out]),
        b_out: DVector::from_column_slice(&p[off.b_out..off.end]),
    })
}

fn check_shape(what: &'static str, got: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if got != expected {
        return Err(Error::invalid(
            "MlpWeights",
            format!("{what} has shape {got:?}, expected {expected:?}"),
        ));
    }
    Ok(())
}

fn push_row_major(v: &mut Vec<f64>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        v.extend(m.row(r).iter());
    }
}

/// Uniform initialization in `[-scale, scale]`; `scale == 0` gives the zero
/// network.
pub fn init_params(spec: &MlpSpec, seed: u64, scale: f64) -> Result<ParamVector> {
    spec.validate()?;
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::invalid("scale", format!("must be finite and >= 0, got {scale}")));
    }
    let n = param_count(spec);
    if scale == 0.0 {
        return Ok(ParamVector::zeros(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
    ParamVector::from_vec(values)
}

/// Upper bound on the input-to-output Lipschitz constant, from Frobenius
/// norms of the three weight matrices.
pub fn lipschitz_bound(params: &ParamVector, spec: &MlpSpec) -> Result<f64> {
    let w = unpack(params, spec)?;
    Ok(w.w_out.norm() * w.w_lay.norm() * w.w_in.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub seed: u64,
}

impl SnapshotHeader {
    pub fn spec(&self) -> MlpSpec {
        MlpSpec::new(self.n_in, self.n_hidden, self.n_out)
    }
}

/// Serialized parameter snapshot: a header followed by the flat values in
/// layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSnapshot {
    pub header: SnapshotHeader,
    pub values: ParamVector,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"RTPV";

impl ParamSnapshot {
    pub fn new(spec: MlpSpec, seed: u64, values: ParamVector) -> Result<Self> {
        values.check_spec(&spec)?;
        Ok(ParamSnapshot {
            header: SnapshotHeader {
                n_in: spec.n_in,
                n_hidden: spec.n_hidden,
                n_out: spec.n_out,
                seed,
            },
            values,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: ParamSnapshot = serde_json::from_str(s)?;
        snap.header.spec().validate()?;
        snap.values.check_spec(&snap.header.spec())?;
        if snap.values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter snapshot"));
        }
        Ok(snap)
    }

    /// Little-endian binary form: magic, three u32 widths, u64 seed, u64
    /// count, then f64 values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        for width in [self.header.n_in, self.header.n_hidden, self.header.n_out] {
            w.write_all(&(width as u32).to_le_bytes())?;
        }
        w.write_all(&self.header.seed.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in self.values.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format("bad parameter snapshot magic".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut widths = [0usize; 3];
        for w in widths.iter_mut() {
            r.read_exact(&mut u32buf)?;
            *w = u32::from_le_bytes(u32buf) as usize;
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        let spec = MlpSpec::new(widths[0], widths[1], widths[2]);
        spec.validate()?;
        if count != param_count(&spec) {
            return Err(Error::DimensionMismatch {
                what: "parameter snapshot",
                expected: param_count(&spec),
                got: count,
            });
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut u64buf)?;
            values.push(f64::from_le_bytes(u64buf));
        }
        ParamSnapshot::new(spec, seed, ParamVector::from_vec(values)?)
    }
}

//! Dense real 4-D tensors `[b, c, h, w]` with binary and text encodings.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! "SPT1" u8 dtype (1 = f64) u8[3] reserved u32 b u32 c u32 h u32 w
//! b·c·h·w × f64 payload, row-major
//! ```
//!
//! Text layout: a first line `b c h w`, then the payload as
//! whitespace-separated numbers (line breaks anywhere).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SPT1";
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialTensor {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl SpatialTensor {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::ShapeMismatch(format!("dimensions {dims:?} must be positive")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!("{} values for dimensions {dims:?}", data.len())));
        }
        Ok(Self { dims, data })
    }

    /// Image tensor with batch 1.
    pub fn image(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec([1, c, h, w], data)
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }
    pub fn channels(&self) -> usize {
        self.dims[1]
    }
    pub fn height(&self) -> usize {
        self.dims[2]
    }
    pub fn width(&self) -> usize {
        self.dims[3]
    }

    fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(b, c, y, x)]
    }

    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: f64) {
        let o = self.offset(b, c, y, x);
        self.data[o] = v;
    }

    pub fn add(&mut self, b: usize, c: usize, y: usize, x: usize, v: f64) {
        let o = self.offset(b, c, y, x);
        self.data[o] += v;
    }

    /// `[h, w]` plane of batch `b`, channel `c`.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let n = self.dims[2] * self.dims[3];
        let o = self.offset(b, c, 0, 0);
        &self.data[o..o + n]
    }

    pub fn max_abs_diff(&self, other: &SpatialTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[DTYPE_F64, 0, 0, 0])?;
        for d in self.dims {
            let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 24];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("not a tensor file".into()));
        }
        if head[4] != DTYPE_F64 {
            return Err(Error::Format(format!("unsupported dtype tag {}", head[4])));
        }
        let mut dims = [0usize; 4];
        for (i, d) in dims.iter_mut().enumerate() {
            let o = 8 + 4 * i;
            *d = u32::from_le_bytes(head[o..o + 4].try_into().expect("4 bytes")) as usize;
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let n: usize = dims.iter().product();
        if payload.len() != n * 8 {
            return Err(Error::Format(format!("expected {} payload bytes, found {}", n * 8, payload.len())));
        }
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Self::from_vec(dims, data)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {} {}\n", self.dims[0], self.dims[1], self.dims[2], self.dims[3]);
        for row in self.data.chunks(self.dims[3]) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut dims = [0usize; 4];
        for d in &mut dims {
            let t = tokens.next().ok_or_else(|| Error::Format("missing dimension".into()))?;
            *d = t.parse().map_err(|_| Error::Format(format!("bad dimension `{t}`")))?;
        }
        let data = tokens
            .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad value `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_vec(dims, data)
    }
}

//! Binary raster container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `CTRW`                  |
//! | 4      | 1    | kind (1 depth, 2 flow, 3 mask, 4 features) |
//! | 5      | 1    | dtype (1 = u8, 2 = f32)       |
//! | 6      | 2    | reserved, must be 0           |
//! | 8      | 4    | h (features: frame count)     |
//! | 12     | 4    | w (features: dimension)       |
//! | 16     | ...  | row-major payload             |
//!
//! Depth is `f32[h·w]`, flow is `f32[h·w·2]` interleaved `(u, v)`, mask is
//! `u8[h·w]` holding 0/1, features are `f32[h·w]`.

use std::path::Path;

use super::FormatError;
use crate::calibration::{CalibrationError, DepthPair};
use crate::metrics::{ClipFeatures, FlowField, SegMask};

pub const MAGIC: [u8; 4] = *b"CTRW";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum RasterKind {
    Depth = 1,
    Flow = 2,
    Mask = 3,
    Features = 4,
}

impl RasterKind {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::Depth),
            2 => Some(Self::Flow),
            3 => Some(Self::Mask),
            4 => Some(Self::Features),
            _ => None,
        }
    }

    pub fn dtype(self) -> Dtype {
        match self {
            Self::Mask => Dtype::U8,
            _ => Dtype::F32,
        }
    }

    /// Scalars per `(row, col)` cell.
    pub fn channels(self) -> usize {
        match self {
            Self::Flow => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Depth => "depth",
            Self::Flow => "flow",
            Self::Mask => "mask",
            Self::Features => "features",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    U8 = 1,
    F32 = 2,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    kind: RasterKind,
    h: u32,
    w: u32,
    data: RasterData,
}

impl Raster {
    fn checked(kind: RasterKind, h: u32, w: u32, data: RasterData) -> Result<Self, FormatError> {
        let expected = h as usize * w as usize * kind.channels();
        let len = match &data {
            RasterData::U8(v) => v.len(),
            RasterData::F32(v) => v.len(),
        };
        if len != expected {
            return Err(FormatError::PayloadLength { expected, actual: len });
        }
        let r = Self { kind, h, w, data };
        r.validate_values()?;
        Ok(r)
    }

    /// NaN and non-positive entries are allowed; they mark missing depth.
    pub fn depth(h: u32, w: u32, data: Vec<f32>) -> Result<Self, FormatError> {
        Self::checked(RasterKind::Depth, h, w, RasterData::F32(data))
    }

    /// `data` is interleaved `(u, v)` per pixel.
    pub fn flow(h: u32, w: u32, data: Vec<f32>) -> Result<Self, FormatError> {
        Self::checked(RasterKind::Flow, h, w, RasterData::F32(data))
    }

    pub fn mask(h: u32, w: u32, data: Vec<u8>) -> Result<Self, FormatError> {
        Self::checked(RasterKind::Mask, h, w, RasterData::U8(data))
    }

    pub fn features(frames: u32, dim: u32, data: Vec<f32>) -> Result<Self, FormatError> {
        Self::checked(RasterKind::Features, frames, dim, RasterData::F32(data))
    }

    pub fn kind(&self) -> RasterKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h as usize, self.w as usize)
    }

    pub fn data(&self) -> &RasterData {
        &self.data
    }

    fn f32s(&self) -> &[f32] {
        match &self.data {
            RasterData::F32(v) => v,
            RasterData::U8(_) => &[],
        }
    }

    fn validate_values(&self) -> Result<(), FormatError> {
        match (&self.data, self.kind) {
            (RasterData::U8(v), RasterKind::Mask) => match v.iter().position(|&b| b > 1) {
                Some(index) => Err(FormatError::BadMaskValue { index, value: v[index] }),
                None => Ok(()),
            },
            (RasterData::F32(_), RasterKind::Depth) => Ok(()),
            (RasterData::F32(v), RasterKind::Flow | RasterKind::Features) => match v.iter().position(|x| !x.is_finite()) {
                Some(index) => Err(FormatError::NonFinite { kind: self.kind.name(), index }),
                None => Ok(()),
            },
            _ => Err(FormatError::DtypeMismatch { kind: self.kind.name(), code: self.dtype_code() }),
        }
    }

    fn dtype_code(&self) -> u8 {
        match self.data {
            RasterData::U8(_) => Dtype::U8 as u8,
            RasterData::F32(_) => Dtype::F32 as u8,
        }
    }

    /// Depth values widened to f64 (row-major). Only meaningful for depth.
    pub fn depth_values(&self) -> Vec<f64> {
        self.f32s().iter().map(|&x| x as f64).collect()
    }

    pub fn to_flow_field(&self) -> Result<FlowField, FormatError> {
        self.expect_kind(RasterKind::Flow)?;
        let v = self.f32s();
        let u: Vec<f64> = v.iter().step_by(2).map(|&x| x as f64).collect();
        let vv: Vec<f64> = v.iter().skip(1).step_by(2).map(|&x| x as f64).collect();
        let (h, w) = self.shape();
        FlowField::new(h, w, u, vv).map_err(FormatError::from)
    }

    pub fn to_seg_mask(&self) -> Result<SegMask, FormatError> {
        self.expect_kind(RasterKind::Mask)?;
        let RasterData::U8(v) = &self.data else { unreachable!("mask is u8") };
        let (h, w) = self.shape();
        SegMask::new(h, w, v.iter().map(|&b| b == 1).collect()).map_err(FormatError::from)
    }

    pub fn to_clip_features(&self) -> Result<ClipFeatures, FormatError> {
        self.expect_kind(RasterKind::Features)?;
        let (h, w) = self.shape();
        ClipFeatures::new(h, w, self.f32s().iter().map(|&x| x as f64).collect()).map_err(FormatError::from)
    }

    fn expect_kind(&self, kind: RasterKind) -> Result<(), FormatError> {
        if self.kind != kind {
            return Err(FormatError::KindMismatch { expected: kind.name(), found: self.kind as u8 });
        }
        Ok(())
    }
}

/// Pairs an SfM depth raster with a metric depth raster. Pixels where either
/// depth is NaN, infinite or non-positive are invalid.
pub fn depth_pair(sfm: &Raster, metric: &Raster) -> Result<DepthPair, FormatError> {
    sfm.expect_kind(RasterKind::Depth)?;
    metric.expect_kind(RasterKind::Depth)?;
    if sfm.shape() != metric.shape() {
        return Err(FormatError::Calibration(CalibrationError::ShapeMismatch));
    }
    let (h, w) = sfm.shape();
    DepthPair::from_depths(h, w, sfm.depth_values(), metric.depth_values()).map_err(FormatError::from)
}

pub fn encode_raster(r: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + r.h as usize * r.w as usize * 8);
    out.extend_from_slice(&MAGIC);
    out.push(r.kind as u8);
    out.push(r.dtype_code());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&r.h.to_le_bytes());
    out.extend_from_slice(&r.w.to_le_bytes());
    match &r.data {
        RasterData::U8(v) => out.extend_from_slice(v),
        RasterData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn decode_raster(bytes: &[u8], kind: RasterKind) -> Result<Raster, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    if bytes[0..4] != MAGIC {
        return Err(FormatError::BadMagic([bytes[0], bytes[1], bytes[2], bytes[3]]));
    }
    let found = bytes[4];
    match RasterKind::from_code(found) {
        Some(k) if k == kind => {}
        _ => return Err(FormatError::KindMismatch { expected: kind.name(), found }),
    }
    if bytes[5] != kind.dtype() as u8 {
        return Err(FormatError::DtypeMismatch { kind: kind.name(), code: bytes[5] });
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(FormatError::ReservedNonZero);
    }
    let h = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let w = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    let count = (h as usize)
        .checked_mul(w as usize)
        .and_then(|n| n.checked_mul(kind.channels()))
        .ok_or(FormatError::PayloadLength { expected: usize::MAX, actual: bytes.len() - HEADER_LEN })?;
    let expected = count
        .checked_mul(kind.dtype().size())
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(FormatError::PayloadLength { expected: usize::MAX, actual: bytes.len() - HEADER_LEN })?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated { expected, actual: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes { expected, actual: bytes.len() });
    }
    let payload = &bytes[HEADER_LEN..];
    let data = match kind.dtype() {
        Dtype::U8 => RasterData::U8(payload.to_vec()),
        Dtype::F32 => RasterData::F32(
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect(),
        ),
    };
    Raster::checked(kind, h, w, data)
}

pub fn read_raster(path: &Path, kind: RasterKind) -> Result<Raster, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_raster(&bytes, kind)
}

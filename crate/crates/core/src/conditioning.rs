//! Denoiser-side contracts that need no network: text+camera classifier-free
//! guidance, camera/visual feature fusion, and the token layout and loss mask
//! used when a clip is generated conditioned on the previous one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditioningError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("guidance weights must be finite and non-negative")]
    InvalidWeights,
    #[error("current clip must contain at least one token")]
    EmptyCurrentClip,
    #[error("loss mask selects no tokens")]
    EmptyLossMask,
    #[error("{len} values cannot be split into {tokens} tokens")]
    IndivisibleLayout { len: usize, tokens: usize },
    #[error("{requested} condition frames outside allowed range [{min}, {max}] for {total} frames")]
    ConditionFrames { requested: usize, min: usize, max: usize, total: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceWeights {
    pub w_text: f64,
    pub w_cam: f64,
}

impl Default for GuidanceWeights {
    fn default() -> Self {
        Self { w_text: 7.5, w_cam: 8.0 }
    }
}

impl GuidanceWeights {
    pub fn validate(&self) -> Result<(), ConditioningError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if ok(self.w_text) && ok(self.w_cam) {
            Ok(())
        } else {
            Err(ConditioningError::InvalidWeights)
        }
    }
}

fn check_finite(v: &[f64], what: &'static str) -> Result<(), ConditioningError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ConditioningError::NonFinite(what))
    }
}

/// `ε_u + w_text·(ε_text − ε_u) + w_cam·(ε_full − ε_text)`, elementwise.
///
/// `eps_uncond` has neither condition, `eps_text` only text, `eps_full` text
/// and camera. With `w_cam = 1` the sum is anchored on `eps_full` instead, which
/// is the same polynomial but returns `eps_full` bit-exactly for `(1, 1)`.
/// Zero-weight terms are skipped, so `w_cam = 0` is bit-identical to plain
/// text guidance.
pub fn combine_guidance(
    eps_uncond: &[f64],
    eps_text: &[f64],
    eps_full: &[f64],
    w: GuidanceWeights,
) -> Result<Vec<f64>, ConditioningError> {
    w.validate()?;
    for other in [eps_text, eps_full] {
        if other.len() != eps_uncond.len() {
            return Err(ConditioningError::LengthMismatch(eps_uncond.len(), other.len()));
        }
    }
    check_finite(eps_uncond, "eps_uncond")?;
    check_finite(eps_text, "eps_text")?;
    check_finite(eps_full, "eps_full")?;

    let out = if w.w_cam == 1.0 {
        let wt = w.w_text - 1.0;
        eps_uncond
            .iter()
            .zip(eps_text)
            .zip(eps_full)
            .map(|((&u, &t), &f)| if wt == 0.0 { f } else { f + wt * (t - u) })
            .collect()
    } else {
        eps_uncond
            .iter()
            .zip(eps_text)
            .zip(eps_full)
            .map(|((&u, &t), &f)| {
                let mut x = u;
                if w.w_text != 0.0 {
                    x += w.w_text * (t - u);
                }
                if w.w_cam != 0.0 {
                    x += w.w_cam * (f - t);
                }
                x
            })
            .collect()
    };
    Ok(out)
}

/// Dense row-major `rows × cols` matrix of token features.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ConditioningError> {
        if data.len() != rows * cols {
            return Err(ConditioningError::LengthMismatch(data.len(), rows * cols));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Drops the last column.
    pub fn without_last_column(&self) -> Self {
        let cols = self.cols.saturating_sub(1);
        let data = self.data.chunks(self.cols.max(1)).flat_map(|r| r[..cols].iter().copied()).collect();
        Self { rows: self.rows, cols, data }
    }
}

/// Camera features are added onto visual features; both come from patchify
/// layers with identical output shape.
pub fn fuse_camera_features(visual: &TokenMatrix, camera: &TokenMatrix) -> Result<TokenMatrix, ConditioningError> {
    if visual.shape() != camera.shape() {
        return Err(ConditioningError::ShapeMismatch(visual.shape(), camera.shape()));
    }
    let data = visual.data.iter().zip(&camera.data).map(|(a, b)| a + b).collect();
    Ok(TokenMatrix { rows: visual.rows, cols: visual.cols, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipLayout {
    pub q_prev: usize,
    pub q_cur: usize,
    pub c: usize,
}

/// Clean tokens of the previous clip stacked over noised tokens of the current
/// clip, with a trailing mask channel (1 = condition, 0 = generated).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionInput {
    pub layout: ClipLayout,
    pub tokens: TokenMatrix,
    /// `true` on tokens that contribute to the loss.
    pub loss_mask: Vec<bool>,
}

impl ExtensionInput {
    pub fn condition_tokens(&self) -> TokenMatrix {
        self.tokens.slice_rows(0..self.layout.q_prev).without_last_column()
    }

    pub fn current_tokens(&self) -> TokenMatrix {
        let q = self.layout.q_prev + self.layout.q_cur;
        self.tokens.slice_rows(self.layout.q_prev..q).without_last_column()
    }
}

pub fn build_extension_input(prev: &TokenMatrix, cur: &TokenMatrix) -> Result<ExtensionInput, ConditioningError> {
    if cur.rows == 0 {
        return Err(ConditioningError::EmptyCurrentClip);
    }
    if prev.cols != cur.cols {
        return Err(ConditioningError::ShapeMismatch(prev.shape(), cur.shape()));
    }
    let c = cur.cols;
    let q = prev.rows + cur.rows;
    let mut data = Vec::with_capacity(q * (c + 1));
    for r in 0..prev.rows {
        data.extend_from_slice(prev.row(r));
        data.push(1.0);
    }
    for r in 0..cur.rows {
        data.extend_from_slice(cur.row(r));
        data.push(0.0);
    }
    let loss_mask = (0..q).map(|r| r >= prev.rows).collect();
    Ok(ExtensionInput {
        layout: ClipLayout { q_prev: prev.rows, q_cur: cur.rows, c },
        tokens: TokenMatrix { rows: q, cols: c + 1, data },
        loss_mask,
    })
}

/// Mean squared error over the entries of tokens whose loss-mask bit is set.
/// `pred` and `target` are flat `q × c` buffers with `q = loss_mask.len()`.
pub fn masked_diffusion_loss(pred: &[f64], target: &[f64], loss_mask: &[bool]) -> Result<f64, ConditioningError> {
    if pred.len() != target.len() {
        return Err(ConditioningError::LengthMismatch(pred.len(), target.len()));
    }
    let q = loss_mask.len();
    if q == 0 || !pred.len().is_multiple_of(q) {
        return Err(ConditioningError::IndivisibleLayout { len: pred.len(), tokens: q });
    }
    let c = pred.len() / q;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (token, _) in loss_mask.iter().enumerate().filter(|(_, m)| **m) {
        for k in token * c..(token + 1) * c {
            let d = pred[k] - target[k];
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(ConditioningError::EmptyLossMask);
    }
    Ok(sum / n as f64)
}

/// Bounds on how many frames of the previous clip may condition the next one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionFramePolicy {
    pub min_frames: usize,
    /// Upper bound as a fraction of the total frame count.
    pub max_fraction: f64,
}

impl Default for ConditionFramePolicy {
    fn default() -> Self {
        Self { min_frames: 5, max_fraction: 0.5 }
    }
}

impl ConditionFramePolicy {
    pub fn max_frames(&self, total_frames: usize) -> usize {
        (total_frames as f64 * self.max_fraction).floor() as usize
    }

    /// Accepts `requested` iff `min_frames ≤ requested ≤ ⌊max_fraction·total⌋`.
    pub fn validate(&self, requested: usize, total_frames: usize) -> Result<usize, ConditioningError> {
        let max = self.max_frames(total_frames);
        if requested < self.min_frames || requested > max {
            return Err(ConditioningError::ConditionFrames {
                requested,
                min: self.min_frames,
                max,
                total: total_frames,
            });
        }
        Ok(requested)
    }
}

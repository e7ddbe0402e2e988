//! Clip sampling, resizing, consistent cropping and temporal pooling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Modality;
use crate::error::{Error, Result};
use crate::loss::Label;
use crate::scalar::Scalar;

/// `height × width × channels` values, channel-last row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!("frame dimensions {height}x{width}x{channels} must be positive")));
        }
        if values.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "frame {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.values[(row * self.width + col) * self.channels + channel]
    }

    fn same_shape(&self, other: &Self) -> bool {
        (self.height, self.width, self.channels) == (other.height, other.width, other.channels)
    }
}

/// A rendered sequence for one modality of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence<T> {
    pub id: String,
    pub modality: Modality,
    pub label: Label,
    frames: Vec<Frame<T>>,
}

impl<T: Scalar> FrameSequence<T> {
    pub fn new(id: impl Into<String>, modality: Modality, label: Label, frames: Vec<Frame<T>>) -> Result<Self> {
        let id = id.into();
        let Some(first) = frames.first() else {
            return Err(Error::Data(format!("sequence {id} has no frames")));
        };
        if frames.iter().any(|f| !f.same_shape(first)) {
            return Err(Error::Shape(format!("sequence {id} mixes frame shapes")));
        }
        if frames.iter().any(|f| f.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("sequence {id} frame values")));
        }
        Ok(Self {
            id,
            modality,
            label,
            frames,
        })
    }

    pub fn frames(&self) -> &[Frame<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

/// Exactly `T` frames cut from a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip<T> {
    frames: Vec<Frame<T>>,
    /// Index of the first sampled frame in the source sequence.
    pub start: usize,
    /// Number of trailing copies of the last frame appended.
    pub padded: usize,
    pub crop: Option<CropWindow>,
}

impl<T: Scalar> Clip<T> {
    pub fn frames(&self) -> &[Frame<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Resizes every frame to `target_width`.
    pub fn resized(self, target_width: usize) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|f| resize_keep_aspect(f, target_width))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { frames, ..self })
    }
}

/// `t` consecutive frames from a uniform start in `[0, len - t]`; shorter
/// sequences are returned whole and padded with copies of their last frame.
pub fn sample_clip<T: Scalar, R: Rng + ?Sized>(seq: &FrameSequence<T>, t: usize, rng: &mut R) -> Result<Clip<T>> {
    if t == 0 {
        return Err(Error::Config("clip length must be positive".into()));
    }
    let len = seq.frames.len();
    if len == 0 {
        return Err(Error::Data(format!("sequence {} has no frames", seq.id)));
    }
    if len >= t {
        let start = rng.random_range(0..=len - t);
        return Ok(Clip {
            frames: seq.frames[start..start + t].to_vec(),
            start,
            padded: 0,
            crop: None,
        });
    }
    let mut frames = seq.frames.clone();
    let last = frames[len - 1].clone();
    frames.resize(t, last);
    Ok(Clip {
        frames,
        start: 0,
        padded: t - len,
        crop: None,
    })
}

/// `a + f (b - a)` kept inside `[min(a, b), max(a, b)]`.
#[inline]
fn lerp<T: Scalar>(a: T, b: T, f: T) -> T {
    let v = a + f * (b - a);
    v.max(a.min(b)).min(a.max(b))
}

/// Source sample positions for a half-pixel-centred (align-corners = false) resize.
fn sample_positions<T: Scalar>(n_in: usize, n_out: usize) -> Vec<(usize, usize, T)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, T::lit(src - i0 as f64))
        })
        .collect()
}

/// Bilinear resize to `target_width`, height `round(H · target_width / W)`.
pub fn resize_keep_aspect<T: Scalar>(frame: &Frame<T>, target_width: usize) -> Result<Frame<T>> {
    if target_width == 0 {
        return Err(Error::Config("resize width must be at least 1".into()));
    }
    let (h, w, c) = (frame.height, frame.width, frame.channels);
    let out_h = ((2 * h * target_width + w) / (2 * w)).max(1);
    let rows = sample_positions::<T>(h, out_h);
    let cols = sample_positions::<T>(w, target_width);
    let mut values = Vec::with_capacity(out_h * target_width * c);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            for ch in 0..c {
                let top = lerp(frame.get(r0, c0, ch), frame.get(r0, c1, ch), fc);
                let bottom = lerp(frame.get(r1, c0, ch), frame.get(r1, c1, ch), fc);
                values.push(lerp(top, bottom, fr));
            }
        }
    }
    Frame::new(out_h, target_width, c, values)
}

fn crop_frame<T: Scalar>(frame: &Frame<T>, window: CropWindow) -> Frame<T> {
    let c = frame.channels;
    let mut values = Vec::with_capacity(window.size * window.size * c);
    for r in window.row..window.row + window.size {
        let begin = (r * frame.width + window.col) * c;
        values.extend_from_slice(&frame.values[begin..begin + window.size * c]);
    }
    Frame {
        height: window.size,
        width: window.size,
        channels: c,
        values,
    }
}

/// Square crop at one uniformly drawn offset, applied identically to every frame.
pub fn random_crop_clip<T: Scalar, R: Rng + ?Sized>(clip: &Clip<T>, size: usize, rng: &mut R) -> Result<Clip<T>> {
    let Some(first) = clip.frames.first() else {
        return Err(Error::Data("cannot crop an empty clip".into()));
    };
    if size == 0 || size > first.height.min(first.width) {
        return Err(Error::Config(format!(
            "crop size {size} does not fit frames of {}x{}",
            first.height, first.width
        )));
    }
    let window = CropWindow {
        row: rng.random_range(0..=first.height - size),
        col: rng.random_range(0..=first.width - size),
        size,
    };
    Ok(Clip {
        frames: clip.frames.iter().map(|f| crop_frame(f, window)).collect(),
        start: clip.start,
        padded: clip.padded,
        crop: Some(window),
    })
}

/// Mean over frames of every pixel-channel, flattened row-major.
pub fn temporal_pool<T: Scalar>(clip: &Clip<T>) -> Vec<T> {
    let Some(first) = clip.frames.first() else {
        return Vec::new();
    };
    let mut acc = vec![T::zero(); first.values.len()];
    for f in &clip.frames {
        for (a, &v) in acc.iter_mut().zip(&f.values) {
            *a += v;
        }
    }
    let n = T::from_count(clip.frames.len());
    for a in &mut acc {
        *a /= n;
    }
    acc
}

/// Clip length, resize width and crop size of the preprocessing pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub clip_len: usize,
    pub resize_width: usize,
    pub crop_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            clip_len: 16,
            resize_width: 40,
            crop_size: 28,
        }
    }
}

impl PreprocessConfig {
    /// Full-resolution pipeline: 16-frame clips, width 256, 224×224 crops.
    /// Needs source frames at least as tall as wide.
    pub fn full_scale() -> Self {
        Self {
            clip_len: 16,
            resize_width: 256,
            crop_size: 224,
        }
    }

    /// Width of the pooled feature vector for frames of the given shape.
    pub fn feature_dim(&self, channels: usize) -> usize {
        self.crop_size * self.crop_size * channels
    }

    pub fn validate(&self, frame_height: usize, frame_width: usize) -> Result<()> {
        if self.clip_len == 0 || self.resize_width == 0 || self.crop_size == 0 || frame_width == 0 {
            return Err(Error::Config(format!("invalid preprocessing {self:?}")));
        }
        let resized_h = ((2 * frame_height * self.resize_width + frame_width) / (2 * frame_width)).max(1);
        if self.crop_size > resized_h.min(self.resize_width) {
            return Err(Error::Config(format!(
                "crop {} does not fit {frame_height}x{frame_width} frames resized to {resized_h}x{}",
                self.crop_size, self.resize_width
            )));
        }
        Ok(())
    }
}

/// Sample → resize → crop → pool.
pub fn preprocess_sequence<T: Scalar, R: Rng + ?Sized, C: Rng + ?Sized>(
    seq: &FrameSequence<T>,
    config: &PreprocessConfig,
    clip_rng: &mut R,
    crop_rng: &mut C,
) -> Result<Vec<T>> {
    let clip = sample_clip(seq, config.clip_len, clip_rng)?.resized(config.resize_width)?;
    let clip = random_crop_clip(&clip, config.crop_size, crop_rng)?;
    Ok(temporal_pool(&clip))
}

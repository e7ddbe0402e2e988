//! Synthetic long-tailed two-modality data.
//!
//! Each class owns a latent mean on a hypersphere. A sample draws a latent
//! point around its class mean (tail classes are noisier), moves it along a
//! smooth trajectory over time, and renders every time step into a frame
//! through a fixed per-modality bank of low-frequency spatial patterns. The
//! depth-like latent is a fixed rotation of a partially independent copy of
//! the rgb-like latent.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::preprocess::{preprocess_sequence, Frame, FrameSequence, PreprocessConfig};
use super::{Dataset, Modality, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::loss::Label;
use crate::rng::{substream, RunRng, Stream};
use crate::scalar::Scalar;

/// Train / val / test shares in percent.
pub const SPLIT_PERCENT: [u64; 3] = [55, 10, 35];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_classes: usize,
    pub num_samples: usize,
    /// Class sizes are proportional to `rank^-zipf_exponent`.
    pub zipf_exponent: f64,
    pub frame_height: usize,
    pub frame_width: usize,
    pub channels: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub latent_dim: usize,
    /// Radius of the class-mean hypersphere.
    pub class_separation: f64,
    /// Latent spread of the head class.
    pub latent_noise: f64,
    /// Tail class spread is `latent_noise · (1 + difficulty_spread)`.
    pub difficulty_spread: f64,
    /// Share of each class drawn around a second, independent class mean
    /// (a rarer appearance of the same class).
    pub secondary_fraction: f64,
    /// Correlation between the per-sample latent noise of the two modalities.
    pub modality_correlation: f64,
    pub pixel_noise: f64,
    /// Amplitude of the latent trajectory over time.
    pub motion: f64,
    pub preprocess: PreprocessConfig,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            num_samples: 2000,
            zipf_exponent: 1.5,
            frame_height: 48,
            frame_width: 64,
            channels: 3,
            min_frames: 8,
            max_frames: 24,
            latent_dim: 8,
            class_separation: 1.0,
            latent_noise: 0.45,
            difficulty_spread: 1.0,
            secondary_fraction: 0.0,
            modality_correlation: 0.5,
            pixel_noise: 0.5,
            motion: 0.3,
            preprocess: PreprocessConfig::default(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.num_samples < self.num_classes {
            return fail(format!(
                "{} samples cannot cover {} classes",
                self.num_samples, self.num_classes
            ));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return fail(format!("zipf exponent must be >= 0, got {}", self.zipf_exponent));
        }
        if !(0.0..=1.0).contains(&self.modality_correlation) {
            return fail(format!(
                "modality correlation must lie in [0, 1], got {}",
                self.modality_correlation
            ));
        }
        if !(0.0..=1.0).contains(&self.secondary_fraction) {
            return fail(format!(
                "secondary fraction must lie in [0, 1], got {}",
                self.secondary_fraction
            ));
        }
        if self.frame_height == 0 || self.frame_width == 0 || self.channels == 0 || self.latent_dim == 0 {
            return fail("frame and latent dimensions must be positive".into());
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return fail(format!("invalid frame count range {}..={}", self.min_frames, self.max_frames));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("latent_noise", self.latent_noise),
            ("difficulty_spread", self.difficulty_spread),
            ("pixel_noise", self.pixel_noise),
            ("motion", self.motion),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        self.preprocess.validate(self.frame_height, self.frame_width)
    }

    pub fn feature_dim(&self) -> usize {
        self.preprocess.feature_dim(self.channels)
    }
}

/// Allocates `total` units proportionally to `weights` by largest remainder;
/// ties go to the lower index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Class sizes for `rank^-s` frequencies, every class holding at least one sample.
/// Result is non-increasing in class index.
pub fn zipf_class_sizes(num_classes: usize, num_samples: usize, exponent: f64) -> Result<Vec<usize>> {
    if num_classes < 2 || num_samples < num_classes {
        return Err(Error::Config(format!(
            "cannot spread {num_samples} samples over {num_classes} classes"
        )));
    }
    if !(exponent >= 0.0 && exponent.is_finite()) {
        return Err(Error::Config(format!("zipf exponent must be >= 0, got {exponent}")));
    }
    let weights: Vec<f64> = (1..=num_classes).map(|r| (r as f64).powf(-exponent)).collect();
    let mut sizes = largest_remainder(num_samples, &weights);
    while let Some(empty) = sizes.iter().position(|&n| n == 0) {
        let max = *sizes.iter().max().expect("non-empty");
        let donor = sizes.iter().rposition(|&n| n == max).expect("max present");
        sizes[donor] -= 1;
        sizes[empty] += 1;
    }
    Ok(sizes)
}

/// Per-class train / val / test counts, exact integer largest remainder.
pub fn split_counts(n: usize) -> [usize; 3] {
    let n = n as u64;
    let mut counts = SPLIT_PERCENT.map(|p| n * p / 100);
    let rems = SPLIT_PERCENT.map(|p| n * p % 100);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<u64>();
    for &i in order.iter().take(short as usize) {
        counts[i] += 1;
    }
    counts.map(|c| c as usize)
}

fn normal_vec<T: Scalar>(rng: &mut RunRng, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            T::lit(v)
        })
        .collect()
}

fn normalized<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::zero() {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Fixed structure shared by all samples of one generated dataset.
#[derive(Clone, Debug)]
pub struct SyntheticWorld<T> {
    config: GeneratorConfig,
    class_sizes: Vec<usize>,
    class_means: Vec<Vec<T>>,
    secondary_means: Vec<Vec<T>>,
    /// Row-major `latent_dim × latent_dim` orthogonal matrix.
    rotation: Vec<T>,
    /// Per modality, `latent_dim` spatial patterns of `H·W·C` values.
    bases: [Vec<Vec<T>>; 2],
}

impl<T: Scalar> SyntheticWorld<T> {
    pub fn new(config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let l = config.latent_dim;
        let seed = config.seed;
        let class_sizes = zipf_class_sizes(config.num_classes, config.num_samples, config.zipf_exponent)?;

        let mut rng = substream(seed, Stream::ClassMeans, 0);
        let radius = T::lit(config.class_separation);
        let class_means = (0..config.num_classes)
            .map(|_| normalized(normal_vec::<T>(&mut rng, l)).into_iter().map(|x| x * radius).collect())
            .collect();
        let mut rng = substream(seed, Stream::ClassMeans, 1);
        let secondary_means = (0..config.num_classes)
            .map(|_| normalized(normal_vec::<T>(&mut rng, l)).into_iter().map(|x| x * radius).collect())
            .collect();

        // Gram-Schmidt on a Gaussian matrix
        let mut rng = substream(seed, Stream::Rotation, 0);
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(l);
        while rows.len() < l {
            let mut v = normal_vec::<T>(&mut rng, l);
            for r in &rows {
                let proj: T = v.iter().zip(r).map(|(&a, &b)| a * b).sum();
                for (x, &y) in v.iter_mut().zip(r) {
                    *x -= proj * y;
                }
            }
            let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > T::lit(1e-6) {
                rows.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let rotation = rows.concat();

        let bases = Modality::ALL.map(|m| Self::pattern_bank(config, &mut substream(seed, Stream::Basis, m.index())));
        Ok(Self {
            config: config.clone(),
            class_sizes,
            class_means,
            secondary_means,
            rotation,
            bases,
        })
    }

    fn pattern_bank(config: &GeneratorConfig, rng: &mut RunRng) -> Vec<Vec<T>> {
        let (h, w, c) = (config.frame_height, config.frame_width, config.channels);
        let tau = 2.0 * std::f64::consts::PI;
        (0..config.latent_dim)
            .map(|_| {
                let fh = rng.random_range(0..=2u32) as f64;
                let mut fw = rng.random_range(0..=2u32) as f64;
                if fh == 0.0 && fw == 0.0 {
                    fw = 1.0;
                }
                let phase = rng.random_range(0.0..tau);
                let gains: Vec<f64> = (0..c)
                    .map(|_| {
                        let g: f64 = rng.random_range(0.5..1.5);
                        if rng.random_bool(0.5) {
                            g
                        } else {
                            -g
                        }
                    })
                    .collect();
                let mut pattern = Vec::with_capacity(h * w * c);
                for r in 0..h {
                    for col in 0..w {
                        let wave = (tau * (fh * r as f64 / h as f64 + fw * col as f64 / w as f64) + phase).cos();
                        pattern.extend(gains.iter().map(|g| T::lit(g * wave)));
                    }
                }
                pattern
            })
            .collect()
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }

    /// Class of the `index`-th sample; samples are numbered class by class.
    pub fn class_of(&self, index: usize) -> Option<usize> {
        let mut end = 0;
        for (c, &n) in self.class_sizes.iter().enumerate() {
            end += n;
            if index < end {
                return Some(c);
            }
        }
        None
    }

    pub fn sample_id(index: usize) -> String {
        format!("s{index:05}")
    }

    fn rotate(&self, v: &[T]) -> Vec<T> {
        let l = v.len();
        (0..l)
            .map(|i| self.rotation[i * l..(i + 1) * l].iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    fn render(&self, modality: Modality, latent: &[T], direction: &[T], offsets: &[T], rng: &mut RunRng) -> Vec<Frame<T>> {
        let cfg = &self.config;
        let bank = &self.bases[modality.index() as usize];
        let pixel_noise = T::lit(cfg.pixel_noise);
        let size = cfg.frame_height * cfg.frame_width * cfg.channels;
        offsets
            .iter()
            .map(|&s| {
                let mut values = vec![T::zero(); size];
                for ((&z, &d), pattern) in latent.iter().zip(direction).zip(bank) {
                    let coef = z + s * d;
                    for (v, &p) in values.iter_mut().zip(pattern) {
                        *v += coef * p;
                    }
                }
                if cfg.pixel_noise > 0.0 {
                    for v in &mut values {
                        let n: f64 = StandardNormal.sample(rng);
                        *v += pixel_noise * T::lit(n);
                    }
                }
                Frame::new(cfg.frame_height, cfg.frame_width, cfg.channels, values).expect("configured frame shape")
            })
            .collect()
    }

    /// Renders the aligned rgb-like and depth-like sequences of one sample.
    pub fn render_pair(&self, index: usize) -> Result<(FrameSequence<T>, FrameSequence<T>)> {
        let class = self
            .class_of(index)
            .ok_or_else(|| Error::Data(format!("sample index {index} beyond {} samples", self.config.num_samples)))?;
        let cfg = &self.config;
        let l = cfg.latent_dim;
        let mut rng = substream(cfg.seed, Stream::Sample, index as u64);
        let len = rng.random_range(cfg.min_frames..=cfg.max_frames);
        let shared = normal_vec::<T>(&mut rng, l);
        let own = normal_vec::<T>(&mut rng, l);
        let direction = normalized(normal_vec::<T>(&mut rng, l));
        let phase: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let cycles: f64 = rng.random_range(0.5..1.5);

        let rank = class as f64 / (cfg.num_classes - 1) as f64;
        let sigma = T::lit(cfg.latent_noise * (1.0 + cfg.difficulty_spread * rank));
        let rho = T::lit(cfg.modality_correlation);
        let rho_c = T::lit((1.0 - cfg.modality_correlation * cfg.modality_correlation).sqrt());
        let secondary = cfg.secondary_fraction > 0.0 && rng.random_bool(cfg.secondary_fraction);
        let mean = if secondary {
            &self.secondary_means[class]
        } else {
            &self.class_means[class]
        };
        let rgb_latent: Vec<T> = mean.iter().zip(&shared).map(|(&m, &e)| m + sigma * e).collect();
        let depth_pre: Vec<T> = mean
            .iter()
            .zip(shared.iter().zip(&own))
            .map(|(&m, (&e, &o))| m + sigma * (rho * e + rho_c * o))
            .collect();
        let depth_latent = self.rotate(&depth_pre);
        let depth_direction = self.rotate(&direction);

        let offsets: Vec<T> = (0..len)
            .map(|t| {
                let angle = 2.0 * std::f64::consts::PI * cycles * t as f64 / len as f64 + phase;
                T::lit(cfg.motion * angle.sin())
            })
            .collect();
        let rgb_frames = self.render(Modality::Rgb, &rgb_latent, &direction, &offsets, &mut rng);
        let depth_frames = self.render(Modality::Depth, &depth_latent, &depth_direction, &offsets, &mut rng);
        let id = Self::sample_id(index);
        let label = Label(class);
        Ok((
            FrameSequence::new(id.clone(), Modality::Rgb, label, rgb_frames)?,
            FrameSequence::new(id, Modality::Depth, label, depth_frames)?,
        ))
    }

    /// Pooled features of both modalities. Both share the clip start and crop window.
    pub fn features(&self, index: usize) -> Result<(Vec<T>, Vec<T>)> {
        let (rgb, depth) = self.render_pair(index)?;
        let seed = self.config.seed;
        let clip_rng = substream(seed, Stream::Clip, index as u64);
        let crop_rng = substream(seed, Stream::Crop, index as u64);
        let pre = &self.config.preprocess;
        Ok((
            preprocess_sequence(&rgb, pre, &mut clip_rng.clone(), &mut crop_rng.clone())?,
            preprocess_sequence(&depth, pre, &mut clip_rng.clone(), &mut crop_rng.clone())?,
        ))
    }

    /// Stratified split assignment for every sample index.
    pub fn splits(&self) -> Vec<Split> {
        let mut out = vec![Split::Train; self.config.num_samples];
        let mut first = 0;
        for (c, &n) in self.class_sizes.iter().enumerate() {
            let mut members: Vec<usize> = (first..first + n).collect();
            rand::seq::SliceRandom::shuffle(members.as_mut_slice(), &mut substream(self.config.seed, Stream::Split, c as u64));
            let [train, val, _] = split_counts(n);
            for (pos, &i) in members.iter().enumerate() {
                out[i] = if pos < train {
                    Split::Train
                } else if pos < train + val {
                    Split::Val
                } else {
                    Split::Test
                };
            }
            first += n;
        }
        out
    }
}

/// Renders, preprocesses and pools every sample. Deterministic in `config.seed`.
pub fn generate_synthetic<T: Scalar>(config: &GeneratorConfig) -> Result<Dataset<T>> {
    let world = SyntheticWorld::<T>::new(config)?;
    let splits = world.splits();
    let records = (0..config.num_samples)
        .into_par_iter()
        .map(|i| {
            let (rgb, depth) = world.features(i)?;
            Ok(SampleRecord {
                id: SyntheticWorld::<T>::sample_id(i),
                label: Label(world.class_of(i).expect("index in range")),
                split: splits[i],
                rgb,
                depth,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(config.num_classes, config.feature_dim(), records)
}

/// Rendered sequence pair for sample `index`, as used by the benchmark.
pub fn render_sequence_pair<T: Scalar>(world: &SyntheticWorld<T>, index: usize) -> Result<(FrameSequence<T>, FrameSequence<T>)> {
    world.render_pair(index)
}

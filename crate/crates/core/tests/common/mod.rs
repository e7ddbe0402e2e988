//! Independent oracles and randomized checks shared by the integration tests
//! and the acceptance run. Each `check_*` returns a short summary on success
//! and a description of the first violation otherwise.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use std::path::Path;

use focal_anneal::data::{
    random_crop_clip, resize_keep_aspect, sample_clip, Frame, FrameSequence, GeneratorConfig, Modality,
    PreprocessConfig,
};
use focal_anneal::harness::{ExperimentConfig, ModelConfig, ScheduleConfig};
use focal_anneal::eval::{
    confusion, fuse_tables, late_fuse, per_class_prf, topk_accuracy, weighted_aggregate, PredictionRow,
    PredictionTable,
};
use focal_anneal::loss::{ce_loss, focal_loss, loss_grad_logits, softmax, Label, Objective, ProbVector};
use focal_anneal::model::{Dense, Example, PathwayModel};
use focal_anneal::schedule::{GammaMode, GammaSchedule};

pub type Check = Result<String, String>;

/// A dataset and run small enough to repeat several times per test.
pub fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        generator: GeneratorConfig {
            num_classes: 5,
            num_samples: 160,
            frame_height: 12,
            frame_width: 16,
            min_frames: 3,
            max_frames: 9,
            preprocess: PreprocessConfig {
                clip_len: 4,
                resize_width: 12,
                crop_size: 8,
            },
            seed: 5,
            ..Default::default()
        },
        model: ModelConfig {
            hidden: vec![16],
            freeze_encoder: false,
        },
        epochs: 4,
        schedule: ScheduleConfig {
            total_epochs: 4,
            ..Default::default()
        },
        batch_size: 16,
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A random point of the simplex: softmax of scaled Gaussian logits, so both
/// flat and sharply peaked rows occur.
pub fn random_probs(rng: &mut ChaCha8Rng, k: usize) -> ProbVector<f64> {
    let scale = rng.random_range(0.1..6.0);
    let logits: Vec<f64> = (0..k).map(|_| scale * normal(rng)).collect();
    ProbVector::new(softmax(&logits)).expect("softmax lies on the simplex")
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Fourth-order central difference of `f` at `x` along one coordinate.
pub fn central_diff(f: &mut dyn FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

pub fn check_ce_equivalence(cases: usize) -> Check {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let k = r.random_range(2..=12);
        let p = random_probs(&mut r, k);
        let y = Label(r.random_range(0..k));
        let diff = (focal_loss(&p, y, 0.0) - ce_loss(&p, y)).abs();
        worst = worst.max(diff);
        if diff > 1e-12 {
            return Err(format!("case {case}: |focal(γ=0) - ce| = {diff:e}"));
        }
    }
    Ok(format!("{cases} cases, max diff {worst:e}"))
}

pub fn check_schedules(cases: usize) -> Check {
    let s = GammaSchedule::new(GammaMode::ExpDecay, 2.0, 0.1, 20).map_err(|e| e.to_string())?;
    // 2 · 0.05^0.5 = 2 · sqrt(1/20) = sqrt(1/5)
    let mid = s.gamma_at(10).map_err(|e| e.to_string())?;
    let want = (0.2f64).sqrt();
    if (mid - want).abs() > 1e-9 || (mid - 0.4472135955).abs() > 1e-9 {
        return Err(format!("exp_decay midpoint {mid}, expected {want}"));
    }
    let mut r = rng(12);
    for case in 0..cases {
        let mode = [
            GammaMode::LinearDecay,
            GammaMode::LinearGrowth,
            GammaMode::ExpDecay,
            GammaMode::ExpGrowth,
        ][case % 4];
        let a: f64 = r.random_range(0.01..5.0);
        let b: f64 = r.random_range(0.01..5.0);
        let (lo, hi) = (a.min(b), a.max(b));
        let (init, fin) = if mode.is_growth() { (lo, hi) } else { (hi, lo) };
        let z_max = r.random_range(1..=60);
        let s = GammaSchedule::new(mode, init, fin, z_max).map_err(|e| e.to_string())?;
        let g: Vec<f64> = (0..=z_max).map(|z| s.gamma_at(z).expect("z within horizon")).collect();
        if (g[0] - init).abs() > 1e-12 || (g[z_max] - fin).abs() > 1e-12 {
            return Err(format!("{mode:?} {init}->{fin}: endpoints {} {}", g[0], g[z_max]));
        }
        for w in g.windows(2) {
            let ok = if mode.is_growth() { w[1] >= w[0] } else { w[1] <= w[0] };
            if !ok {
                return Err(format!("{mode:?} {init}->{fin} over {z_max}: not monotone at {w:?}"));
            }
        }
        if g.iter().any(|&v| v < lo || v > hi) {
            return Err(format!("{mode:?} {init}->{fin}: value outside [{lo}, {hi}]"));
        }
        if s.gamma_at(z_max + 1).is_ok() {
            return Err("gamma_at past the horizon did not fail".into());
        }
    }
    Ok(format!("{cases} random schedules, midpoint {mid:.10}"))
}

/// Analytic logit gradient against finite differences of the loss value.
pub fn check_logit_gradients(cases: usize, tol: f64) -> Check {
    let mut r = rng(13);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let k = r.random_range(2..=10);
        let scale = r.random_range(0.2..3.0);
        let logits: Vec<f64> = (0..k).map(|_| scale * normal(&mut r)).collect();
        let y = Label(r.random_range(0..k));
        let gamma = if case % 5 == 0 { 0.0 } else { r.random_range(0.0..4.0) };
        let grad = loss_grad_logits(&logits, y, gamma);
        for j in 0..k {
            let mut f = |v: f64| {
                let mut z = logits.clone();
                z[j] = v;
                let p = ProbVector::new(softmax(&z)).expect("simplex");
                focal_loss(&p, y, gamma)
            };
            let fd = central_diff(&mut f, logits[j], 1e-3);
            let e = rel_err(grad[j], fd, 1e-6);
            worst = worst.max(e);
            if e > tol {
                return Err(format!(
                    "case {case} (K={k}, γ={gamma}): d/dz{j} analytic {} vs fd {fd}, rel err {e:e}",
                    grad[j]
                ));
            }
        }
    }
    Ok(format!("{cases} cases, worst rel err {worst:e}"))
}

fn mean_loss(model: &PathwayModel<f64>, batch: &[Example<'_, f64>], objective: &Objective<f64>) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|ex| objective.evaluate(&model.logits(ex.features).expect("width"), ex.label).loss)
        .sum();
    total / batch.len() as f64
}

fn layer_mut(model: &mut PathwayModel<f64>, l: usize) -> &mut Dense<f64> {
    let n = model.encoder().len();
    if l < n {
        &mut model.encoder_mut()[l]
    } else {
        model.head_mut()
    }
}

/// Full-model backward against finite differences of the mean batch loss,
/// over every weight and bias.
pub fn check_model_gradients(cases: usize, tol: f64) -> Check {
    let mut r = rng(14);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let d_in = r.random_range(1..=6);
        let depth = r.random_range(0..=2);
        let mut dims = vec![d_in];
        dims.extend((0..depth).map(|_| r.random_range(1..=5)));
        let k = r.random_range(2..=5);
        let mut model = PathwayModel::<f64>::init(&dims, k, case as u64).map_err(|e| e.to_string())?;
        // non-zero biases so every parameter matters
        for l in 0..=depth {
            for b in &mut layer_mut(&mut model, l).biases {
                *b = 0.3 * normal(&mut r);
            }
        }
        let n = r.random_range(1..=4);
        let feats: Vec<Vec<f64>> = (0..n).map(|_| (0..d_in).map(|_| normal(&mut r)).collect()).collect();
        let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let batch: Vec<Example<'_, f64>> = (0..n)
            .map(|i| Example {
                id: &ids[i],
                label: Label(r.random_range(0..k)),
                features: &feats[i],
            })
            .collect();
        let objective = match case % 3 {
            0 => Objective::CrossEntropy,
            1 => Objective::Focal {
                gamma: r.random_range(0.0..3.0),
            },
            _ => Objective::FocalAllClasses {
                gamma: r.random_range(0.0..3.0),
            },
        };
        let analytic = model.backward(&batch, &objective).map_err(|e| e.to_string())?.grads;
        for l in 0..=depth {
            let g = if l < depth { &analytic.encoder[l] } else { &analytic.head };
            let n_w = g.weights.len();
            for idx in 0..n_w + g.biases.len() {
                let want = if idx < n_w { g.weights[idx] } else { g.biases[idx - n_w] };
                let base = {
                    let layer = layer_mut(&mut model, l);
                    if idx < n_w {
                        layer.weights[idx]
                    } else {
                        layer.biases[idx - n_w]
                    }
                };
                let mut f = |v: f64| {
                    let mut m = model.clone();
                    let layer = layer_mut(&mut m, l);
                    if idx < n_w {
                        layer.weights[idx] = v;
                    } else {
                        layer.biases[idx - n_w] = v;
                    }
                    mean_loss(&m, &batch, &objective)
                };
                let fd = central_diff(&mut f, base, 1e-3);
                let e = rel_err(want, fd, 1e-6);
                worst = worst.max(e);
                if e > tol {
                    return Err(format!(
                        "case {case} dims {dims:?} K={k} {objective:?}: layer {l} param {idx} analytic {want} vs fd {fd} (rel {e:e})"
                    ));
                }
            }
        }
    }
    Ok(format!("{cases} cases, worst rel err {worst:e}"))
}

pub fn random_table(rng: &mut ChaCha8Rng, n: usize, k: usize, prefix: &str) -> PredictionTable<f64> {
    let rows = (0..n)
        .map(|i| {
            // coarse probabilities so argmax ties actually occur
            let probs = if rng.random_bool(0.2) {
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0..3) as f64).collect();
                let total: f64 = raw.iter().sum();
                if total == 0.0 {
                    ProbVector::uniform(k).expect("k >= 2")
                } else {
                    ProbVector::new(raw.iter().map(|v| v / total).collect()).expect("normalized")
                }
            } else {
                random_probs(rng, k)
            };
            PredictionRow {
                id: format!("{prefix}{i:04}"),
                label: Label(rng.random_range(0..k)),
                probs,
            }
        })
        .collect();
    PredictionTable::new(k, rows).expect("valid table")
}

/// Predicted class by a plain scan: first index holding the maximum.
fn oracle_argmax(p: &[f64]) -> usize {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    p.iter().position(|&v| v == max).expect("non-empty")
}

pub struct OracleMetrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub weighted: [f64; 3],
    pub top1: f64,
}

/// Brute-force per-class and support-weighted metrics by counting rows.
pub fn oracle_metrics(table: &PredictionTable<f64>) -> OracleMetrics {
    let k = table.num_classes();
    let preds: Vec<(usize, usize)> = table
        .rows()
        .iter()
        .map(|r| (r.label.index(), oracle_argmax(r.probs.as_slice())))
        .collect();
    let n = preds.len();
    let mut out = OracleMetrics {
        precision: vec![],
        recall: vec![],
        f1: vec![],
        weighted: [0.0; 3],
        top1: 100.0 * preds.iter().filter(|(y, p)| y == p).count() as f64 / n as f64,
    };
    for c in 0..k {
        let tp = preds.iter().filter(|&&(y, p)| y == c && p == c).count();
        let predicted = preds.iter().filter(|&&(_, p)| p == c).count();
        let support = preds.iter().filter(|&&(y, _)| y == c).count();
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let w = support as f64 / n as f64;
        out.weighted[0] += w * precision;
        out.weighted[1] += w * recall;
        out.weighted[2] += w * f1;
        out.precision.push(precision);
        out.recall.push(recall);
        out.f1.push(f1);
    }
    out
}

pub fn check_metrics_oracle(tables: usize) -> Check {
    let mut r = rng(15);
    let mut worst_identity = 0.0f64;
    for t in 0..tables {
        let k = r.random_range(2..=9);
        let n = r.random_range(1..=80);
        let table = random_table(&mut r, n, k, "r");
        let oracle = oracle_metrics(&table);
        let per_class = per_class_prf(&confusion(&table));
        for (c, m) in per_class.iter().enumerate() {
            if m.precision != oracle.precision[c] || m.recall != oracle.recall[c] || m.f1 != oracle.f1[c] {
                return Err(format!(
                    "table {t} class {c}: got P/R/F1 {}/{}/{}, oracle {}/{}/{}",
                    m.precision, m.recall, m.f1, oracle.precision[c], oracle.recall[c], oracle.f1[c]
                ));
            }
        }
        let w = weighted_aggregate(&per_class).map_err(|e| e.to_string())?;
        if [w.precision, w.recall, w.f1] != oracle.weighted {
            return Err(format!("table {t}: weighted {w:?} vs oracle {:?}", oracle.weighted));
        }
        let top1 = topk_accuracy(&table, 1);
        if top1 != oracle.top1 {
            return Err(format!("table {t}: top-1 {top1} vs oracle {}", oracle.top1));
        }
        let identity = (w.recall - top1 / 100.0).abs();
        worst_identity = worst_identity.max(identity);
        if identity > 1e-9 {
            return Err(format!("table {t}: weighted recall {} vs top-1/100 {}", w.recall, top1 / 100.0));
        }
    }
    Ok(format!("{tables} tables, max |recall_w - top1/100| = {worst_identity:e}"))
}

/// Two correct predictions of class 0, one class-1 sample predicted as 0,
/// one more class-0 sample predicted as 0.
pub fn worked_metric_table() -> PredictionTable<f64> {
    let row = |id: &str, y: usize, p: [f64; 2]| PredictionRow {
        id: id.into(),
        label: Label(y),
        probs: ProbVector::new(p.to_vec()).expect("valid"),
    };
    PredictionTable::new(
        2,
        vec![
            row("a", 0, [0.9, 0.1]),
            row("b", 0, [0.8, 0.2]),
            row("c", 0, [0.6, 0.4]),
            row("d", 1, [0.7, 0.3]),
        ],
    )
    .expect("valid")
}

pub fn check_worked_fixture() -> Check {
    let table = worked_metric_table();
    let per_class = per_class_prf(&confusion(&table));
    let w = weighted_aggregate(&per_class).map_err(|e| e.to_string())?;
    // class 0: tp 3, predicted 4, support 3 -> P 3/4, R 1, F1 = 2(3/4)/(7/4) = 6/7
    // class 1: nothing predicted -> all 0; weighted F1 = (3/4)(6/7) = 9/14
    let checks = [
        ("precision[0]", per_class[0].precision, 0.75),
        ("precision[1]", per_class[1].precision, 0.0),
        ("recall[0]", per_class[0].recall, 1.0),
        ("recall[1]", per_class[1].recall, 0.0),
        ("f1[0]", per_class[0].f1, 6.0 / 7.0),
        ("f1[1]", per_class[1].f1, 0.0),
        ("weighted f1", w.f1, 9.0 / 14.0),
        ("top-1", topk_accuracy(&table, 1), 75.0),
    ];
    for (name, got, want) in checks {
        if (got - want).abs() > 1e-9 {
            return Err(format!("{name} = {got}, expected {want}"));
        }
    }
    if (per_class[0].f1 - 0.857142857).abs() > 1e-9 || (w.f1 - 0.642857143).abs() > 1e-9 {
        return Err("published rounding of F1 values not met".into());
    }
    Ok(format!("F1 [{:.9}, 0], weighted F1 {:.9}, top-1 75.0", per_class[0].f1, w.f1))
}

pub fn check_fusion(pairs: usize) -> Check {
    let mut r = rng(16);
    for i in 0..pairs {
        let k = r.random_range(2..=12);
        let a = random_probs(&mut r, k);
        let b = random_probs(&mut r, k);
        let ab = late_fuse(&a, &b).map_err(|e| format!("pair {i}: {e}"))?;
        let ba = late_fuse(&b, &a).map_err(|e| format!("pair {i}: {e}"))?;
        let sum: f64 = ab.as_slice().iter().sum();
        if (sum - 1.0).abs() > 1e-12 || ab.as_slice().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(format!("pair {i}: fused row leaves the simplex (sum {sum})"));
        }
        if ab.as_slice().iter().zip(ba.as_slice()).any(|(x, y)| (x - y).abs() > 1e-12) {
            return Err(format!("pair {i}: fusion is not symmetric"));
        }
        let aa = late_fuse(&a, &a).map_err(|e| e.to_string())?;
        if aa.as_slice().iter().zip(a.as_slice()).any(|(x, y)| (x - y).abs() > 1e-12) {
            return Err(format!("pair {i}: fuse(a, a) differs from a"));
        }
        for (j, ((&f, &x), &y)) in ab.as_slice().iter().zip(a.as_slice()).zip(b.as_slice()).enumerate() {
            if (f - 0.5 * (x + y)).abs() > 1e-12 {
                return Err(format!("pair {i} entry {j}: {f} is not the mean of {x} and {y}"));
            }
        }
    }
    // table level: ids line up regardless of row order
    let a = random_table(&mut r, 30, 4, "s");
    let mut rows = a.rows().to_vec();
    rows.reverse();
    let shuffled = PredictionTable::new(4, rows).map_err(|e| e.to_string())?;
    let fused = fuse_tables(&a, &shuffled).map_err(|e| e.to_string())?;
    for row in fused.rows() {
        let orig = a.rows().iter().find(|x| x.id == row.id).expect("same ids");
        if row.probs.as_slice().iter().zip(orig.probs.as_slice()).any(|(x, y)| (x - y).abs() > 1e-12) {
            return Err(format!("table fusion misaligned row {}", row.id));
        }
    }
    Ok(format!("{pairs} pairs plus a permuted-table fusion"))
}

fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Frame<f64> {
    let values = (0..h * w * c).map(|_| normal(rng)).collect();
    Frame::new(h, w, c, values).expect("shape")
}

/// Clip sampling, resize and crop rules over randomized sequences.
pub fn check_preprocessing(sequences: usize) -> Check {
    let mut r = rng(17);
    for s in 0..sequences {
        let len = r.random_range(1..=30);
        let (h, w, c) = (r.random_range(2..=9), r.random_range(2..=9), r.random_range(1..=3));
        let frames: Vec<Frame<f64>> = (0..len).map(|_| random_frame(&mut r, h, w, c)).collect();
        let seq = FrameSequence::new(format!("q{s}"), Modality::Rgb, Label(0), frames).map_err(|e| e.to_string())?;
        let t = r.random_range(1..=24);
        let clip = sample_clip(&seq, t, &mut r).map_err(|e| e.to_string())?;
        if clip.len() != t {
            return Err(format!("seq {s}: clip has {} frames, wanted {t}", clip.len()));
        }
        if len >= t {
            if clip.padded != 0 || clip.start + t > len {
                return Err(format!("seq {s}: start {} out of range for len {len}, T {t}", clip.start));
            }
            for (i, f) in clip.frames().iter().enumerate() {
                if f != &seq.frames()[clip.start + i] {
                    return Err(format!("seq {s}: clip frame {i} is not consecutive"));
                }
            }
        } else {
            if clip.start != 0 || clip.padded != t - len {
                return Err(format!("seq {s}: short sequence start {} padded {}", clip.start, clip.padded));
            }
            for (i, f) in clip.frames().iter().enumerate() {
                let want = &seq.frames()[i.min(len - 1)];
                if f != want {
                    return Err(format!("seq {s}: padded frame {i} is not the last frame"));
                }
            }
        }

        let target = r.random_range(2..=12);
        let resized = clip.clone().resized(target).map_err(|e| e.to_string())?;
        let want_h = ((h as f64 * target as f64 / w as f64) + 0.5).floor().max(1.0) as usize;
        for (src, f) in clip.frames().iter().zip(resized.frames()) {
            if f.width() != target || f.height() != want_h || f.channels() != c {
                return Err(format!("seq {s}: resized to {}x{}, wanted {want_h}x{target}", f.height(), f.width()));
            }
            let lo = src.values().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = src.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if f.values().iter().any(|&v| v < lo || v > hi) {
                return Err(format!("seq {s}: bilinear resize left the source value range"));
            }
        }
        let direct = resize_keep_aspect(&clip.frames()[0], target).map_err(|e| e.to_string())?;
        if direct != resized.frames()[0] {
            return Err(format!("seq {s}: clip resize differs from frame resize"));
        }

        let side = want_h.min(target);
        let size = r.random_range(1..=side);
        let cropped = random_crop_clip(&resized, size, &mut r).map_err(|e| e.to_string())?;
        let win = cropped.crop.ok_or("crop window missing")?;
        if win.row + size > want_h || win.col + size > target || win.size != size {
            return Err(format!("seq {s}: crop window {win:?} outside {want_h}x{target}"));
        }
        for (src, f) in resized.frames().iter().zip(cropped.frames()) {
            if f.height() != size || f.width() != size {
                return Err(format!("seq {s}: cropped frame is {}x{}", f.height(), f.width()));
            }
            for rr in 0..size {
                for cc in 0..size {
                    for ch in 0..c {
                        if f.get(rr, cc, ch) != src.get(win.row + rr, win.col + cc, ch) {
                            return Err(format!("seq {s}: frames cropped at different windows"));
                        }
                    }
                }
            }
        }
        if random_crop_clip(&resized, side + 1, &mut r).is_ok() {
            return Err(format!("seq {s}: oversized crop accepted"));
        }
    }
    Ok(format!("{sequences} sequences; {}", check_clip_start_uniformity()?))
}

/// Pearson chi-square of clip start positions against the uniform law.
pub fn check_clip_start_uniformity() -> Check {
    let (len, t, draws) = (20usize, 8usize, 13_000usize);
    let positions = len - t + 1;
    let frames = vec![Frame::filled(1, 1, 1, 0.0f64).expect("shape"); len];
    let seq = FrameSequence::new("u", Modality::Rgb, Label(0), frames).expect("valid");
    let mut counts = vec![0usize; positions];
    let mut r = rng(18);
    for _ in 0..draws {
        counts[sample_clip(&seq, t, &mut r).expect("clip").start] += 1;
    }
    let expected = draws as f64 / positions as f64;
    let chi2: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    // upper 0.1% point of chi-square with 12 degrees of freedom
    let critical = 32.909;
    if chi2 > critical {
        return Err(format!("clip starts not uniform: chi2 = {chi2:.2} > {critical}"));
    }
    Ok(format!("clip-start chi2 {chi2:.2} (12 df)"))
}

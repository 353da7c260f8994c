//! The six image-degradation tasks, dataset synthesis and ingestion,
//! deterministic splits, and PSNR.

use crate::scalar::{lit, Scalar};
use crate::tensor::{Shape, TensorData};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RestorationTask {
    /// 2x2 box downsample, then nearest-neighbour upsample back.
    Superres2x,
    DenoiseUniform { bound: f64 },
    DenoiseGaussian { sigma: f64 },
    Deblur { sigma: f64, radius: usize },
    /// Keep a random fraction of pixels; input is masked image + mask.
    CompressiveSensing { keep_fraction: f64 },
    /// Zero pixels on the quincunx (odd x+y) half of the grid.
    Checkerboard,
}

impl RestorationTask {
    pub fn denoise_uniform() -> Self {
        RestorationTask::DenoiseUniform { bound: 0.5 }
    }
    pub fn denoise_gaussian() -> Self {
        RestorationTask::DenoiseGaussian { sigma: 0.2 }
    }
    pub fn deblur() -> Self {
        RestorationTask::Deblur {
            sigma: 2.0,
            radius: 3,
        }
    }
    pub fn compressive_sensing() -> Self {
        RestorationTask::CompressiveSensing {
            keep_fraction: 0.25,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "superres" => RestorationTask::Superres2x,
            "denoise-uniform" => Self::denoise_uniform(),
            "denoise-gaussian" => Self::denoise_gaussian(),
            "deblur" => Self::deblur(),
            "compressive-sensing" => Self::compressive_sensing(),
            "checkerboard" => RestorationTask::Checkerboard,
            _ => return None,
        })
    }

    /// Channels the network sees as input.
    pub fn input_channels(&self) -> usize {
        match self {
            RestorationTask::CompressiveSensing { .. } => 6,
            _ => 3,
        }
    }
}

/// PSNR = 10 log10(1 / MSE); infinite for an exact reconstruction.
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn mse_images<T: Scalar>(a: &TensorData<T>, b: &TensorData<T>) -> f64 {
    assert_eq!(a.shape, b.shape);
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum();
    sum / a.data.len() as f64
}

/// Normalized Gaussian blur kernel of side 2*radius+1.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let side = 2 * radius + 1;
    let mut k = vec![0.0; side * side];
    let mut sum = 0.0;
    for (i, item) in k.iter_mut().enumerate() {
        let dy = (i / side) as f64 - radius as f64;
        let dx = (i % side) as f64 - radius as f64;
        let v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        *item = v;
        sum += v;
    }
    for item in &mut k {
        *item /= sum;
    }
    k
}

fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = i;
    // reflect without repeating the border pixel; degenerate for len 1
    loop {
        if i < 0 {
            i = -i;
        } else if i >= len {
            i = 2 * len - 2 - i;
        } else {
            return i as usize;
        }
        if len == 1 {
            return 0;
        }
    }
}

/// Applies the task's degradation to one clean image (shape (1,3,h,w),
/// values in [0,1]). Deterministic given the rng state.
pub fn degrade<T: Scalar, R: Rng>(
    clean: &TensorData<T>,
    task: &RestorationTask,
    rng: &mut R,
) -> TensorData<T> {
    let s = clean.shape;
    match task {
        RestorationTask::Superres2x => {
            let dh = s.h / 2;
            let dw = s.w / 2;
            let mut out = TensorData::zeros(s);
            for n in 0..s.n {
                for c in 0..s.c {
                    for y in 0..dh {
                        for x in 0..dw {
                            let mut acc = T::zero();
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    acc += clean.at(n, c, y * 2 + dy, x * 2 + dx);
                                }
                            }
                            let avg = acc / lit(4.0);
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    *out.at_mut(n, c, y * 2 + dy, x * 2 + dx) = avg;
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        RestorationTask::DenoiseUniform { bound } => clean.map(|v| {
            let noise = rng.gen_range(-bound..=*bound);
            (v + lit(noise)).max(T::zero()).min(T::one())
        }),
        RestorationTask::DenoiseGaussian { sigma } => clean.map(|v| {
            // Box-Muller; one draw per element keeps determinism simple.
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            (v + lit(z * sigma)).max(T::zero()).min(T::one())
        }),
        RestorationTask::Deblur { sigma, radius } => {
            let kernel = gaussian_kernel(*sigma, *radius);
            let side = 2 * radius + 1;
            let mut out = TensorData::zeros(s);
            for n in 0..s.n {
                for c in 0..s.c {
                    for y in 0..s.h {
                        for x in 0..s.w {
                            let mut acc = 0.0f64;
                            for ky in 0..side {
                                for kx in 0..side {
                                    let iy = reflect(y as isize + ky as isize - *radius as isize, s.h);
                                    let ix = reflect(x as isize + kx as isize - *radius as isize, s.w);
                                    acc += kernel[ky * side + kx]
                                        * clean.at(n, c, iy, ix).to_f64_lossy();
                                }
                            }
                            *out.at_mut(n, c, y, x) = lit(acc);
                        }
                    }
                }
            }
            out
        }
        RestorationTask::CompressiveSensing { keep_fraction } => {
            let mut out = TensorData::zeros(Shape::new(s.n, 6, s.h, s.w));
            for n in 0..s.n {
                for y in 0..s.h {
                    for x in 0..s.w {
                        let keep = rng.gen_bool(*keep_fraction);
                        let m = if keep { T::one() } else { T::zero() };
                        for c in 0..3 {
                            *out.at_mut(n, c, y, x) = clean.at(n, c, y, x) * m;
                            *out.at_mut(n, c + 3, y, x) = m;
                        }
                    }
                }
            }
            out
        }
        RestorationTask::Checkerboard => {
            let mut out = clean.clone();
            for n in 0..s.n {
                for c in 0..s.c {
                    for y in 0..s.h {
                        for x in 0..s.w {
                            if (x + y) % 2 == 1 {
                                *out.at_mut(n, c, y, x) = T::zero();
                            }
                        }
                    }
                }
            }
            out
        }
    }
}

/// Degradation rng for one image, derived from a task seed and the
/// image's global index so corrupted inputs are stable across epochs.
pub fn degradation_rng(task_seed: u64, image_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(task_seed ^ (image_index as u64).wrapping_mul(0x9E3779B97F4A7C15))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Images (each (1,3,h,w), values in [0,1]) with sequential 0.6/0.2/0.2
/// splits.
#[derive(Clone, Debug)]
pub struct ImageDataset<T> {
    pub images: Vec<TensorData<T>>,
    pub source_names: Vec<String>,
}

impl<T: Scalar> ImageDataset<T> {
    fn boundaries(&self) -> (usize, usize) {
        let n = self.images.len();
        (n * 6 / 10, n * 8 / 10)
    }

    /// Global indices of one split.
    pub fn split_indices(&self, split: Split) -> std::ops::Range<usize> {
        let (t, v) = self.boundaries();
        match split {
            Split::Train => 0..t,
            Split::Validation => t..v,
            Split::Test => v..self.images.len(),
        }
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split_indices(split).len()
    }

    /// Manifest of source files and split boundaries.
    pub fn manifest(&self) -> String {
        let (t, v) = self.boundaries();
        serde_json::to_string_pretty(&serde_json::json!({
            "count": self.images.len(),
            "train_end": t,
            "validation_end": v,
            "files": self.source_names,
        }))
        .unwrap()
    }
}

/// Assembles a minibatch: (network input, clean target). Corruption is
/// deterministic per (task_seed, image index).
pub fn make_batch<T: Scalar>(
    dataset: &ImageDataset<T>,
    indices: &[usize],
    task: &RestorationTask,
    task_seed: u64,
) -> (TensorData<T>, TensorData<T>) {
    assert!(!indices.is_empty());
    let img_shape = dataset.images[indices[0]].shape;
    let in_c = task.input_channels();
    let mut input = TensorData::zeros(Shape::new(indices.len(), in_c, img_shape.h, img_shape.w));
    let mut target = TensorData::zeros(Shape::new(indices.len(), 3, img_shape.h, img_shape.w));
    for (b, &idx) in indices.iter().enumerate() {
        let clean = &dataset.images[idx];
        let mut rng = degradation_rng(task_seed, idx);
        let corrupted = degrade(clean, task, &mut rng);
        for c in 0..in_c {
            for y in 0..img_shape.h {
                for x in 0..img_shape.w {
                    *input.at_mut(b, c, y, x) = corrupted.at(0, c, y, x);
                }
            }
        }
        for c in 0..3 {
            for y in 0..img_shape.h {
                for x in 0..img_shape.w {
                    *target.at_mut(b, c, y, x) = clean.at(0, c, y, x);
                }
            }
        }
    }
    (input, target)
}

/// Mean MSE between corrupted inputs (first 3 channels) and clean images
/// over one split: the no-op reconstruction baseline.
pub fn corrupted_baseline_mse<T: Scalar>(
    dataset: &ImageDataset<T>,
    split: Split,
    task: &RestorationTask,
    task_seed: u64,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for idx in dataset.split_indices(split) {
        let clean = &dataset.images[idx];
        let mut rng = degradation_rng(task_seed, idx);
        let corrupted = degrade(clean, task, &mut rng);
        let s = clean.shape;
        let mut sum = 0.0;
        for c in 0..3 {
            for y in 0..s.h {
                for x in 0..s.w {
                    let d = corrupted.at(0, c, y, x).to_f64_lossy()
                        - clean.at(0, c, y, x).to_f64_lossy();
                    sum += d * d;
                }
            }
        }
        total += sum / (3 * s.h * s.w) as f64;
        count += 1;
    }
    total / count.max(1) as f64
}

// --- procedural dataset synthesis ---

/// Deterministic procedural RGB images: gradients, random ellipses and
/// rectangles, plus band-limited noise, clamped to [0,1].
pub fn synth_dataset<T: Scalar>(seed: u64, count: usize, size: usize) -> ImageDataset<T> {
    assert!(
        matches!(size, 8 | 16 | 32 | 64),
        "size must be one of 8, 16, 32, 64"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        images.push(synth_image(size, &mut rng));
    }
    ImageDataset {
        source_names: (0..count).map(|i| format!("synth-{seed}-{i}")).collect(),
        images,
    }
}

fn synth_image<T: Scalar, R: Rng>(size: usize, rng: &mut R) -> TensorData<T> {
    let mut img = vec![[0.0f64; 3]; size * size];
    // background gradient between two random colours
    let c0: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let c1: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    for y in 0..size {
        for x in 0..size {
            let t = ((x as f64 * dx + y as f64 * dy) / size as f64 + 1.0) / 2.0;
            let t = t.clamp(0.0, 1.0);
            for ch in 0..3 {
                img[y * size + x][ch] = c0[ch] * (1.0 - t) + c1[ch] * t;
            }
        }
    }
    // random ellipses and rectangles
    let shapes = rng.gen_range(2..6);
    for _ in 0..shapes {
        let color: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let cx = rng.gen_range(0.0..size as f64);
        let cy = rng.gen_range(0.0..size as f64);
        let rx = rng.gen_range(1.0..size as f64 / 2.0);
        let ry = rng.gen_range(1.0..size as f64 / 2.0);
        let is_ellipse = rng.gen_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let inside = if is_ellipse {
                    let ex = (x as f64 - cx) / rx;
                    let ey = (y as f64 - cy) / ry;
                    ex * ex + ey * ey <= 1.0
                } else {
                    (x as f64 - cx).abs() <= rx && (y as f64 - cy).abs() <= ry
                };
                if inside {
                    for ch in 0..3 {
                        img[y * size + x][ch] = 0.5 * img[y * size + x][ch] + 0.5 * color[ch];
                    }
                }
            }
        }
    }
    // band-limited noise: coarse grid, nearest-neighbour blown up
    let coarse = (size / 4).max(1);
    let amp = rng.gen_range(0.02..0.10);
    let grid: Vec<f64> = (0..coarse * coarse * 3)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    for y in 0..size {
        for x in 0..size {
            let gy = y * coarse / size;
            let gx = x * coarse / size;
            for ch in 0..3 {
                img[y * size + x][ch] += amp * grid[(gy * coarse + gx) * 3 + ch];
            }
        }
    }
    let shape = Shape::new(1, 3, size, size);
    let mut out = TensorData::zeros(shape);
    for y in 0..size {
        for x in 0..size {
            for ch in 0..3 {
                *out.at_mut(0, ch, y, x) = lit(img[y * size + x][ch].clamp(0.0, 1.0));
            }
        }
    }
    out
}

// --- PNG ingestion / output ---

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read directory {0}: {1}")]
    ReadDir(String, std::io::Error),
    #[error("no PNG files in {0}")]
    Empty(String),
    #[error("cannot decode {0}: {1}")]
    Decode(String, image::ImageError),
    #[error("cannot write {0}: {1}")]
    Write(String, image::ImageError),
}

/// Loads all PNGs in a folder in lexicographic order; images are
/// center-cropped to the smallest common size.
pub fn load_image_folder<T: Scalar>(path: &Path) -> Result<ImageDataset<T>, DatasetError> {
    let mut files: Vec<_> = std::fs::read_dir(path)
        .map_err(|e| DatasetError::ReadDir(path.display().to_string(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|x| x.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DatasetError::Empty(path.display().to_string()));
    }
    let mut raw = Vec::new();
    let mut min_h = usize::MAX;
    let mut min_w = usize::MAX;
    let mut names = Vec::new();
    for f in &files {
        let img = image::open(f)
            .map_err(|e| DatasetError::Decode(f.display().to_string(), e))?
            .to_rgb8();
        min_h = min_h.min(img.height() as usize);
        min_w = min_w.min(img.width() as usize);
        names.push(
            f.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        raw.push(img);
    }
    let images = raw
        .into_iter()
        .map(|img| {
            let (h, w) = (img.height() as usize, img.width() as usize);
            let oy = (h - min_h) / 2;
            let ox = (w - min_w) / 2;
            let mut t = TensorData::zeros(Shape::new(1, 3, min_h, min_w));
            for y in 0..min_h {
                for x in 0..min_w {
                    let px = img.get_pixel((x + ox) as u32, (y + oy) as u32);
                    for c in 0..3 {
                        *t.at_mut(0, c, y, x) = lit(px.0[c] as f64 / 255.0);
                    }
                }
            }
            t
        })
        .collect();
    Ok(ImageDataset {
        images,
        source_names: names,
    })
}

/// Writes the first 3 channels of a (1,c,h,w) tensor as an 8-bit RGB PNG.
pub fn save_png<T: Scalar>(img: &TensorData<T>, path: &Path) -> Result<(), DatasetError> {
    let s = img.shape;
    let mut buf = image::RgbImage::new(s.w as u32, s.h as u32);
    for y in 0..s.h {
        for x in 0..s.w {
            let px = [0, 1, 2].map(|c| {
                let v = img.at(0, c.min(s.c - 1), y, x).to_f64_lossy();
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            });
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path)
        .map_err(|e| DatasetError::Write(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn psnr_known_values() {
        assert_eq!(psnr(1.0), 0.0);
        assert!((psnr(0.01) - 20.0).abs() < 1e-12);
        assert_eq!(psnr(0.0), f64::INFINITY);
        assert_eq!(psnr(-1.0), f64::INFINITY);
    }

    #[test]
    fn splits_are_sequential_6_2_2() {
        let ds = synth_dataset::<f32>(0, 20, 8);
        assert_eq!(ds.split_indices(Split::Train), 0..12);
        assert_eq!(ds.split_indices(Split::Validation), 12..16);
        assert_eq!(ds.split_indices(Split::Test), 16..20);
        // uneven count floors via integer arithmetic
        let ds = synth_dataset::<f32>(0, 7, 8);
        assert_eq!(ds.split_indices(Split::Train), 0..4);
        assert_eq!(ds.split_indices(Split::Validation), 4..5);
        assert_eq!(ds.split_indices(Split::Test), 5..7);
    }

    #[test]
    fn synth_images_are_in_range_and_deterministic() {
        let a = synth_dataset::<f32>(7, 6, 16);
        let b = synth_dataset::<f32>(7, 6, 16);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.data, y.data);
            assert_eq!(x.shape, Shape::new(1, 3, 16, 16));
            assert!(x.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let c = synth_dataset::<f32>(8, 6, 16);
        assert_ne!(a.images[0].data, c.images[0].data);
    }

    #[test]
    fn degradation_is_deterministic_per_image_index() {
        let ds = synth_dataset::<f32>(1, 4, 16);
        let task = RestorationTask::denoise_gaussian();
        let (in1, tg1) = make_batch(&ds, &[0, 2], &task, 99);
        let (in2, tg2) = make_batch(&ds, &[0, 2], &task, 99);
        assert_eq!(in1.data, in2.data);
        assert_eq!(tg1.data, tg2.data);
        // different task seed, different corruption
        let (in3, _) = make_batch(&ds, &[0, 2], &task, 100);
        assert_ne!(in1.data, in3.data);
    }

    #[test]
    fn superres_degradation_box_averages_2x2_blocks() {
        let clean = TensorData::from_vec(
            Shape::new(1, 3, 2, 2),
            (0..12).map(|i| i as f32 / 12.0).collect(),
        );
        let mut rng = degradation_rng(0, 0);
        let d = degrade(&clean, &RestorationTask::Superres2x, &mut rng);
        for c in 0..3 {
            let avg: f32 = (0..4).map(|i| clean.data[c * 4 + i]).sum::<f32>() / 4.0;
            for i in 0..4 {
                assert!((d.data[c * 4 + i] - avg).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn checkerboard_zeroes_the_quincunx_half() {
        let clean = TensorData::<f32>::filled(Shape::new(1, 3, 4, 4), 0.7);
        let mut rng = degradation_rng(0, 0);
        let d = degrade(&clean, &RestorationTask::Checkerboard, &mut rng);
        for y in 0..4 {
            for x in 0..4 {
                let expect = if (x + y) % 2 == 1 { 0.0 } else { 0.7 };
                for c in 0..3 {
                    assert_eq!(d.at(0, c, y, x), expect);
                }
            }
        }
    }

    #[test]
    fn compressive_sensing_masks_and_reports_the_mask() {
        let ds = synth_dataset::<f32>(3, 4, 16);
        let task = RestorationTask::compressive_sensing();
        let mut rng = degradation_rng(5, 0);
        let d = degrade(&ds.images[0], &task, &mut rng);
        assert_eq!(d.shape, Shape::new(1, 6, 16, 16));
        let mut kept = 0usize;
        for y in 0..16 {
            for x in 0..16 {
                let m = d.at(0, 3, y, x);
                assert!(m == 0.0 || m == 1.0);
                // same mask on all three mask channels
                assert_eq!(d.at(0, 4, y, x), m);
                assert_eq!(d.at(0, 5, y, x), m);
                for c in 0..3 {
                    let expect = if m == 1.0 {
                        ds.images[0].at(0, c, y, x)
                    } else {
                        0.0
                    };
                    assert_eq!(d.at(0, c, y, x), expect);
                }
                kept += (m == 1.0) as usize;
            }
        }
        // roughly a quarter of 256 pixels kept
        assert!((30..=100).contains(&kept), "kept {kept}");
    }

    #[test]
    fn deblur_preserves_constant_images_and_total_mass() {
        let clean = TensorData::<f64>::filled(Shape::new(1, 3, 8, 8), 0.4);
        let mut rng = degradation_rng(0, 0);
        let task = RestorationTask::deblur();
        let d = degrade(&clean, &task, &mut rng);
        for &v in &d.data {
            assert!((v - 0.4).abs() < 1e-12);
        }
        let k = gaussian_kernel(2.0, 3);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k.len(), 49);
    }

    #[test]
    fn uniform_noise_stays_in_unit_range() {
        let ds = synth_dataset::<f32>(2, 2, 16);
        let task = RestorationTask::denoise_uniform();
        let mut rng = degradation_rng(1, 0);
        let d = degrade(&ds.images[0], &task, &mut rng);
        assert!(d.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // and the corruption actually changes the image
        assert_ne!(d.data, ds.images[0].data);
    }

    #[test]
    fn corrupted_baseline_matches_direct_mse() {
        let ds = synth_dataset::<f32>(4, 10, 16);
        let task = RestorationTask::Checkerboard;
        let base = corrupted_baseline_mse(&ds, Split::Test, &task, 7);
        let mut expect = 0.0;
        for idx in ds.split_indices(Split::Test) {
            let mut rng = degradation_rng(7, idx);
            let d = degrade(&ds.images[idx], &task, &mut rng);
            expect += mse_images(&d, &ds.images[idx]);
        }
        expect /= ds.split_len(Split::Test) as f64;
        assert!((base - expect).abs() < 1e-9);
    }

    #[test]
    fn png_round_trip_through_a_folder() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset::<f32>(5, 3, 16);
        for (i, img) in ds.images.iter().enumerate() {
            save_png(img, &dir.path().join(format!("img-{i}.png"))).unwrap();
        }
        let back = load_image_folder::<f32>(dir.path()).unwrap();
        assert_eq!(back.images.len(), 3);
        for (orig, loaded) in ds.images.iter().zip(&back.images) {
            assert_eq!(loaded.shape, orig.shape);
            // 8-bit quantization: within half a level
            for (&a, &b) in orig.data.iter().zip(&loaded.data) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        // lexicographic order is stable
        assert_eq!(
            back.source_names,
            vec!["img-0.png", "img-1.png", "img-2.png"]
        );
    }

    #[test]
    fn load_rejects_missing_folder() {
        assert!(load_image_folder::<f32>(std::path::Path::new("/nonexistent-dir-xyz")).is_err());
    }
}

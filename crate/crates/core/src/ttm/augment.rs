//! Seeded random-resized-crop augmentation.
//!
//! Crops a random area/aspect window per image and bilinearly resizes it
//! back to the full frame. All draws come from one seeded stream, so a run
//! replays the exact same view sequence.

use crate::numerics::{StreamRng, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct CropConfig {
    /// Area-fraction bounds of the crop window.
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig { min_scale: 0.08, max_scale: 1.0 }
    }
}

const MIN_LOG_ASPECT: f64 = -0.287682072451781; // ln(3/4)
const MAX_LOG_ASPECT: f64 = 0.287682072451781; // ln(4/3)

#[derive(Debug, Clone, Copy)]
struct CropWindow {
    top: usize,
    left: usize,
    height: usize,
    width: usize,
}

fn sample_window(height: usize, width: usize, config: &CropConfig, rng: &mut StreamRng) -> CropWindow {
    let area = (height * width) as f64;
    for _ in 0..10 {
        let scale = if config.min_scale < config.max_scale {
            rng.range_f64(config.min_scale, config.max_scale)
        } else {
            config.max_scale
        };
        let target = area * scale;
        let aspect = rng.range_f64(MIN_LOG_ASPECT, MAX_LOG_ASPECT).exp();
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w >= 1 && w <= width && h >= 1 && h <= height {
            let top = rng.below(height - h + 1);
            let left = rng.below(width - w + 1);
            return CropWindow { top, left, height: h, width: w };
        }
    }
    CropWindow { top: 0, left: 0, height, width }
}

/// Crop-and-resize every image row of `batch` (shape `[N, H*W*C]`) with
/// independent windows; returns the same shape.
pub fn random_resized_crop(
    batch: &Tensor,
    height: usize,
    width: usize,
    channels: usize,
    config: &CropConfig,
    rng: &mut StreamRng,
) -> Tensor {
    assert_eq!(batch.width(), height * width * channels, "row width does not match image dims");
    let mut out = Tensor::zeros(batch.shape.clone());
    let stride = height * width * channels;
    for i in 0..batch.rows() {
        let window = sample_window(height, width, config, rng);
        let src = &batch.data[i * stride..(i + 1) * stride];
        let dst = &mut out.data[i * stride..(i + 1) * stride];
        resize_window(src, dst, height, width, channels, window);
    }
    out
}

/// Bilinearly resample `window` of the source image to fill the full frame.
fn resize_window(src: &[f64], dst: &mut [f64], height: usize, width: usize, channels: usize, w: CropWindow) {
    let scale_y = w.height as f64 / height as f64;
    let scale_x = w.width as f64 / width as f64;
    for y in 0..height {
        let sy = (w.top as f64 + (y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, height as f64 - 1.0);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(height - 1);
        let fy = sy - y0 as f64;
        for x in 0..width {
            let sx = (w.left as f64 + (x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, width as f64 - 1.0);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(width - 1);
            let fx = sx - x0 as f64;
            for c in 0..channels {
                let at = |yy: usize, xx: usize| src[(yy * width + xx) * channels + c];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                dst[(y * width + x) * channels + c] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor {
        Tensor::new(vec![1, h * w], (0..h * w).map(|i| i as f64 / (h * w) as f64).collect()).unwrap()
    }

    #[test]
    fn crop_stream_replays_identically() {
        let batch = ramp(8, 8);
        let cfg = CropConfig::default();
        let a = random_resized_crop(&batch, 8, 8, 1, &cfg, &mut StreamRng::new(5).substream("aug"));
        let b = random_resized_crop(&batch, 8, 8, 1, &cfg, &mut StreamRng::new(5).substream("aug"));
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn full_scale_identity_window_preserves_image() {
        // min_scale = max_scale = 1 with aspect forced near 1 usually yields
        // the identity window; the fallback path also yields it.
        let batch = ramp(6, 6);
        let cfg = CropConfig { min_scale: 0.9999999, max_scale: 1.0 };
        let out = random_resized_crop(&batch, 6, 6, 1, &cfg, &mut StreamRng::new(1).substream("x"));
        // Identity resize of the full window is exact at pixel centers.
        for (o, s) in out.data.iter().zip(&batch.data) {
            assert!((o - s).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_scale_range_does_not_panic() {
        let batch = ramp(6, 6);
        let cfg = CropConfig { min_scale: 1.0, max_scale: 1.0 };
        let out = random_resized_crop(&batch, 6, 6, 1, &cfg, &mut StreamRng::new(2).substream("d"));
        assert_eq!(out.shape, batch.shape);
    }

    #[test]
    fn values_stay_in_source_range() {
        let batch = ramp(8, 8);
        let cfg = CropConfig::default();
        let out = random_resized_crop(&batch, 8, 8, 1, &cfg, &mut StreamRng::new(3).substream("r"));
        for &v in &out.data {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

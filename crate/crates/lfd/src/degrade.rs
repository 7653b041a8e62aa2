//! Simulated prediction artifacts for rendered location fields: blur,
//! coordinate noise, mask erosion/dilation and thin-structure dropout.
//! Stands in for a learned predictor, whose outputs are smooth, slightly
//! misaligned and miss thin parts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Domain, LocationField};
use crate::util::{normal, rng_for};

#[derive(Debug, Error)]
pub enum DegradeError {
    #[error("input field domain must be rendered, got {0:?}")]
    NotRendered(Domain),
}

/// Probabilities and magnitude ranges for each degradation. Every draw is
/// taken from the seed in a fixed order, so a given (field, config, seed)
/// triple always produces the same output.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DegradeConfig {
    /// Gaussian blur of the coordinate channels within the mask.
    pub blur_prob: f64,
    pub blur_sigma: [f64; 2],
    /// Additive Gaussian noise on masked coordinates, canonical units.
    pub noise_prob: f64,
    pub noise_sigma: [f64; 2],
    /// Mask erosion or dilation (picked with equal probability).
    pub morph_prob: f64,
    pub morph_radius: [u32; 2],
    /// Per-component removal probability for thin mask structures.
    pub thin_dropout_prob: f64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            blur_prob: 0.8,
            blur_sigma: [0.5, 1.5],
            noise_prob: 0.8,
            noise_sigma: [0.005, 0.03],
            morph_prob: 0.5,
            morph_radius: [1, 2],
            thin_dropout_prob: 0.3,
        }
    }
}

impl DegradeConfig {
    /// Configuration that changes nothing but the domain tag.
    pub fn identity() -> Self {
        Self {
            blur_prob: 0.0,
            blur_sigma: [0.0, 0.0],
            noise_prob: 0.0,
            noise_sigma: [0.0, 0.0],
            morph_prob: 0.0,
            morph_radius: [1, 1],
            thin_dropout_prob: 0.0,
        }
    }
}

fn draw_range(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    r[0] + rng.random::<f64>() * (r[1] - r[0])
}

fn blur_masked(lf: &mut LocationField, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for d in -radius..=radius {
        kernel.push((-(d * d) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let (w, h) = (lf.width as i64, lf.height as i64);
    let src = lf.coords.clone();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if !lf.mask[idx] {
                continue;
            }
            let mut acc = [0.0f64; 3];
            let mut weight = 0.0f64;
            for dy in -radius..=radius {
                let ny = y + dy;
                if ny < 0 || ny >= h {
                    continue;
                }
                for dx in -radius..=radius {
                    let nx = x + dx;
                    if nx < 0 || nx >= w {
                        continue;
                    }
                    let nidx = (ny * w + nx) as usize;
                    if !lf.mask[nidx] {
                        continue;
                    }
                    let wgt = kernel[(dy + radius) as usize] * kernel[(dx + radius) as usize];
                    weight += wgt;
                    for k in 0..3 {
                        acc[k] += wgt * src[nidx][k] as f64;
                    }
                }
            }
            for k in 0..3 {
                lf.coords[idx][k] = (acc[k] / weight) as f32;
            }
        }
    }
}

fn erode(mask: &[bool], w: i64, h: i64, radius: i64) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..h {
        'pixel: for x in 0..w {
            let idx = (y * w + x) as usize;
            if !mask[idx] {
                continue;
            }
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h || !mask[(ny * w + nx) as usize] {
                        continue 'pixel;
                    }
                }
            }
            out[idx] = true;
        }
    }
    out
}

fn dilate(mask: &[bool], w: i64, h: i64, radius: i64) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..h {
        'pixel: for x in 0..w {
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h && mask[(ny * w + nx) as usize] {
                        out[(y * w + x) as usize] = true;
                        continue 'pixel;
                    }
                }
            }
        }
    }
    out
}

/// Coordinates for pixels gained by dilation: copied from the nearest
/// originally-masked pixel (Chebyshev rings, row-major within a ring).
fn fill_dilated_coords(lf: &mut LocationField, old_mask: &[bool], radius: i64) {
    let (w, h) = (lf.width as i64, lf.height as i64);
    let src = lf.coords.clone();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if !lf.mask[idx] || old_mask[idx] {
                continue;
            }
            'search: for r in 1..=radius {
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dy.abs().max(dx.abs()) != r {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx >= 0 && ny >= 0 && nx < w && ny < h {
                            let nidx = (ny * w + nx) as usize;
                            if old_mask[nidx] {
                                lf.coords[idx] = src[nidx];
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 8-connected components of `mask`, ordered by their first pixel.
fn components(mask: &[bool], w: i64, h: i64) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = (i as i64 % w, i as i64 / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let n = (ny * w + nx) as usize;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn clamp_and_sentinel(lf: &mut LocationField) {
    for i in 0..lf.mask.len() {
        if lf.mask[i] {
            for k in 0..3 {
                lf.coords[i][k] = lf.coords[i][k].clamp(-0.5, 0.5);
            }
        } else {
            lf.coords[i] = [0.0; 3];
        }
    }
}

/// Turn a rendered field into a simulated prediction. Applies, with the
/// configured probabilities: coordinate blur inside the mask, additive
/// coordinate noise, one round of mask erosion or dilation, and dropout of
/// thin mask structures (components removed by a radius-1 opening).
/// Masked coordinates are re-clamped to the unit cube; the output domain
/// is `PredictedSim`.
pub fn degrade(
    lf: &LocationField,
    cfg: &DegradeConfig,
    seed: u64,
) -> Result<LocationField, DegradeError> {
    if lf.domain != Domain::Rendered {
        return Err(DegradeError::NotRendered(lf.domain));
    }
    let mut out = lf.clone();
    out.domain = Domain::PredictedSim;
    let (w, h) = (lf.width as i64, lf.height as i64);
    let mut rng = rng_for(seed, 0xd6);

    // Fixed draw order keeps the output a function of (lf, cfg, seed) only.
    let do_blur = rng.random::<f64>() < cfg.blur_prob;
    let blur_sigma = draw_range(&mut rng, cfg.blur_sigma);
    let do_noise = rng.random::<f64>() < cfg.noise_prob;
    let noise_sigma = draw_range(&mut rng, cfg.noise_sigma);
    let do_morph = rng.random::<f64>() < cfg.morph_prob;
    let do_dilate = rng.random::<f64>() < 0.5;
    let span = cfg.morph_radius[1].saturating_sub(cfg.morph_radius[0]) + 1;
    let morph_radius = cfg.morph_radius[0] + rng.random::<u32>() % span;

    if do_blur {
        blur_masked(&mut out, blur_sigma);
    }

    if do_noise && noise_sigma > 0.0 {
        for i in 0..out.mask.len() {
            if out.mask[i] {
                for k in 0..3 {
                    out.coords[i][k] += (noise_sigma * normal(&mut rng)) as f32;
                }
            }
        }
    }

    if do_morph {
        let old_mask = out.mask.clone();
        if do_dilate {
            out.mask = dilate(&old_mask, w, h, morph_radius as i64);
            fill_dilated_coords(&mut out, &old_mask, morph_radius as i64);
        } else {
            out.mask = erode(&old_mask, w, h, morph_radius as i64);
        }
    }

    if cfg.thin_dropout_prob > 0.0 {
        let eroded = erode(&out.mask, w, h, 1);
        let opened = dilate(&eroded, w, h, 1);
        let thin: Vec<bool> = out
            .mask
            .iter()
            .zip(&opened)
            .map(|(&m, &o)| m && !o)
            .collect();
        for comp in components(&thin, w, h) {
            if rng.random::<f64>() < cfg.thin_dropout_prob {
                for i in comp {
                    out.mask[i] = false;
                }
            }
        }
    }

    clamp_and_sentinel(&mut out);
    Ok(out)
}

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{Batch, Mix};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_PAD: usize = 4;
pub const DEFAULT_MIXUP_ALPHA: f64 = 0.2;

/// Mirror index into `0..n` without repeating the edge pixel.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Mirrors every image of `[B, C, H, W]` left to right.
pub fn flip_horizontal(images: &Tensor) -> Result<Tensor> {
    let s = images.shape();
    if s.len() != 4 {
        return Err(Error::dim(format!("flip needs [B, C, H, W], got {s:?}")));
    }
    let w = s[3];
    let mut out = images.data().to_vec();
    for row in out.chunks_exact_mut(w) {
        row.reverse();
    }
    Tensor::new(s, out)
}

/// Per image: horizontal flip with probability `flip_prob`, then reflect
/// padding by `pad` and a random crop back to the original size.
pub fn augment<R: Rng + ?Sized>(
    batch: &Batch,
    flip_prob: f64,
    pad: usize,
    rng: &mut R,
) -> Result<Batch> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::Contract(format!(
            "flip probability {flip_prob} outside [0, 1]"
        )));
    }
    let s = batch.images.shape();
    let (c, h, w) = (s[1], s[2], s[3]);
    if pad >= h || pad >= w {
        return Err(Error::Contract(format!(
            "padding {pad} must be smaller than the image {h}×{w}"
        )));
    }
    let src = batch.images.data();
    let img = c * h * w;
    let mut out = vec![0.0; src.len()];
    for b in 0..s[0] {
        let flip = rng.random_bool(flip_prob);
        let (dy, dx) = if pad > 0 {
            (rng.random_range(0..=2 * pad), rng.random_range(0..=2 * pad))
        } else {
            (0, 0)
        };
        for ch in 0..c {
            let base = b * img + ch * h * w;
            for y in 0..h {
                let sy = reflect(y as isize + dy as isize - pad as isize, h);
                for x in 0..w {
                    let sx = reflect(x as isize + dx as isize - pad as isize, w);
                    let sx = if flip { w - 1 - sx } else { sx };
                    out[base + y * w + x] = src[base + sy * w + sx];
                }
            }
        }
    }
    Ok(Batch {
        images: Tensor::new(s, out)?,
        labels: batch.labels.clone(),
        mix: batch.mix.clone(),
    })
}

/// Mixes `batch` with the permutation `perm` of itself at weight `lambda`:
/// `λ·x + (1 − λ)·x[perm]`.
pub fn mixup_with(batch: &Batch, lambda: f64, perm: &[usize]) -> Result<Batch> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Contract(format!(
            "mixup weight {lambda} outside [0, 1]"
        )));
    }
    let n = batch.len();
    let mut seen = vec![false; n];
    if perm.len() != n
        || perm
            .iter()
            .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
    {
        return Err(Error::Contract(format!(
            "mixup needs a permutation of 0..{n}"
        )));
    }
    let s = batch.images.shape();
    let img = batch.images.len() / n;
    let src = batch.images.data();
    let mut out = Vec::with_capacity(src.len());
    for (i, &j) in perm.iter().enumerate() {
        let (a, b) = (&src[i * img..(i + 1) * img], &src[j * img..(j + 1) * img]);
        out.extend(
            a.iter()
                .zip(b)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y),
        );
    }
    Ok(Batch {
        images: Tensor::new(s, out)?,
        labels: batch.labels.clone(),
        mix: Some(Mix {
            labels_b: perm.iter().map(|&j| batch.labels[j]).collect(),
            lambda,
        }),
    })
}

/// Mixup with `λ ~ Beta(alpha, alpha)` and a uniformly random partner for
/// every example.
pub fn mixup<R: Rng + ?Sized>(batch: &Batch, alpha: f64, rng: &mut R) -> Result<Batch> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::Contract(format!("mixup alpha {alpha}: {e}")))?;
    let lambda = beta.sample(rng);
    let mut perm: Vec<usize> = (0..batch.len()).collect();
    perm.shuffle(rng);
    mixup_with(batch, lambda, &perm)
}

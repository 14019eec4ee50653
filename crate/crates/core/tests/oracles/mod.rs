//! Slow, direct reference computations used to check the optimized code.
//! Nothing here calls into the library's numeric routines.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use patchforge::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Patch of independent uniformly random 8-bit values.
pub fn random_u8_raster(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Raster {
    Raster::from_fn(h, w, c, |_, _, _| f64::from(rng.random::<u8>()))
}

/// Patch of independent real values in `[0, 255)`.
pub fn random_real_raster(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Raster {
    Raster::from_fn(h, w, c, |_, _, _| rng.random::<f64>() * 255.0)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        (got - want).abs() / want.abs()
    }
}

/// Mean squared circular forward difference, summed channel by channel.
pub fn grad_oracle(p: &Raster) -> f64 {
    let (h, w, c) = p.shape();
    let mut total = 0.0;
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = p.get(y, x, ch);
                let dh = p.get((y + 1) % h, x, ch) - v;
                let dw = p.get(y, (x + 1) % w, ch) - v;
                total += dh * dh + dw * dw;
            }
        }
    }
    total / (h * w * c) as f64
}

pub fn std_oracle(p: &Raster) -> f64 {
    let (h, w, c) = p.shape();
    let n = (h * w * c) as f64;
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                sum += p.get(y, x, ch);
            }
        }
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let d = p.get(y, x, ch) - mean;
                ss += d * d;
            }
        }
    }
    (ss / n).sqrt()
}

fn folded_omega(k: usize, n: usize) -> f64 {
    let w = 2.0 * PI * k as f64 / n as f64;
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Naive quadruple-loop DFT. Returns `(band power / HWC, total spectral power)`.
pub fn freq_oracle(p: &Raster) -> (f64, f64) {
    let (h, w, c) = p.shape();
    let mut band = 0.0;
    let mut total = 0.0;
    for ch in 0..c {
        for kh in 0..h {
            for kw in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let phase =
                            -2.0 * PI * ((kh * y) as f64 / h as f64 + (kw * x) as f64 / w as f64);
                        let v = p.get(y, x, ch);
                        re += v * phase.cos();
                        im += v * phase.sin();
                    }
                }
                let power = re * re + im * im;
                total += power;
                let inside = folded_omega(kh, h).abs() >= FRAC_PI_2 - 1e-12
                    && folded_omega(kw, w).abs() >= FRAC_PI_2 - 1e-12;
                if inside {
                    band += power;
                }
            }
        }
    }
    (band / (h * w * c) as f64, total)
}

pub fn mse_oracle(a: &Raster, b: &Raster) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        s += (x - y).powi(2);
    }
    s / a.data().len() as f64
}

fn keys_cubic(t: f64) -> f64 {
    // a = -0.5 written in the textbook piecewise form
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

fn mirror(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Axis weights `(input index, weight)` for one output sample, unnormalised.
fn axis_support(out_index: usize, scale: usize, in_len: usize) -> Vec<(usize, f64)> {
    let s = scale as f64;
    // 0-based centre of output sample in input coordinates
    let centre = (out_index as f64 + 0.5) * s - 0.5;
    let lo = (centre - 2.0 * s).floor() as i64 - 1;
    let hi = (centre + 2.0 * s).ceil() as i64 + 1;
    (lo..=hi)
        .map(|j| {
            (
                mirror(j, in_len as i64),
                keys_cubic((centre - j as f64) / s) / s,
            )
        })
        .filter(|&(_, wt)| wt != 0.0)
        .collect()
}

/// Antialiased bicubic decimation as an explicit 2-D weighted sum per output pixel.
pub fn bicubic_oracle(src: &Raster, scale: usize) -> Raster {
    let (h, w, c) = src.shape();
    let (oh, ow) = (h / scale, w / scale);
    Raster::from_fn(oh, ow, c, |oy, ox, ch| {
        let ys = axis_support(oy, scale, h);
        let xs = axis_support(ox, scale, w);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for &(iy, wy) in &ys {
            for &(ix, wx) in &xs {
                acc += wy * wx * src.get(iy, ix, ch);
                norm += wy * wx;
            }
        }
        (acc / norm).clamp(0.0, 255.0)
    })
}

/// Every valid `(x, y)` that a top-left anchored grid may emit, found by scanning.
pub fn grid_scan(
    height: usize,
    width: usize,
    patch: usize,
    stride: usize,
    align: usize,
    cover_edges: bool,
) -> Vec<(usize, usize)> {
    let axis = |len: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..len)
            .filter(|&p| p + patch <= len && p % stride == 0)
            .collect();
        if cover_edges && !v.is_empty() {
            let flush = (0..len)
                .filter(|&p| p + patch <= len && p % align == 0)
                .max()
                .unwrap();
            if !v.contains(&flush) {
                v.push(flush);
            }
        }
        v
    };
    let (ys, xs) = (axis(height), axis(width));
    let mut out = Vec::new();
    for &y in &ys {
        for &x in &xs {
            out.push((x, y));
        }
    }
    out
}

/// Pearson correlation from explicit covariance loops.
pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma: f64 = a.iter().sum::<f64>() / n;
    let mb: f64 = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma).powi(2);
        vb += (b[i] - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

/// Quantile by sorting and interpolating between neighbouring order statistics.
pub fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let i = pos as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] * (1.0 - (pos - i as f64)) + v[i + 1] * (pos - i as f64)
}

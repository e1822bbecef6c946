use crate::imgcore::Image;
use crate::{Error, Result};

/// Lattice cell of the coarsest noise octave, texels.
const BASE_CELL: usize = 64;
/// Finest lattice cell, texels; keeps the texture smooth at one texel.
const MIN_CELL: usize = 4;
/// Spacing of the stamped stone motifs, texels.
pub const MOTIF_PERIOD: usize = 32;

/// SplitMix64 finaliser; used as a counter-based hash.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x51_7cc1_b727_220a_u64, |h, &w| mix64(h ^ mix64(w)))
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn quintic(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// One periodic value-noise octave with `cells` lattice cells per side.
fn value_noise(seed: u64, octave: u64, cells: usize, size: usize) -> Vec<f64> {
    let lattice: Vec<f64> = (0..cells * cells)
        .map(|i| unit(hash_words(&[seed, octave, i as u64])))
        .collect();
    let mut out = vec![0.0; size * size];
    let step = cells as f64 / size as f64;
    for y in 0..size {
        let fy = y as f64 * step;
        let (y0, ty) = (fy.floor() as usize % cells, quintic(fy - fy.floor()));
        let y1 = (y0 + 1) % cells;
        for x in 0..size {
            let fx = x as f64 * step;
            let (x0, tx) = (fx.floor() as usize % cells, quintic(fx - fx.floor()));
            let x1 = (x0 + 1) % cells;
            let a = lattice[y0 * cells + x0]
                + (lattice[y0 * cells + x1] - lattice[y0 * cells + x0]) * tx;
            let b = lattice[y1 * cells + x0]
                + (lattice[y1 * cells + x1] - lattice[y1 * cells + x0]) * tx;
            out[y * size + x] = a + (b - a) * ty;
        }
    }
    out
}

/// A single stone-like blob: a shaded ellipse with a soft rim, built once
/// per seed and stamped on a regular lattice.
fn stone_motif(seed: u64) -> Vec<f64> {
    let p = MOTIF_PERIOD;
    let h = hash_words(&[seed, 0x5705e]);
    let rx = 9.0 + 4.0 * unit(mix64(h));
    let ry = 7.0 + 4.0 * unit(mix64(h ^ 1));
    let rot = std::f64::consts::PI * unit(mix64(h ^ 2));
    let (c, s) = (rot.cos(), rot.sin());
    let centre = (p as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; p * p];
    for y in 0..p {
        for x in 0..p {
            let (dx, dy) = (x as f64 - centre, y as f64 - centre);
            let (u, v) = ((c * dx + s * dy) / rx, (-s * dx + c * dy) / ry);
            let r2 = u * u + v * v;
            // Lit from the upper left: a brightness ramp across the stone.
            let shade = 0.5 + 0.35 * (-(u + v) * 0.7).tanh();
            out[y * p + x] = if r2 < 1.0 {
                shade * (1.0 - r2 * r2) + 0.1 * r2
            } else {
                0.1 * (-(r2 - 1.0) * 4.0).exp()
            };
        }
    }
    out
}

/// Procedural ballast texture: multi-octave periodic value noise blended with
/// repeated stone motifs, histogram-equalised onto `[0.2, 0.8]`.
///
/// The texture tiles seamlessly when `size` is a multiple of the motif
/// period.
pub fn gen_ballast_texture(seed: u64, size: usize, octaves: usize) -> Result<Image> {
    if size < 256 {
        return Err(Error::InvalidParameter(format!(
            "texture size {size} < 256"
        )));
    }
    if octaves == 0 {
        return Err(Error::InvalidParameter(
            "texture needs at least one octave".into(),
        ));
    }
    let mut acc = vec![0.0; size * size];
    let mut amp = 1.0;
    for o in 0..octaves {
        let cell = (BASE_CELL >> o).max(MIN_CELL);
        let cells = (size / cell).max(1);
        let layer = value_noise(seed, o as u64, cells, size);
        for (a, l) in acc.iter_mut().zip(&layer) {
            *a += amp * (l - 0.5);
        }
        amp *= 0.6;
    }
    let motif = stone_motif(seed);
    let p = MOTIF_PERIOD;
    for y in 0..size {
        for x in 0..size {
            acc[y * size + x] += 1.2 * (motif[(y % p) * p + x % p] - 0.3);
        }
    }
    Image::new(size, size, equalize(&acc, 0.2, 0.8))
}

/// Rank-based histogram equalisation; ties are broken by index.
fn equalize(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let n = values.len() as f64;
    let mut out = vec![0.0; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = lo + (hi - lo) * (rank as f64 + 0.5) / n;
    }
    out
}

/// Bilinear sample with periodic wrap-around.
#[inline]
pub(crate) fn sample_wrapped(tex: &Image, x: f64, y: f64) -> f64 {
    let (w, h) = (tex.width(), tex.height());
    let fx = x.floor();
    let fy = y.floor();
    let (tx, ty) = (x - fx, y - fy);
    let x0 = (fx as i64).rem_euclid(w as i64) as usize;
    let y0 = (fy as i64).rem_euclid(h as i64) as usize;
    let x1 = (x0 + 1) % w;
    let y1 = (y0 + 1) % h;
    let d = tex.data();
    let a = d[y0 * w + x0] + (d[y0 * w + x1] - d[y0 * w + x0]) * tx;
    let b = d[y1 * w + x0] + (d[y1 * w + x1] - d[y1 * w + x0]) * tx;
    a + (b - a) * ty
}

//! Exact Euclidean distance transform.
//!
//! Two-pass lower-envelope algorithm on squared distances, one 1D
//! transform per column then per row. Pixels outside the image count as
//! background, so a fully foreground image still has distance 1 at the
//! border frame.

use super::{BinaryMask, ImageGrid};

/// Distance from each foreground pixel to the nearest background pixel
/// (Euclidean, exact). Background pixels map to 0.
pub fn distance_transform(mask: &BinaryMask) -> ImageGrid {
    let (w, h) = mask.dims();
    // Pad with a one-pixel background ring so the outside-is-background
    // policy falls out of the ordinary transform.
    let pw = w + 2;
    let ph = h + 2;
    let mut f = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                f[(y + 1) * pw + (x + 1)] = f64::INFINITY;
            }
        }
    }

    // Column pass
    let mut tmp = vec![0.0f64; pw * ph];
    let mut scratch = Scratch::new(ph.max(pw));
    let mut column = vec![0.0f64; ph];
    let mut out_col = vec![0.0f64; ph];
    for x in 0..pw {
        for y in 0..ph {
            column[y] = f[y * pw + x];
        }
        dt_1d(&column, &mut out_col, &mut scratch);
        for y in 0..ph {
            tmp[y * pw + x] = out_col[y];
        }
    }

    // Row pass
    let mut row = vec![0.0f64; pw];
    let mut out_row = vec![0.0f64; pw];
    let mut sq = vec![0.0f64; pw * ph];
    for y in 0..ph {
        row.copy_from_slice(&tmp[y * pw..(y + 1) * pw]);
        dt_1d(&row, &mut out_row, &mut scratch);
        sq[y * pw..(y + 1) * pw].copy_from_slice(&out_row);
    }

    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(sq[(y + 1) * pw + (x + 1)].sqrt());
        }
    }
    ImageGrid::from_vec(w, h, data).expect("dims validated by input mask")
}

struct Scratch {
    centers: Vec<usize>,
    boundaries: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            centers: vec![0; n],
            boundaries: vec![0.0; n + 1],
        }
    }
}

/// 1D squared-distance transform of sampled function `f` into `out`.
fn dt_1d(f: &[f64], out: &mut [f64], scratch: &mut Scratch) {
    let n = f.len();
    let centers = &mut scratch.centers;
    let boundaries = &mut scratch.boundaries;

    let mut k = 0usize;
    centers[0] = 0;
    boundaries[0] = f64::NEG_INFINITY;
    boundaries[1] = f64::INFINITY;

    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[centers[k]].is_infinite() {
            // everything so far was unreachable; restart the envelope here
            if k == 0 {
                centers[0] = q;
                boundaries[1] = f64::INFINITY;
                continue;
            }
            unreachable!("envelope only holds finite parabolas after index 0");
        }
        let mut s = intersect(f, centers[k], q);
        while k > 0 && s <= boundaries[k] {
            k -= 1;
            s = intersect(f, centers[k], q);
        }
        k += 1;
        centers[k] = q;
        boundaries[k] = s;
        boundaries[k + 1] = f64::INFINITY;
    }

    let mut k = 0usize;
    for (q, out_q) in out.iter_mut().enumerate() {
        while boundaries[k + 1] < q as f64 {
            k += 1;
        }
        let c = centers[k];
        if f[c].is_infinite() {
            *out_q = f64::INFINITY;
        } else {
            let d = q as f64 - c as f64;
            *out_q = d * d + f[c];
        }
    }
}

/// Intersection abscissa of the parabolas rooted at `p` and `q`.
fn intersect(f: &[f64], p: usize, q: usize) -> f64 {
    let (fp, fq) = (f[p], f[q]);
    let (pf, qf) = (p as f64, q as f64);
    ((fq + qf * qf) - (fp + pf * pf)) / (2.0 * qf - 2.0 * pf)
}

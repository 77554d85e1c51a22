//! Orthonormal type-II DCT used as the real frequency basis for spectral
//! covariances. Signals with a grid shape use the separable 2-D transform;
//! flat signals use the 1-D transform over their full length.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

fn dct_matrix(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().unwrap().get(&n) {
        return Arc::clone(m);
    }
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for j in 0..n {
            m[k * n + j] = scale * (PI * (j as f64 + 0.5) * k as f64 / nf).cos();
        }
    }
    let m = Arc::new(m);
    cache.lock().unwrap().insert(n, Arc::clone(&m));
    m
}

// out[k] = sum_j m[k, j] * v[j] (forward) or sum_j m[j, k] * v[j] (inverse)
fn apply_1d(m: &[f64], n: usize, v: &[f64], out: &mut [f64], inverse: bool) {
    for (k, o) in out.iter_mut().enumerate().take(n) {
        let mut acc = 0.0;
        if inverse {
            for j in 0..n {
                acc += m[j * n + k] * v[j];
            }
        } else {
            let row = &m[k * n..(k + 1) * n];
            for j in 0..n {
                acc += row[j] * v[j];
            }
        }
        *o = acc;
    }
}

fn transform(v: &[f64], grid: Option<(usize, usize)>, inverse: bool) -> Vec<f64> {
    match grid {
        None => {
            let n = v.len();
            let m = dct_matrix(n);
            let mut out = vec![0.0; n];
            apply_1d(&m, n, v, &mut out, inverse);
            out
        }
        Some((h, w)) => {
            debug_assert_eq!(h * w, v.len());
            let mh = dct_matrix(h);
            let mw = dct_matrix(w);
            // rows first
            let mut tmp = vec![0.0; h * w];
            for r in 0..h {
                apply_1d(&mw, w, &v[r * w..(r + 1) * w], &mut tmp[r * w..(r + 1) * w], inverse);
            }
            let mut out = vec![0.0; h * w];
            let mut col = vec![0.0; h];
            let mut col_out = vec![0.0; h];
            for c in 0..w {
                for r in 0..h {
                    col[r] = tmp[r * w + c];
                }
                apply_1d(&mh, h, &col, &mut col_out, inverse);
                for r in 0..h {
                    out[r * w + c] = col_out[r];
                }
            }
            out
        }
    }
}

/// Spatial samples to DCT coefficients.
pub fn forward(v: &[f64], grid: Option<(usize, usize)>) -> Vec<f64> {
    transform(v, grid, false)
}

/// DCT coefficients back to spatial samples.
pub fn inverse(v: &[f64], grid: Option<(usize, usize)>) -> Vec<f64> {
    transform(v, grid, true)
}

/// Squared angular frequency of every DCT coefficient, in coefficient order.
pub fn frequencies_squared(len: usize, grid: Option<(usize, usize)>) -> Vec<f64> {
    match grid {
        None => (0..len)
            .map(|k| (PI * k as f64 / len as f64).powi(2))
            .collect(),
        Some((h, w)) => {
            let mut out = Vec::with_capacity(h * w);
            for r in 0..h {
                for c in 0..w {
                    let fr = PI * r as f64 / h as f64;
                    let fc = PI * c as f64 / w as f64;
                    out.push(fr * fr + fc * fc);
                }
            }
            out
        }
    }
}

/// Dense orthonormal basis matrix `D` (row-major, `len x len`) with
/// `forward(v) = D v`.
pub fn basis_matrix(len: usize, grid: Option<(usize, usize)>) -> Vec<f64> {
    let mut d = vec![0.0; len * len];
    let mut e = vec![0.0; len];
    for j in 0..len {
        e[j] = 1.0;
        let col = forward(&e, grid);
        for k in 0..len {
            d[k * len + j] = col[k];
        }
        e[j] = 0.0;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_flat_and_grid() {
        let v: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 1.3).collect();
        for grid in [None, Some((3, 4)), Some((4, 3))] {
            let back = inverse(&forward(&v, grid), grid);
            for (a, b) in v.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn preserves_norm() {
        let v: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let f = forward(&v, Some((4, 4)));
        let n0: f64 = v.iter().map(|x| x * x).sum();
        let n1: f64 = f.iter().map(|x| x * x).sum();
        assert!((n0 - n1).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let v = vec![2.0; 9];
        let f = forward(&v, Some((3, 3)));
        assert!((f[0] - 6.0).abs() < 1e-12);
        assert!(f[1..].iter().all(|x| x.abs() < 1e-12));
    }
}

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use noracl::linalg::Matrix;
use noracl::rng::stream_rng;
use noracl::runner::{resolve, ExperimentConfig};
use noracl::Dataset;
use rand::Rng;

/// Singular values by one-sided (Hestenes) Jacobi on the columns of `a`.
pub fn oracle_singular_values(a: &Matrix) -> Vec<f64> {
    let a = if a.cols() > a.rows() { a.transpose() } else { a.clone() };
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    for _ in 0..200 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Balanced 10-class data on an 8×8 grid: a bright class-specific block
/// plus uniform noise.
pub fn synthetic_digits(per_class: usize, seed: u64) -> Dataset {
    let dim = 64;
    let mut rng = stream_rng(seed, &[777]);
    let mut images = Vec::with_capacity(10 * per_class * dim);
    let mut labels = Vec::with_capacity(10 * per_class);
    for _ in 0..per_class {
        for c in 0..10u8 {
            for p in 0..dim {
                let on = p / 6 == c as usize;
                let base: f32 = if on { 0.7 } else { 0.0 };
                let v: f32 = base + rng.gen_range(0.0..0.3);
                images.push(v.min(1.0));
            }
            labels.push(c);
        }
    }
    Dataset::new(images, labels, dim).unwrap()
}

/// A small, quick configuration over the synthetic data; `extra` is TOML
/// whose keys override the base ones.
pub fn tiny_config(extra: &str) -> ExperimentConfig {
    let mut table: toml::Table = "benchmark = \"permuted\"\ntasks = 3\nhidden = [6, 5]\nepochs_first = 3\n\
         epochs = 4\nbatch_size = 32\nseeds = [0]\nprobe_size = 64"
        .parse()
        .unwrap();
    let extra: toml::Table = extra.parse().unwrap();
    for (k, v) in extra {
        match (table.get_mut(&k), v) {
            (Some(toml::Value::Table(base)), toml::Value::Table(more)) => base.extend(more),
            (_, v) => {
                table.insert(k, v);
            }
        }
    }
    resolve(table).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

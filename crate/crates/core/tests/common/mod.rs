//! Reference implementation used as an oracle by the integration tests.
//! Plain `Vec<Vec<f64>>` arithmetic: cyclic Jacobi for eigenvalues and
//! Gauss-Jordan elimination for the Schur solve, so no code is shared with
//! the library's linear algebra.

#![allow(dead_code, clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn from_row_major(n: usize, values: &[f64]) -> Mat {
    (0..n).map(|i| values[i * n..(i + 1) * n].to_vec()).collect()
}

/// Eigenvalues and eigenvectors (columns of the returned matrix) by cyclic
/// Jacobi rotations.
pub fn jacobi(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

pub fn laplacian(w: &Mat) -> Mat {
    let n = w.len();
    (0..n)
        .map(|i| {
            let d: f64 = w[i].iter().sum();
            (0..n).map(|j| if i == j { d - w[i][j] } else { -w[i][j] }).collect()
        })
        .collect()
}

/// Heat-kernel entropy in bits from the Laplacian spectrum.
pub fn entropy(w: &Mat, tau: f64) -> f64 {
    let (lam, _) = jacobi(&laplacian(w));
    let lmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = lam.iter().map(|l| (-tau * (l - lmin)).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.iter().map(|x| x / z).filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum()
}

fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.iter().enumerate().map(|(i, row)| {
        let mut r = row.clone();
        r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for x in m[col].iter_mut() {
            *x /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (x, y) in m[r].iter_mut().zip(pivot_row) {
                    *x -= f * y;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `W_RR - W_IRᵀ (W_II + eps I)⁻¹ W_IR` for a binary provenance block given
/// by `parents`.
pub fn schur(w_ii: &Mat, w_rr: &Mat, parents: &[usize], eps: f64) -> Mat {
    let n = w_ii.len();
    let reg: Mat = (0..n).map(|i| (0..n).map(|j| w_ii[i][j] + if i == j { eps } else { 0.0 }).collect()).collect();
    let inv = inverse(&reg);
    let r = w_rr.len();
    (0..r).map(|i| (0..r).map(|j| w_rr[i][j] - inv[parents[i]][parents[j]]).collect()).collect()
}

/// Correlation-normalised, clamped similarity graph of the PSD part of `s`.
pub fn residual_graph(s: &Mat) -> Mat {
    let n = s.len();
    let (lam, v) = jacobi(s);
    let psd: Mat = (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| lam[k].max(0.0) * v[i][k] * v[j][k]).sum()).collect())
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        let d = (psd[i][i] * psd[j][j]).sqrt();
                        if d > 0.0 { (psd[i][j] / d).clamp(0.0, 1.0) } else { 0.0 }
                    }
                })
                .collect()
        })
        .collect()
}

pub struct OracleReport {
    pub h_i: f64,
    pub h_r: f64,
    pub h_joint: f64,
    pub h_cond: f64,
}

pub fn decompose(w_ii: &Mat, w_rr: &Mat, parents: &[usize], tau: f64, eps: f64) -> OracleReport {
    let (n, r) = (w_ii.len(), w_rr.len());
    let mut full = vec![vec![0.0; n + r]; n + r];
    for i in 0..n {
        for j in 0..n {
            full[i][j] = w_ii[i][j];
        }
    }
    for i in 0..r {
        for j in 0..r {
            full[n + i][n + j] = w_rr[i][j];
        }
        full[parents[i]][n + i] = 1.0;
        full[n + i][parents[i]] = 1.0;
    }
    OracleReport {
        h_i: entropy(w_ii, tau),
        h_r: entropy(w_rr, tau),
        h_joint: entropy(&full, tau),
        h_cond: entropy(&residual_graph(&schur(w_ii, w_rr, parents, eps)), tau),
    }
}

//! Sparse symmetric linear algebra for the weighted Poisson solves.
//!
//! The default solve path is an envelope (skyline) Cholesky factorization
//! after reverse Cuthill-McKee reordering, followed by iterative refinement
//! against the assembled CSR matrix. A Jacobi-preconditioned conjugate
//! gradient serves as fallback; the relaxation intervals used in the
//! experiments spread the element weights over many orders of magnitude,
//! which plain CG does not survive.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut col = vec![0usize; triplets.len()];
        let mut val = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            let k = next[i];
            col[k] = j;
            val[k] = v;
            next[i] += 1;
        }
        // sort each row and merge duplicates
        let mut row_ptr = vec![0usize; n + 1];
        let mut mcol = Vec::with_capacity(col.len());
        let mut mval = Vec::with_capacity(val.len());
        for i in 0..n {
            let lo = counts[i];
            let hi = counts[i + 1];
            let mut entries: Vec<(usize, f64)> =
                (lo..hi).map(|k| (col[k], val[k])).collect();
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                if let Some(last) = mcol.last() {
                    if *last == c && mcol.len() > row_ptr[i] {
                        *mval.last_mut().unwrap() += v;
                        continue;
                    }
                }
                mcol.push(c);
                mval.push(v);
            }
            row_ptr[i + 1] = mcol.len();
        }
        CsrMatrix {
            n,
            row_ptr,
            col: mcol,
            val: mval,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col[k] == i {
                    d[i] = self.val[k];
                }
            }
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col[k] == j {
                return self.val[k];
            }
        }
        0.0
    }

    /// Max relative asymmetry, 0 for exactly symmetric matrices.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[k];
                let a = self.val[k];
                let b = self.get(j, i);
                let scale = a.abs().max(b.abs()).max(1e-300);
                worst = worst.max((a - b).abs() / scale);
            }
        }
        worst
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Reverse Cuthill-McKee ordering of the matrix graph. Returns `perm` with
/// `perm[new] = old`.
pub fn rcm_order(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n;
    let degree = |i: usize| a.row_ptr[i + 1] - a.row_ptr[i];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        // start each component from a minimum-degree vertex
        let start = match (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree(i)) {
            Some(s) => s,
            None => break,
        };
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = (a.row_ptr[u]..a.row_ptr[u + 1])
                .map(|k| a.col[k])
                .filter(|&v| v != u && !visited[v])
                .collect();
            nbrs.sort_by_key(|&v| (degree(v), v));
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factorization L L^T of a permuted SPD matrix.
pub struct SkylineCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix, perm: Vec<usize>) -> Result<SkylineCholesky> {
        let n = a.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // envelope: first structural column per permuted row
        let mut first = vec![0usize; n];
        for new in 0..n {
            let old = perm[new];
            let mut lo = new;
            for k in a.row_ptr[old]..a.row_ptr[old + 1] {
                let j = inv[a.col[k]];
                if j < lo {
                    lo = j;
                }
            }
            first[new] = lo;
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for new in 0..n {
            let old = perm[new];
            for k in a.row_ptr[old]..a.row_ptr[old + 1] {
                let j = inv[a.col[k]];
                if j <= new {
                    values[offset[new] + (j - first[new])] = a.val[k];
                }
            }
        }
        // in-place envelope Cholesky
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = values[offset[i] + (j - fi)];
                // dot of rows i and j over overlapping envelope
                let ki = offset[i] + (lo - fi);
                let kj = offset[j] + (lo - fj);
                for t in 0..(j - lo) {
                    s -= values[ki + t] * values[kj + t];
                }
                let djj = values[offset[j] + (j - fj)];
                values[offset[i] + (j - fi)] = s / djj;
            }
            let orig = values[offset[i] + (i - fi)];
            let mut s = orig;
            for t in 0..(i - fi) {
                let v = values[offset[i] + t];
                s -= v * v;
            }
            if !s.is_finite() || s < -1e-2 * orig.abs() || orig <= 0.0 {
                return Err(Error::Solver {
                    achieved: f64::INFINITY,
                    required: 0.0,
                });
            }
            // static pivot perturbation: pivots wiped out by cancellation
            // are floored, and iterative refinement removes the bias
            let floor = 1e-13 * orig;
            if s < floor {
                s = floor;
            }
            values[offset[i] + (i - fi)] = s.sqrt();
        }
        Ok(SkylineCholesky {
            n,
            perm,
            first,
            offset,
            values,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let fi = self.first[i];
            let mut s = b[self.perm[i]];
            for (t, j) in (fi..i).enumerate() {
                s -= self.values[self.offset[i] + t] * y[j];
            }
            y[i] = s / self.values[self.offset[i] + (i - fi)];
        }
        // back substitution with L^T
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.values[self.offset[i] + (i - fi)];
            let yi = y[i];
            for (t, j) in (fi..i).enumerate() {
                y[j] -= self.values[self.offset[i] + t] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for new in 0..n {
            x[self.perm[new]] = y[new];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradient. Returns the solution and the
/// achieved relative residual.
pub fn pcg(a: &CsrMatrix, b: &[f64], rtol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = a.n;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return (vec![0.0; n], 0.0);
    }
    let dinv: Vec<f64> = a
        .diag()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm2(&r) / bnorm;
        best = best.min(rel);
        if rel <= rtol {
            return (x, rel);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, best)
}

/// Direct solve with iterative refinement, PCG fallback. Fails with the
/// achieved residual if neither path reaches `rtol`.
///
/// The system is symmetrically equilibrated (Jacobi scaling) before
/// factoring; weighted stiffness matrices otherwise carry the full dynamic
/// range of the weights into the factorization and stall refinement.
/// Convergence is measured by the normwise backward error
/// `|r| / (|A| |x| + |b|)`, which stays attainable when the solution is
/// dominated by near-null directions of an ill-conditioned system.
pub fn solve_symmetric(a: &CsrMatrix, b: &[f64], rtol: f64) -> Result<Vec<f64>> {
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; a.n]);
    }
    let anorm = (0..a.n)
        .map(|i| (a.row_ptr[i]..a.row_ptr[i + 1]).map(|k| a.val[k].abs()).sum())
        .fold(0.0f64, f64::max);
    let backward_error =
        |r: &[f64], x: &[f64]| norm2(r) / (anorm * norm2(x) + bnorm);
    let mut scale = vec![1.0; a.n];
    for i in 0..a.n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            if a.col[k] == i && a.val[k] > 0.0 {
                scale[i] = 1.0 / a.val[k].sqrt();
            }
        }
    }
    let mut scaled = a.clone();
    for i in 0..a.n {
        for k in scaled.row_ptr[i]..scaled.row_ptr[i + 1] {
            scaled.val[k] *= scale[i] * scale[scaled.col[k]];
        }
    }
    let order = rcm_order(&scaled);
    let mut direct = SkylineCholesky::factor(&scaled, order.clone());
    if direct.is_err() {
        // numerically singular even after equilibration; a tiny diagonal
        // shift restores positive pivots and refinement removes its bias
        for shift in [1e-12, 1e-9, 1e-6] {
            let mut shifted = scaled.clone();
            for i in 0..shifted.n {
                for k in shifted.row_ptr[i]..shifted.row_ptr[i + 1] {
                    if shifted.col[k] == i {
                        shifted.val[k] += shift;
                    }
                }
            }
            direct = SkylineCholesky::factor(&shifted, order.clone());
            if direct.is_ok() {
                break;
            }
        }
    }
    if let Ok(chol) = direct {
        // solve on the equilibrated system, refine against the original
        let solve_scaled = |r: &[f64]| -> Vec<f64> {
            let rs: Vec<f64> = r.iter().zip(&scale).map(|(v, s)| v * s).collect();
            let mut y = chol.solve(&rs);
            for (yi, s) in y.iter_mut().zip(&scale) {
                *yi *= s;
            }
            y
        };
        let mut x = solve_scaled(b);
        let mut r = vec![0.0; a.n];
        for _ in 0..30 {
            a.matvec(&x, &mut r);
            for i in 0..a.n {
                r[i] = b[i] - r[i];
            }
            if backward_error(&r, &x) <= rtol {
                return Ok(x);
            }
            let dx = solve_scaled(&r);
            for i in 0..a.n {
                x[i] += dx[i];
            }
        }
        a.matvec(&x, &mut r);
        for i in 0..a.n {
            r[i] = b[i] - r[i];
        }
        if backward_error(&r, &x) <= rtol {
            return Ok(x);
        }
    }
    let (x, _) = pcg(a, b, rtol, 20 * a.n.max(100));
    let mut r = vec![0.0; a.n];
    a.matvec(&x, &mut r);
    for i in 0..a.n {
        r[i] = b[i] - r[i];
    }
    let achieved = backward_error(&r, &x);
    if achieved <= rtol {
        Ok(x)
    } else {
        Err(Error::Solver {
            achieved,
            required: rtol,
        })
    }
}

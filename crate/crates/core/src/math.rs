//! Small vector type and the dense kernels behind the radiance field.
//!
//! Matrix products parallelize over output rows; every output element is a
//! sequential fixed-order sum, so results are bitwise identical for any
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn min_component(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn max_component(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 4x4 homogeneous transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat4(pub [[f64; 4]; 4]);

impl Mat4 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Mat4(m)
    }

    /// Build from orthonormal basis columns (x, y, z) and translation t.
    pub fn from_basis(x: Vec3, y: Vec3, z: Vec3, t: Vec3) -> Self {
        Mat4([
            [x.x, y.x, z.x, t.x],
            [x.y, y.y, z.y, t.y],
            [x.z, y.z, z.z, t.z],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    pub fn basis_x(&self) -> Vec3 {
        Vec3::new(self.0[0][0], self.0[1][0], self.0[2][0])
    }

    pub fn basis_y(&self) -> Vec3 {
        Vec3::new(self.0[0][1], self.0[1][1], self.0[2][1])
    }

    pub fn basis_z(&self) -> Vec3 {
        Vec3::new(self.0[0][2], self.0[1][2], self.0[2][2])
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.0[0][3], self.0[1][3], self.0[2][3])
    }

    /// Rotate a direction (ignores translation).
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.0[0][0] * v.x + self.0[0][1] * v.y + self.0[0][2] * v.z,
            self.0[1][0] * v.x + self.0[1][1] * v.y + self.0[1][2] * v.z,
            self.0[2][0] * v.x + self.0[2][1] * v.y + self.0[2][2] * v.z,
        )
    }

    /// Max-abs entry of R^T R - I for the rotation block.
    pub fn orthonormality_residual(&self) -> f64 {
        let cols = [self.basis_x(), self.basis_y(), self.basis_z()];
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = cols[i].dot(cols[j]) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

// Reduction terms folded per pass over an output row. Four chained
// multiply-adds per load/store pair keeps the kernels compute-bound.
const FOLD: usize = 4;

/// out[m x n] = a[m x k] * b[k x n], all row-major. `out` is overwritten.
///
/// Every output element accumulates over l in a fixed order no matter how
/// rows are distributed across threads, so results are bitwise independent
/// of the thread count.
pub fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        row.fill(0.0);
        let a_row = &a[i * k..(i + 1) * k];
        let mut l = 0;
        while l + 2 * FOLD <= k {
            let av: &[f64] = &a_row[l..l + 8];
            let b0 = &b[l * n..(l + 1) * n];
            let b1 = &b[(l + 1) * n..(l + 2) * n];
            let b2 = &b[(l + 2) * n..(l + 3) * n];
            let b3 = &b[(l + 3) * n..(l + 4) * n];
            let b4 = &b[(l + 4) * n..(l + 5) * n];
            let b5 = &b[(l + 5) * n..(l + 6) * n];
            let b6 = &b[(l + 6) * n..(l + 7) * n];
            let b7 = &b[(l + 7) * n..(l + 8) * n];
            for j in 0..n {
                let t = av[1].mul_add(b1[j], av[0] * b0[j]);
                let t = av[2].mul_add(b2[j], t);
                let t = av[3].mul_add(b3[j], t);
                let t = av[4].mul_add(b4[j], t);
                let t = av[5].mul_add(b5[j], t);
                let t = av[6].mul_add(b6[j], t);
                let t = av[7].mul_add(b7[j], t);
                row[j] += t;
            }
            l += 2 * FOLD;
        }
        while l + FOLD <= k {
            let (a0, a1, a2, a3) = (a_row[l], a_row[l + 1], a_row[l + 2], a_row[l + 3]);
            let b0 = &b[l * n..(l + 1) * n];
            let b1 = &b[(l + 1) * n..(l + 2) * n];
            let b2 = &b[(l + 2) * n..(l + 3) * n];
            let b3 = &b[(l + 3) * n..(l + 4) * n];
            for j in 0..n {
                let t = a1.mul_add(b1[j], a0 * b0[j]);
                let t = a2.mul_add(b2[j], t);
                let t = a3.mul_add(b3[j], t);
                row[j] += t;
            }
            l += FOLD;
        }
        while l < k {
            let av = a_row[l];
            let b_row = &b[l * n..(l + 1) * n];
            for (o, &bv) in row.iter_mut().zip(b_row) {
                *o = av.mul_add(bv, *o);
            }
            l += 1;
        }
    });
}

/// out[k x n] = a^T[k x m] * b[m x n] with a stored row-major as [m x k].
/// This is the weight-gradient product. Every output element accumulates
/// over the batch dimension in ascending index order regardless of the
/// execution strategy, so results are thread-count independent.
pub fn matmul_at(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), m * n);
    assert_eq!(out.len(), k * n);
    // Rank-group accumulation streams a and b exactly once and keeps the
    // accumulator hot; the column-sweep alternative re-reads `a` with a
    // k-sized stride for every output row, which is memory-bound. Four
    // batch rows fold per pass, one store per four multiply-adds.
    let body = |out: &mut [f64], l0: usize, width: usize| {
        out.fill(0.0);
        let mut i = 0;
        while i + FOLD <= m {
            let b0 = &b[i * n..(i + 1) * n];
            let b1 = &b[(i + 1) * n..(i + 2) * n];
            let b2 = &b[(i + 2) * n..(i + 3) * n];
            let b3 = &b[(i + 3) * n..(i + 4) * n];
            for dl in 0..width {
                let l = l0 + dl;
                let a0 = a[i * k + l];
                let a1 = a[(i + 1) * k + l];
                let a2 = a[(i + 2) * k + l];
                let a3 = a[(i + 3) * k + l];
                let o_row = &mut out[dl * n..(dl + 1) * n];
                for j in 0..n {
                    let t = a0.mul_add(b0[j], o_row[j]);
                    let t = a1.mul_add(b1[j], t);
                    let t = a2.mul_add(b2[j], t);
                    o_row[j] = a3.mul_add(b3[j], t);
                }
            }
            i += FOLD;
        }
        while i < m {
            let b_row = &b[i * n..(i + 1) * n];
            for dl in 0..width {
                let alv = a[i * k + l0 + dl];
                let o_row = &mut out[dl * n..(dl + 1) * n];
                for (o, &bv) in o_row.iter_mut().zip(b_row) {
                    *o = alv.mul_add(bv, *o);
                }
            }
            i += 1;
        }
    };
    if rayon::current_num_threads() <= 1 || k * n < 4096 {
        body(out, 0, k);
    } else {
        // each chunk of output rows sweeps the full batch independently;
        // per-element accumulation order is unchanged
        out.par_chunks_mut(16 * n)
            .enumerate()
            .for_each(|(chunk, rows)| {
                body(rows, chunk * 16, rows.len() / n);
            });
    }
}

/// out[m x k] = a[m x n] * b^T[n x k] with b stored row-major as [k x n].
/// This is the input-gradient product. The small operand transposes once
/// so the bulk of the work runs through the tiled [`matmul`] kernel.
pub fn matmul_bt(a: &[f64], m: usize, n: usize, b: &[f64], k: usize, out: &mut [f64]) {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * k);
    let mut b_t = vec![0.0; n * k];
    for l in 0..k {
        for j in 0..n {
            b_t[j * k + l] = b[l * n + j];
        }
    }
    matmul(a, m, n, &b_t, k, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive_matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a[i * k + l] * b[l * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    #[test]
    fn matmul_variants_agree_with_naive() {
        let mut rng = Rng::seed_from(1);
        let (m, k, n) = (7, 5, 9);
        let a: Vec<f64> = (0..m * k).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let mut out = vec![0.0; m * n];
        matmul(&a, m, k, &b, n, &mut out);
        let expect = naive_matmul(&a, m, k, &b, n);
        for (x, y) in out.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }

        // a^T * c where a is [m x k] and c is [m x n]
        let c: Vec<f64> = (0..m * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut at_c = vec![0.0; k * n];
        matmul_at(&a, m, k, &c, n, &mut at_c);
        let mut a_t = vec![0.0; k * m];
        for i in 0..m {
            for l in 0..k {
                a_t[l * m + i] = a[i * k + l];
            }
        }
        let expect = naive_matmul(&a_t, k, m, &c, n);
        for (x, y) in at_c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }

        // d * b^T where d is [m x n] and b is [k x n]
        let d: Vec<f64> = (0..m * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut d_bt = vec![0.0; m * k];
        matmul_bt(&d, m, n, &b, k, &mut d_bt);
        let mut b_t = vec![0.0; n * k];
        for l in 0..k {
            for j in 0..n {
                b_t[j * k + l] = b[l * n + j];
            }
        }
        let expect = naive_matmul(&d, m, n, &b_t, k);
        for (x, y) in d_bt.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lookat_style_basis_is_orthonormal() {
        let fwd = Vec3::new(0.3, -0.5, -0.2).normalized();
        let up = Vec3::new(0.0, 0.0, 1.0);
        let z = -fwd;
        let x = up.cross(z).normalized();
        let y = z.cross(x);
        let m = Mat4::from_basis(x, y, z, Vec3::new(1.0, 2.0, 3.0));
        assert!(m.orthonormality_residual() < 1e-12);
    }
}

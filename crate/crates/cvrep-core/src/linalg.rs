//! Small dense complex matrices: products, exponentials and Hermitian spectra.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::{Float, Zero};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Top-left `rows x cols` block.
    pub fn crop(&self, rows: usize, cols: usize) -> CMatrix {
        assert!(rows <= self.rows && cols <= self.cols);
        let mut out = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            out.data[i * cols..(i + 1) * cols]
                .copy_from_slice(&self.data[i * self.cols..i * self.cols + cols]);
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &CMatrix) -> CMatrix {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let norm = a.norm_one();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let mut x = a.clone();
    x.scale(Complex64::new(scale, 0.0));
    let mut result = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    for k in 1..=24 {
        term = term.matmul(&x);
        term.scale(Complex64::new(1.0 / k as f64, 0.0));
        for (r, t) in result.data.iter_mut().zip(&term.data) {
            *r += t;
        }
        if term.norm_one() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    result
}

/// Eigenvalues of a Hermitian matrix (cyclic complex Jacobi), ascending.
pub fn hermitian_eigenvalues(h: &CMatrix) -> Vec<f64> {
    assert_eq!(h.rows, h.cols);
    let n = h.rows;
    let mut a = h.clone();
    for i in 0..n {
        for j in 0..i {
            let avg = (a.get(i, j) + a.get(j, i).conj()) * 0.5;
            a.set(i, j, avg);
            a.set(j, i, avg.conj());
        }
        let d = a.get(i, i).re;
        a.set(i, i, Complex64::new(d, 0.0));
    }
    let total: f64 = a.data.iter().map(|v| v.norm_sqr()).sum();
    let tol = 1e-30 * total.max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).norm_sqr())
            .sum();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let h = apq.norm();
                if h == 0.0 {
                    continue;
                }
                // phase q so that a[p][q] becomes real and positive
                let ph = apq / h;
                for r in 0..n {
                    let v = a.get(r, q) * ph.conj();
                    a.set(r, q, v);
                }
                for c in 0..n {
                    let v = a.get(q, c) * ph;
                    a.set(q, c, v);
                }
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let tau = (aqq - app) / (2.0 * h);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for r in 0..n {
                    let vp = a.get(r, p);
                    let vq = a.get(r, q);
                    a.set(r, p, vp * c - vq * s);
                    a.set(r, q, vp * s + vq * c);
                }
                for col in 0..n {
                    let vp = a.get(p, col);
                    let vq = a.get(q, col);
                    a.set(p, col, vp * c - vq * s);
                    a.set(q, col, vp * s + vq * c);
                }
                a.set(p, q, Complex64::zero());
                a.set(q, p, Complex64::zero());
                a.set(p, p, Complex64::new(app - t * h, 0.0));
                a.set(q, q, Complex64::new(aqq + t * h, 0.0));
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

pub type Mat4 = [[f64; 4]; 4];

pub fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn det4(m: &Mat4) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in (col + 1)..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

pub fn block(m: &Mat4, r: usize, c: usize) -> [[f64; 2]; 2] {
    [
        [m[2 * r][2 * c], m[2 * r][2 * c + 1]],
        [m[2 * r + 1][2 * c], m[2 * r + 1][2 * c + 1]],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn expm_of_diagonal() {
        let mut a = CMatrix::zeros(2, 2);
        a.set(0, 0, c(1.0, 0.0));
        a.set(1, 1, c(0.0, 2.0));
        let e = expm(&a);
        assert!((e.get(0, 0) - c(core::f64::consts::E, 0.0)).norm() < 1e-13);
        assert!((e.get(1, 1) - c(2.0f64.cos(), 2.0f64.sin())).norm() < 1e-13);
        assert!(e.get(0, 1).norm() < 1e-15);
    }

    #[test]
    fn expm_rotation_generator() {
        // exp([[0,-t],[t,0]]) is a rotation by t
        let t = 3.7;
        let mut a = CMatrix::zeros(2, 2);
        a.set(0, 1, c(-t, 0.0));
        a.set(1, 0, c(t, 0.0));
        let e = expm(&a);
        assert!((e.get(0, 0).re - t.cos()).abs() < 1e-12);
        assert!((e.get(1, 0).re - t.sin()).abs() < 1e-12);
    }

    #[test]
    fn jacobi_known_spectrum() {
        // [[2, i],[-i, 2]] has eigenvalues 1 and 3
        let mut h = CMatrix::zeros(2, 2);
        h.set(0, 0, c(2.0, 0.0));
        h.set(1, 1, c(2.0, 0.0));
        h.set(0, 1, c(0.0, 1.0));
        h.set(1, 0, c(0.0, -1.0));
        let ev = hermitian_eigenvalues(&h);
        assert!((ev[0] - 1.0).abs() < 1e-13 && (ev[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn jacobi_trace_and_frobenius() {
        let n = 7;
        let mut h = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = if i == j {
                    c((i as f64).sin() * 3.0, 0.0)
                } else {
                    c(((i * 7 + j) as f64).cos(), ((i + 3 * j) as f64).sin())
                };
                h.set(i, j, v);
                h.set(j, i, v.conj());
            }
        }
        let ev = hermitian_eigenvalues(&h);
        let tr: f64 = ev.iter().sum();
        let fro: f64 = ev.iter().map(|x| x * x).sum();
        assert!((tr - h.trace().re).abs() < 1e-11);
        let fro_h: f64 = h.data.iter().map(|v| v.norm_sqr()).sum();
        assert!((fro - fro_h).abs() < 1e-10);
    }

    #[test]
    fn det4_matches_block_diagonal() {
        let m = [
            [2.0, 1.0, 0.0, 0.0],
            [1.0, 3.0, 0.0, 0.0],
            [0.0, 0.0, 4.0, 0.5],
            [0.0, 0.0, 0.5, 1.0],
        ];
        assert!((det4(&m) - 5.0 * 3.75).abs() < 1e-12);
    }
}

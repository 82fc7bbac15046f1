//! Dense component storage for antisymmetric tensors and their pointwise
//! pullbacks by linear maps.

use crate::error::{Error, Result};
use crate::multiindex::{binomial, index_sets, rank};
use nalgebra::DMatrix;

/// Component values of a degree-k antisymmetric object over the sorted
/// multi-index set of a dim-n chart (lexicographic order).
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub dim: usize,
    pub degree: usize,
    pub data: Vec<f64>,
}

impl Components {
    pub fn zeros(dim: usize, degree: usize) -> Self {
        Self {
            dim,
            degree,
            data: vec![0.0; binomial(dim, degree)],
        }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        Self {
            dim,
            degree: 0,
            data: vec![value],
        }
    }

    pub fn from_values(dim: usize, degree: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != binomial(dim, degree) {
            return Err(Error::DimensionMismatch {
                expected: binomial(dim, degree),
                got: data.len(),
            });
        }
        Ok(Self { dim, degree, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.degree, 0);
        self.data[0]
    }

    pub fn get(&self, set: &[usize]) -> f64 {
        self.data[rank(self.dim, set)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn add_assign_scaled(&mut self, other: &Self, factor: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    /// Pullback of covariant components by the linear map with matrix `j`
    /// (rows = target coordinates, columns = source coordinates):
    /// `(pullback)[I] = sum_J comp[J] * det(j[J rows, I cols])`.
    pub fn pullback_covariant(&self, j: &DMatrix<f64>) -> Self {
        pullback_by_minors(self, j)
    }

    /// Pullback of contravariant components: same minor formula but with the
    /// inverse differential, `(pullback)[I] = sum_J comp[J] * det(jinv[I rows, J cols])`.
    pub fn pullback_contravariant(&self, j_inv: &DMatrix<f64>) -> Self {
        pullback_by_minors_transposed(self, j_inv)
    }
}

fn minor(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    det_small(&gather(m, rows, cols), rows.len())
}

fn gather(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    let k = rows.len();
    let mut out = vec![0.0; k * k];
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            out[a * k + b] = m[(r, c)];
        }
    }
    out
}

/// Determinant of a small dense k x k matrix stored row-major.
pub fn det_small(a: &[f64], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            // cofactor expansion along the first row; k <= 5 in practice
            let mut acc = 0.0;
            let mut sub = vec![0.0; (k - 1) * (k - 1)];
            for c in 0..k {
                let mut idx = 0;
                for r in 1..k {
                    for cc in 0..k {
                        if cc == c {
                            continue;
                        }
                        sub[idx] = a[r * k + cc];
                        idx += 1;
                    }
                }
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * a[c] * det_small(&sub, k - 1);
            }
            acc
        }
    }
}

/// Gradient of `det` with respect to the matrix entries (cofactor matrix).
pub fn det_grad_small(a: &[f64], k: usize) -> Vec<f64> {
    let mut grad = vec![0.0; k * k];
    if k == 0 {
        return grad;
    }
    if k == 1 {
        grad[0] = 1.0;
        return grad;
    }
    let mut sub = vec![0.0; (k - 1) * (k - 1)];
    for r in 0..k {
        for c in 0..k {
            let mut idx = 0;
            for rr in 0..k {
                if rr == r {
                    continue;
                }
                for cc in 0..k {
                    if cc == c {
                        continue;
                    }
                    sub[idx] = a[rr * k + cc];
                    idx += 1;
                }
            }
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            grad[r * k + c] = sign * det_small(&sub, k - 1);
        }
    }
    grad
}

fn pullback_by_minors(comp: &Components, j: &DMatrix<f64>) -> Components {
    let dim = comp.dim;
    let k = comp.degree;
    if k == 0 {
        return comp.clone();
    }
    let sets = index_sets(dim, k);
    let mut out = Components::zeros(dim, k);
    for (ti, target) in sets.iter().enumerate() {
        let mut acc = 0.0;
        for (si, source) in sets.iter().enumerate() {
            let v = comp.data[si];
            if v != 0.0 {
                acc += v * minor(j, source, target);
            }
        }
        out.data[ti] = acc;
    }
    out
}

fn pullback_by_minors_transposed(comp: &Components, j_inv: &DMatrix<f64>) -> Components {
    let dim = comp.dim;
    let k = comp.degree;
    if k == 0 {
        return comp.clone();
    }
    let sets = index_sets(dim, k);
    let mut out = Components::zeros(dim, k);
    for (ti, target) in sets.iter().enumerate() {
        let mut acc = 0.0;
        for (si, source) in sets.iter().enumerate() {
            let v = comp.data[si];
            if v != 0.0 {
                acc += v * minor(j_inv, target, source);
            }
        }
        out.data[ti] = acc;
    }
    out
}

/// Per-component partial derivatives: entry `[c * dim + axis]` is the
/// derivative of component `c` along `axis`.
#[derive(Debug, Clone)]
pub struct ComponentJacobian {
    pub dim: usize,
    pub degree: usize,
    pub data: Vec<f64>,
}

impl ComponentJacobian {
    pub fn zeros(dim: usize, degree: usize) -> Self {
        Self {
            dim,
            degree,
            data: vec![0.0; binomial(dim, degree) * dim],
        }
    }

    pub fn entry(&self, comp: usize, axis: usize) -> f64 {
        self.data[comp * self.dim + axis]
    }

    pub fn entry_mut(&mut self, comp: usize, axis: usize) -> &mut f64 {
        &mut self.data[comp * self.dim + axis]
    }

    pub fn add_assign_scaled(&mut self, other: &Self, factor: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn covariant_pullback_matches_direct_evaluation() {
        // 2-form dx^dy on R^3 pulled back by a generic linear map equals the
        // alternating sum evaluated on image basis vectors.
        let j = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -0.3, 1.0, 0.7, 0.2, -0.1, 1.3]);
        let comp = Components::from_values(3, 2, vec![1.0, 0.0, 0.0]).unwrap(); // dx0 ^ dx1
        let pb = comp.pullback_covariant(&j);
        // (f* (dx0^dx1))(e_a, e_b) = J[0,a] J[1,b] - J[0,b] J[1,a]
        let sets = index_sets(3, 2);
        for (i, s) in sets.iter().enumerate() {
            let expect = j[(0, s[0])] * j[(1, s[1])] - j[(0, s[1])] * j[(1, s[0])];
            assert_abs_diff_eq!(pb.data[i], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn contravariant_pullback_of_vector_uses_inverse() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]); // rotation by -pi/2
        let j_inv = j.clone().try_inverse().unwrap();
        let v = Components::from_values(2, 1, vec![1.0, 0.0]).unwrap();
        // (phi* V)(x) = (Dphi)^{-1} V = first column of the inverse
        let pb = v.pullback_contravariant(&j_inv);
        assert_abs_diff_eq!(pb.data[0], j_inv[(0, 0)], epsilon = 1e-14);
        assert_abs_diff_eq!(pb.data[1], j_inv[(1, 0)], epsilon = 1e-14);
    }

    #[test]
    fn det_grad_matches_finite_differences() {
        let a = [1.0, 2.0, 0.5, -0.3, 1.5, 0.7, 0.2, -0.1, 1.3];
        let g = det_grad_small(&a, 3);
        let h = 1e-6;
        for i in 0..9 {
            let mut ap = a;
            let mut am = a;
            ap[i] += h;
            am[i] -= h;
            let fd = (det_small(&ap, 3) - det_small(&am, 3)) / (2.0 * h);
            assert_abs_diff_eq!(g[i], fd, epsilon = 1e-8);
        }
    }
}

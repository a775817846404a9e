//! Small dense symmetric linear algebra.
//!
//! Everything here works on row-major `dim × dim` slices. Eigenpairs come from
//! cyclic Jacobi rotations, which is accurate to a few ulps for the tiny
//! matrices (d ≤ 16) that appear as diffusion rates.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Relative PSD tolerance: eigenvalues down to `-TOL_PSD_REL * trace` are
/// treated as roundoff and clamped to zero.
pub const TOL_PSD_REL: f64 = 1e-9;

const MAX_SWEEPS: usize = 64;

/// Symmetric positive semidefinite matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Validates symmetry and positive semidefiniteness. Entries are
    /// symmetrized so the stored form is exactly symmetric.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self::symmetric(dim, data)?;
        let tol = psd_tol(&m.data, dim);
        let (vals, _) = sym_eigen(dim, &m.data);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::NotPsd { min_eigenvalue: min, tol });
        }
        Ok(m)
    }

    /// Validates symmetry only; used for intermediate products that are PSD
    /// by construction.
    pub fn symmetric(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let scale = data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = TOL_PSD_REL * scale;
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (x, y) = (data[i * dim + j], data[j * dim + i]);
                worst = worst.max((x - y).abs());
                let avg = 0.5 * (x + y);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        if worst > tol {
            return Err(Error::NotSymmetric { max_asymmetry: worst, tol });
        }
        Ok(SymMatrix { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        SymMatrix { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(self.dim, &self.data, x)
    }

    /// Eigenvalues (ascending) and the matching eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<f64>, Vec<f64>) {
        sym_eigen(self.dim, &self.data)
    }
}

fn psd_tol(data: &[f64], dim: usize) -> f64 {
    let trace: f64 = (0..dim).map(|i| data[i * dim + i]).sum();
    TOL_PSD_REL * trace.max(0.0)
}

pub fn mat_vec(dim: usize, m: &[f64], x: &[f64]) -> Vec<f64> {
    (0..dim).map(|i| (0..dim).map(|j| m[i * dim + j] * x[j]).sum()).collect()
}

pub fn mat_mul(dim: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    libm::sqrt(dot(x, x))
}

/// Cyclic Jacobi eigen-decomposition. Returns ascending eigenvalues and a
/// row-major matrix whose columns are the eigenvectors.
pub fn sym_eigen(dim: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut a = data.to_vec();
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..dim {
            for q in (p + 1)..dim {
                off += a[p * dim + q] * a[p * dim + q];
            }
        }
        if off <= 1e-34 * total || off == 0.0 {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sgn = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sgn / (theta.abs() + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..dim {
                    let (x, y) = (a[k * dim + p], a[k * dim + q]);
                    a[k * dim + p] = c * x - s * y;
                    a[k * dim + q] = s * x + c * y;
                }
                for k in 0..dim {
                    let (x, y) = (a[p * dim + k], a[q * dim + k]);
                    a[p * dim + k] = c * x - s * y;
                    a[q * dim + k] = s * x + c * y;
                }
                for k in 0..dim {
                    let (x, y) = (v[k * dim + p], v[k * dim + q]);
                    v[k * dim + p] = c * x - s * y;
                    v[k * dim + q] = s * x + c * y;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| a[i * dim + i].total_cmp(&a[j * dim + j]));
    let vals = order.iter().map(|&i| a[i * dim + i]).collect();
    let mut vecs = vec![0.0; dim * dim];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..dim {
            vecs[k * dim + new] = v[k * dim + old];
        }
    }
    (vals, vecs)
}

/// Eigenpairs kept by the pseudoinverse: `(eigenvalue, column index)`.
fn retained(dim: usize, data: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let tol = psd_tol(data, dim);
    let (mut vals, vecs) = sym_eigen(dim, data);
    if let Some(&min) = vals.first() {
        if min < -tol {
            return Err(Error::NotPsd { min_eigenvalue: min, tol });
        }
    }
    for v in vals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let max = vals.last().copied().unwrap_or(0.0);
    let cutoff = dim as f64 * f64::EPSILON * max;
    Ok((vals, vecs, cutoff))
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix.
pub fn pinv(c: &SymMatrix) -> Result<SymMatrix> {
    let dim = c.dim;
    let (vals, vecs, cutoff) = retained(dim, &c.data)?;
    let mut out = vec![0.0; dim * dim];
    for (k, &mu) in vals.iter().enumerate() {
        if mu <= cutoff || mu == 0.0 {
            continue;
        }
        let inv = 1.0 / mu;
        for i in 0..dim {
            let vi = vecs[i * dim + k] * inv;
            for j in 0..dim {
                out[i * dim + j] += vi * vecs[j * dim + k];
            }
        }
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let avg = 0.5 * (out[i * dim + j] + out[j * dim + i]);
            out[i * dim + j] = avg;
            out[j * dim + i] = avg;
        }
    }
    Ok(SymMatrix { dim, data: out })
}

/// Orthogonal projection of `x` onto the range of `c`, computed as `c c⁺ x`.
pub fn range_project(c: &SymMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != c.dim {
        return Err(Error::DimensionMismatch { expected: c.dim, got: x.len() });
    }
    let p = pinv(c)?;
    Ok(c.mul_vec(&p.mul_vec(x)))
}

/// Splits a drift `a = cλ + ν` with `λ = c⁺a` and `ν ∈ Ker(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    /// `λᵀcλ`, summed from nonnegative terms so it is never negative.
    pub quad: f64,
}

pub fn decompose(c: &SymMatrix, a: &[f64]) -> Result<Decomposition> {
    let mut lambda = vec![0.0; c.dim];
    let mut nu = vec![0.0; c.dim];
    let quad = decompose_into(c.dim, &c.data, a, &mut lambda, &mut nu)?;
    Ok(Decomposition { lambda, nu, quad })
}

/// Allocation-light version of [`decompose`] for hot loops. `c` must be
/// symmetric; returns `λᵀcλ`.
pub fn decompose_into(
    dim: usize,
    c: &[f64],
    a: &[f64],
    lambda: &mut [f64],
    nu: &mut [f64],
) -> Result<f64> {
    if a.len() != dim || c.len() != dim * dim || lambda.len() != dim || nu.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: a.len() });
    }
    if dim == 1 {
        let (c0, a0) = (c[0], a[0]);
        if c0 < 0.0 {
            return Err(Error::NotPsd { min_eigenvalue: c0, tol: 0.0 });
        }
        if c0 > 0.0 {
            let l = a0 / c0;
            lambda[0] = l;
            nu[0] = a0 - c0 * l;
            return Ok(c0 * l * l);
        }
        lambda[0] = 0.0;
        nu[0] = a0;
        return Ok(0.0);
    }
    let (vals, vecs, cutoff) = retained(dim, c)?;
    lambda.iter_mut().for_each(|x| *x = 0.0);
    let mut quad = 0.0;
    for (k, &mu) in vals.iter().enumerate() {
        if mu <= cutoff || mu == 0.0 {
            continue;
        }
        let proj: f64 = (0..dim).map(|i| vecs[i * dim + k] * a[i]).sum();
        quad += proj * proj / mu;
        let coef = proj / mu;
        for i in 0..dim {
            lambda[i] += coef * vecs[i * dim + k];
        }
    }
    for i in 0..dim {
        let ci: f64 = (0..dim).map(|j| c[i * dim + j] * lambda[j]).sum();
        nu[i] = a[i] - ci;
    }
    Ok(quad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn scalar_inverse() {
        let c = SymMatrix::new(1, vec![2.0]).unwrap();
        assert_eq!(pinv(&c).unwrap().as_slice(), &[0.5]);
    }

    #[test]
    fn zero_matrix_pinv_is_zero() {
        let c = SymMatrix::zeros(2);
        assert_eq!(pinv(&c).unwrap().as_slice(), &[0.0; 4]);
    }

    #[test]
    fn rank_one_ones() {
        let c = SymMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let p = pinv(&c).unwrap();
        assert!(close(p.as_slice(), &[0.25; 4], 1e-15));
    }

    #[test]
    fn projections() {
        let id = SymMatrix::identity(2);
        assert!(close(&range_project(&id, &[3.0, -1.0]).unwrap(), &[3.0, -1.0], 1e-15));
        let ones = SymMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(close(&range_project(&ones, &[1.0, 0.0]).unwrap(), &[0.5, 0.5], 1e-15));
        let z = SymMatrix::zeros(3);
        assert_eq!(range_project(&z, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            SymMatrix::new(2, vec![1.0, 0.5, 0.0, 1.0]),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(SymMatrix::new(2, vec![1.0, 0.0, 0.0, -1.0]), Err(Error::NotPsd { .. })));
        let c = SymMatrix::identity(2);
        assert!(matches!(range_project(&c, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let c = SymMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0 - 1e-12]).unwrap();
        let d = decompose(&c, &[1.0, 1.0]).unwrap();
        assert!(d.quad >= 0.0);
    }

    #[test]
    fn eigen_of_diagonal() {
        let (vals, _) = sym_eigen(3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn scalar_fast_path_matches_general() {
        let mut l = [0.0];
        let mut n = [0.0];
        let q = decompose_into(1, &[4.0], &[2.0], &mut l, &mut n).unwrap();
        assert_eq!((l[0], n[0], q), (0.5, 0.0, 1.0));
        let q = decompose_into(1, &[0.0], &[2.0], &mut l, &mut n).unwrap();
        assert_eq!((l[0], n[0], q), (0.0, 2.0, 0.0));
    }
}

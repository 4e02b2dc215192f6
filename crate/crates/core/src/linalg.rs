//! Small dense helpers bridging ndarray and nalgebra.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

pub fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending, eigenvectors as columns.
pub fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Array1::zeros(0), Array2::zeros((0, 0)));
    }
    // symmetrize to absorb rounding asymmetry
    let m = to_nalgebra(a);
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// `f(A)` for symmetric `A` through its eigendecomposition.
pub fn sym_fn(a: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let (vals, vecs) = sym_eigen(a);
    let scaled = &vecs * &vals.mapv(f);
    scaled.dot(&vecs.t())
}

/// Orthonormal basis of the column span of `c`; columns whose residual norm falls
/// below `tol` after two Gram–Schmidt passes are dropped.
pub fn orthonormalize(c: &Array2<f64>, tol: f64) -> Array2<f64> {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for col in c.columns() {
        let mut v = col.to_owned();
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&v);
                v.scaled_add(-p, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > tol {
            basis.push(v / norm);
        }
    }
    let mut q = Array2::zeros((c.nrows(), basis.len()));
    for (j, b) in basis.iter().enumerate() {
        q.column_mut(j).assign(b);
    }
    q
}

use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Array2<f64>,
    /// Sample variance along each kept component.
    pub explained_variance: Array1<f64>,
    pub mean: Array1<f64>,
    /// `dims × L`
    pub components: Array2<f64>,
}

/// Principal-component projection through the `n × n` Gram matrix. Component
/// signs are fixed so each component's largest-magnitude entry is positive.
pub fn pca_project(points: &Array2<f64>, dims: usize) -> Result<Projection> {
    let (n, l) = points.dim();
    if n < 3 {
        return Err(Error::Input(format!("PCA needs at least 3 points, got {n}")));
    }
    if dims == 0 || dims > l.min(n - 1) {
        return Err(Error::Input(format!("cannot keep {dims} components of {n} points in R^{l}")));
    }
    let mean = points.mean_axis(Axis(0)).unwrap();
    let centered = points - &mean;
    let gram = centered.dot(&centered.t()) / (n - 1) as f64;
    let (vals, vecs) = sym_eigen(&gram);
    let mut components = Array2::zeros((dims, l));
    for k in 0..dims {
        let lam = vals[k].max(0.0);
        let mut u = centered.t().dot(&vecs.column(k));
        let norm = u.dot(&u).sqrt();
        if norm > 0.0 && lam > 0.0 {
            u /= norm;
        } else {
            u.fill(0.0);
        }
        let pivot = u.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            u.mapv_inplace(|x| -x);
        }
        components.row_mut(k).assign(&u);
    }
    let coords = centered.dot(&components.t());
    Ok(Projection {
        coords,
        explained_variance: vals.slice(ndarray::s![..dims]).mapv(|v| v.max(0.0)),
        mean,
        components,
    })
}

/// CSV rows `id,t,x,y` for a shared 2-D projection.
pub fn write_pca_csv(path: &Path, labels: &[(usize, usize)], coords: &Array2<f64>) -> Result<()> {
    if labels.len() != coords.nrows() || coords.ncols() < 2 {
        return Err(Error::Input("PCA labels do not match the coordinates".into()));
    }
    let mut out = String::from("id,t,x,y\n");
    for ((id, t), row) in labels.iter().zip(coords.rows()) {
        out.push_str(&format!("{id},{t},{:?},{:?}\n", row[0], row[1]));
    }
    crate::io::write_atomic(path, out.as_bytes())
}

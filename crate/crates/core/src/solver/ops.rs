//! Proximal operators and SVD helpers.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::svd::{svd, svd_scratch, ComputeSvdVectors};
use faer::diag::Diag;
use faer::{Mat, Par};
use ndarray::Array2;

use crate::{Error, Result};

struct Svd {
    u: Mat<f64>,
    s: Vec<f64>,
    v: Mat<f64>,
}

fn thin_svd(z: &Array2<f64>) -> Result<Svd> {
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            iteration: None,
            reason: "SVD input contains non-finite entries".into(),
        });
    }
    let (m, n) = z.dim();
    let k = m.min(n);
    let a = Mat::<f64>::from_fn(m, n, |i, j| z[(i, j)]);
    let mut u = Mat::<f64>::zeros(m, k);
    let mut v = Mat::<f64>::zeros(n, k);
    let mut s = Diag::<f64>::zeros(k);
    let thin = ComputeSvdVectors::Thin;
    let mut buf = MemBuffer::new(svd_scratch::<f64>(m, n, thin, thin, Par::Seq, Default::default()));
    svd(
        a.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Numerical {
        iteration: None,
        reason: format!("SVD did not converge: {e:?}"),
    })?;
    let s = (0..k).map(|i| s[i]).collect();
    Ok(Svd { u, s, v })
}

/// Singular values in non-increasing order.
pub fn singular_values(z: &Array2<f64>) -> Result<Vec<f64>> {
    Ok(thin_svd(z)?.s)
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(z: &Array2<f64>, rel_tol: f64) -> Result<usize> {
    let s = singular_values(z)?;
    let top = s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&x| x > rel_tol * top).count())
}

/// Sum of all singular values except the largest `r`.
pub fn truncated_nuclear_norm(z: &Array2<f64>, r: usize) -> Result<f64> {
    Ok(singular_values(z)?.iter().skip(r).sum())
}

/// Proximal map of the truncated nuclear norm: the top `r` singular values
/// are kept, the rest are soft-thresholded by `threshold`.
pub fn truncated_svt(z: &Array2<f64>, r: usize, threshold: f64) -> Result<Array2<f64>> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::param("threshold", format!("must be >= 0, got {threshold}")));
    }
    let (m, n) = z.dim();
    if m == 0 || n == 0 {
        return Ok(z.clone());
    }
    let Svd { u, s, v } = thin_svd(z)?;
    let shrunk: Vec<f64> = s
        .iter()
        .enumerate()
        .map(|(i, &x)| if i < r { x } else { (x - threshold).max(0.0) })
        .collect();
    let k = shrunk.iter().rposition(|&x| x > 0.0).map_or(0, |i| i + 1);
    if k == 0 {
        return Ok(Array2::zeros((m, n)));
    }
    let us = Mat::<f64>::from_fn(m, k, |i, j| u[(i, j)] * shrunk[j]);
    let out = us * v.get(.., ..k).transpose();
    Ok(Array2::from_shape_fn((m, n), |(i, j)| out[(i, j)]))
}

/// Elementwise `sgn(h) * max(|h| - tau, 0)`.
pub fn shrink(h: f64, tau: f64) -> f64 {
    if h > tau {
        h - tau
    } else if h < -tau {
        h + tau
    } else {
        0.0
    }
}

pub fn soft_threshold(h: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::param("tau", format!("must be >= 0, got {tau}")));
    }
    Ok(h.mapv(|x| shrink(x, tau)))
}

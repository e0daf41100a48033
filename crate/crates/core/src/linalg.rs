//! Small complex linear-algebra kernels shared by the beamforming and power
//! modules. Matrices are `nalgebra` dense types over `Complex64`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

/// `a^H b`.
#[inline]
pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}

pub fn zeros(m: usize) -> CVec {
    CVec::zeros(m)
}

/// Orthonormal basis for the column space of `m` by column-pivoted
/// Gram-Schmidt with reorthogonalisation. A direction counts as zero once
/// the largest remaining residual is at or below `eps_rank` times the
/// largest column norm.
pub fn column_space_basis(m: &CMat, eps_rank: f64) -> CMat {
    let rows = m.nrows();
    let mut residuals: Vec<CVec> = m.column_iter().map(|c| c.into_owned()).collect();
    let scale = residuals.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut basis: Vec<CVec> = Vec::new();
    if scale == 0.0 {
        return CMat::zeros(rows, 0);
    }
    while basis.len() < rows {
        let Some((pivot, norm)) = residuals
            .iter()
            .map(|r| r.norm())
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        if norm <= eps_rank * scale {
            break;
        }
        let mut q = residuals.swap_remove(pivot);
        for b in &basis {
            let c = inner(b, &q);
            q -= b * c;
        }
        let qn = q.norm();
        if qn <= eps_rank * scale {
            continue;
        }
        q /= C64::new(qn, 0.0);
        for r in residuals.iter_mut() {
            let c = inner(&q, r);
            *r -= &q * c;
        }
        basis.push(q);
    }
    if basis.is_empty() {
        CMat::zeros(rows, 0)
    } else {
        CMat::from_columns(&basis)
    }
}

/// `(I - A A^H) x` for a matrix `A` with orthonormal columns.
pub fn project_orthogonal(basis: &CMat, x: &CVec) -> CVec {
    if basis.ncols() == 0 {
        return x.clone();
    }
    let coeffs = basis.ad_mul(x);
    x - basis * coeffs
}

/// Gram-Schmidt basis used as an incremental numerical rank test.
#[derive(Debug, Clone)]
pub struct IncrementalBasis {
    vectors: Vec<CVec>,
    eps_rank: f64,
}

impl IncrementalBasis {
    pub fn new(eps_rank: f64) -> Self {
        Self {
            vectors: Vec::new(),
            eps_rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    /// Adds `x` if it is numerically independent of the current span.
    pub fn try_add(&mut self, x: &CVec) -> bool {
        let norm = x.norm();
        if norm == 0.0 {
            return false;
        }
        let mut r = x.clone();
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for q in &self.vectors {
                let c = inner(q, &r);
                r -= q * c;
            }
        }
        let rn = r.norm();
        if rn <= self.eps_rank * norm {
            return false;
        }
        self.vectors.push(r / C64::new(rn, 0.0));
        true
    }
}

/// Columns of `H (H^H H)^{-1}`, computed through a thin QR as `Q R^{-H}`.
/// Returns `None` when `H` is rank deficient.
pub fn zero_forcing_columns(h: &CMat) -> Option<CMat> {
    let n = h.ncols();
    if n == 0 {
        return Some(CMat::zeros(h.nrows(), 0));
    }
    if h.nrows() < n {
        return None;
    }
    let qr = h.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let identity = CMat::identity(n, n);
    let r_inv_h = r.adjoint().solve_lower_triangular(&identity)?;
    if r_inv_h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    Some(q * r_inv_h)
}

/// Normalises `x` to unit norm, or returns `None` for the zero vector.
pub fn normalized(x: &CVec) -> Option<CVec> {
    let n = x.norm();
    if n == 0.0 || !n.is_finite() {
        None
    } else {
        Some(x / C64::new(n, 0.0))
    }
}

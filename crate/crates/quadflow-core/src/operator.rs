//! Dense complex operators at desk scale (dimension <= 32) with certified
//! Hermitian / positive-semidefinite structure.
//!
//! Structure checks never trust the raw matrix: they symmetrize first and
//! record how much anti-Hermitian content was discarded, so a certification
//! carries the tolerance it was obtained at.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Hard cap on operator dimension; everything here is dense and direct.
pub const MAX_DIM: usize = 32;

/// Default certification tolerance, relative Frobenius.
pub const CERT_TOL: f64 = 1e-10;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone)]
pub struct Operator {
    mat: CMat,
    /// Tolerance the Hermitian certification was obtained at, if any.
    hermitian_at: Option<f64>,
    /// Tolerance the psd certification was obtained at, if any.
    psd_at: Option<f64>,
}

impl PartialEq for Operator {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

fn check_square(mat: &CMat) -> Result<usize> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::NotSquare {
            rows: mat.nrows(),
            cols: mat.ncols(),
        });
    }
    let dim = mat.nrows();
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::DimOutOfRange { dim, max: MAX_DIM });
    }
    Ok(dim)
}

/// Scale used to make Frobenius tolerances relative; never below 1 so the
/// zero matrix certifies trivially.
fn rel_scale(mat: &CMat) -> f64 {
    mat.norm().max(1.0)
}

impl Operator {
    pub fn new(mat: CMat) -> Result<Self> {
        check_square(&mat)?;
        Ok(Operator {
            mat,
            hermitian_at: None,
            psd_at: None,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Operator::new(CMat::zeros(dim, dim)).expect("dim checked by caller")
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Operator::new(CMat::identity(dim, dim)).expect("dim checked by caller");
        op.hermitian_at = Some(0.0);
        op.psd_at = Some(0.0);
        op
    }

    /// Row-major complex entries, the same layout as the matrix literal format.
    pub fn from_rows(dim: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimMismatch {
                left: entries.len(),
                right: dim * dim,
                context: "from_rows entry count",
            });
        }
        Operator::new(CMat::from_row_slice(dim, dim, entries))
    }

    /// Row-major real entries.
    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        let complex: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Operator::from_rows(dim, &complex)
    }

    /// Nested row-major literal, each entry a `[re, im]` pair.
    pub fn from_literal(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        let dim = rows.len();
        for row in rows {
            if row.len() != dim {
                return Err(Error::NotSquare {
                    rows: dim,
                    cols: row.len(),
                });
            }
        }
        let entries: Vec<Complex64> = rows
            .iter()
            .flat_map(|row| row.iter().map(|&[re, im]| Complex64::new(re, im)))
            .collect();
        Operator::from_rows(dim, &entries)
    }

    pub fn to_literal(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.dim())
            .map(|i| {
                (0..self.dim())
                    .map(|j| {
                        let z = self.mat[(i, j)];
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }

    pub fn hermitian_certified_at(&self) -> Option<f64> {
        self.hermitian_at
    }

    pub fn psd_certified_at(&self) -> Option<f64> {
        self.psd_at
    }

    pub fn frobenius(&self) -> f64 {
        self.mat.norm()
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            mat: self.mat.adjoint(),
            hermitian_at: self.hermitian_at,
            psd_at: self.psd_at,
        }
    }

    pub fn scale(&self, c: Complex64) -> Operator {
        Operator {
            mat: &self.mat * c,
            hermitian_at: None,
            psd_at: None,
        }
    }

    /// Frobenius norm of the anti-Hermitian part.
    pub fn asymmetry(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).norm() * 0.5
    }

    /// Hermitian part, together with the discarded anti-Hermitian norm.
    pub fn symmetrize(&self) -> (Operator, f64) {
        let herm = (&self.mat + self.mat.adjoint()) * Complex64::new(0.5, 0.0);
        let discarded = (&self.mat - &herm).norm();
        (
            Operator {
                mat: herm,
                hermitian_at: Some(0.0),
                psd_at: None,
            },
            discarded,
        )
    }

    /// Certify the operator Hermitian within `tol` (relative Frobenius).
    /// Returns the symmetrized operator with the flag set.
    pub fn certify_hermitian(&self, tol: f64) -> Result<Operator> {
        let (mut sym, discarded) = self.symmetrize();
        let rel = discarded / rel_scale(&self.mat);
        if rel > tol {
            return Err(Error::NotHermitian {
                asymmetry: rel,
                tol,
            });
        }
        sym.hermitian_at = Some(tol);
        Ok(sym)
    }

    /// Certify positive semidefiniteness within `tol` (relative eigenvalue
    /// floor). Implies the Hermitian certification.
    pub fn certify_psd(&self, tol: f64) -> Result<Operator> {
        let mut sym = self.certify_hermitian(tol)?;
        let min = sym.min_eig()?;
        if min < -tol * rel_scale(&sym.mat) {
            return Err(Error::NotPsd { min_eig: min, tol });
        }
        sym.psd_at = Some(tol);
        Ok(sym)
    }

    /// Eigendecomposition of the Hermitian part, eigenvalues ascending.
    /// Columns of the returned matrix are the matching orthonormal vectors.
    pub fn hermitian_eigen(&self) -> Result<(Vec<f64>, CMat)> {
        let (sym, _) = self.symmetrize();
        let eig = SymmetricEigen::new(sym.mat);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .expect("hermitian eigenvalues are finite")
        });
        let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let dim = self.dim();
        let mut vectors = CMat::zeros(dim, dim);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok((values, vectors))
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eig(&self) -> Result<f64> {
        let (values, _) = self.hermitian_eigen()?;
        Ok(values[0])
    }

    /// Eigenvalues of a general operator via the complex Schur form.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        // Hermitian-certified operators take the specialized path.
        if self.hermitian_at.is_some() {
            return Ok(self
                .hermitian_eigen()?
                .0
                .into_iter()
                .map(|x| Complex64::new(x, 0.0))
                .collect());
        }
        let schur =
            Schur::try_new(self.mat.clone(), 1e-14, 10_000).ok_or(Error::EigenFailed)?;
        let eig = schur.eigenvalues().ok_or(Error::EigenFailed)?;
        Ok(eig.iter().copied().collect())
    }
}

pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            left: a.dim(),
            right: b.dim(),
            context: "commutator",
        });
    }
    Operator::new(a.mat() * b.mat() - b.mat() * a.mat())
}

pub fn anticommutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            left: a.dim(),
            right: b.dim(),
            context: "anticommutator",
        });
    }
    Operator::new(a.mat() * b.mat() + b.mat() * a.mat())
}

/// Unique psd square root of a psd operator (Hermitian eigendecomposition;
/// eigenvalues inside the certification floor are clipped to zero).
pub fn psd_sqrt(a: &Operator, tol: f64) -> Result<Operator> {
    let certified = a.certify_psd(tol)?;
    let (values, vectors) = certified.hermitian_eigen()?;
    let roots: Vec<Complex64> = values
        .iter()
        .map(|&v| Complex64::new(v.max(0.0).sqrt(), 0.0))
        .collect();
    let diag = CMat::from_diagonal(&CVec::from_vec(roots));
    let mat = &vectors * diag * vectors.adjoint();
    let mut op = Operator::new(mat)?;
    let (sym, _) = op.symmetrize();
    op = sym;
    op.psd_at = Some(tol);
    Ok(op)
}

#[derive(Debug, Clone)]
pub struct PolarDecomposition {
    /// Unitary factor, completed from the singular-vector pairing even when
    /// the input is singular.
    pub w: Operator,
    /// Psd factor; `w * p` reconstructs the input.
    pub p: Operator,
    /// Number of singular values at or below the rank tolerance.
    pub rank_deficiency: usize,
}

/// Polar decomposition `A = W P` with unitary `W` and psd `P`, via SVD.
pub fn polar_decompose(a: &Operator) -> Result<PolarDecomposition> {
    let svd = SVD::new(a.mat().clone(), true, true);
    let u = svd.u.ok_or(Error::EigenFailed)?;
    let v_t = svd.v_t.ok_or(Error::EigenFailed)?;
    let sigma_max = svd.singular_values.max();
    let rank_tol = CERT_TOL * sigma_max.max(1.0);
    let rank_deficiency = svd
        .singular_values
        .iter()
        .filter(|&&s| s <= rank_tol)
        .count();
    let w = &u * &v_t;
    let diag = CMat::from_diagonal(&svd.singular_values.map(|s| Complex64::new(s, 0.0)));
    let p = v_t.adjoint() * diag * &v_t;
    let mut p_op = Operator::new(p)?;
    let (sym, _) = p_op.symmetrize();
    p_op = sym;
    p_op.psd_at = Some(CERT_TOL);
    Ok(PolarDecomposition {
        w: Operator::new(w)?,
        p: p_op,
        rank_deficiency,
    })
}

/// Solve `A X + X B = C` by Kronecker vectorization (column-stacked).
///
/// Requires the spectra of `A` and `-B` to be separated; the pencil is
/// rejected when the smallest eigenvalue sum is below `1e-12` relative to
/// the coefficient scale. The residual is checked against
/// `1e-10 * (|A| + |B|) * |X|` before returning.
pub fn solve_sylvester(a: &Operator, b: &Operator, c: &Operator) -> Result<Operator> {
    let n = a.dim();
    let m = b.dim();
    if c.mat().nrows() != n || c.mat().ncols() != m {
        return Err(Error::DimMismatch {
            left: c.dim(),
            right: n,
            context: "solve_sylvester right-hand side",
        });
    }
    let scale = a.frobenius() + b.frobenius();
    let eig_a = a.eigenvalues()?;
    let eig_b = b.eigenvalues()?;
    let mut separation = f64::INFINITY;
    for la in &eig_a {
        for lb in &eig_b {
            separation = separation.min((la + lb).norm());
        }
    }
    if separation <= 1e-12 * scale.max(1.0) {
        return Err(Error::SingularPencil { separation });
    }

    let id_n = CMat::identity(n, n);
    let id_m = CMat::identity(m, m);
    // vec(AX) = (I (x) A) vec X, vec(XB) = (B^T (x) I) vec X, column-stacked.
    let k = id_m.kronecker(a.mat()) + b.mat().transpose().kronecker(&id_n);
    let rhs = CVec::from_vec(c.mat().as_slice().to_vec());
    let sol = k.lu().solve(&rhs).ok_or(Error::SingularPencil {
        separation,
    })?;
    let x = CMat::from_column_slice(n, m, sol.as_slice());

    let residual = (a.mat() * &x + &x * b.mat() - c.mat()).norm();
    let bound = 1e-10 * scale.max(1.0) * x.norm().max(c.frobenius() / scale.max(1.0)).max(1e-300);
    if residual > bound.max(1e-300) {
        return Err(Error::ResidualBound { residual, bound });
    }
    Operator::new(x)
}

/// Inverse via LU; rejects matrices with tiny singular values.
pub fn inverse(a: &Operator) -> Result<Operator> {
    let svd_vals = a.mat().singular_values();
    let ratio = svd_vals.min() / svd_vals.max().max(1e-300);
    if !(ratio > 1e-13) {
        return Err(Error::Singular { ratio });
    }
    let inv = a
        .mat()
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Singular { ratio })?;
    Operator::new(inv)
}

// Pade-13 coefficients for the scaling-and-squaring exponential.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const PADE13_THETA: f64 = 5.371920351148152;

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling-and-squaring with a Pade-13 core.
/// The zero matrix maps to the identity exactly.
pub fn matrix_exp(a: &Operator) -> Operator {
    let dim = a.dim();
    let norm = one_norm(a.mat());
    if norm == 0.0 {
        return Operator::identity(dim);
    }
    let s = if norm > PADE13_THETA {
        (norm / PADE13_THETA).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.mat() / Complex64::new(2f64.powi(s as i32), 0.0);
    let id = CMat::identity(dim, dim);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);
    let num = &v + &u;
    let den = &v - &u;
    let mut f = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is well conditioned after scaling");
    for _ in 0..s {
        f = &f * &f;
    }
    Operator::new(f).expect("dimension preserved")
}

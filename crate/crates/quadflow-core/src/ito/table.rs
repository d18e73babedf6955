//! Multiplication tables for noise differentials.
//!
//! A table lists the labels of the driving differentials (plus the time
//! label), an involution pairing each label with its adjoint, a ±1
//! commutation sign per label, and the pairwise products
//! `dM_a dM_b = sum_e dM_e c_e(a,b)` with scalar coefficients. Products not
//! listed are zero, and any product involving the time label is zero.

use num_complex::Complex64;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ito::expr::{Coeff, ScalarSym, ONE};

/// Tolerance for certifying a numeric covariance matrix.
const SIGMA_TOL: f64 = 1e-12;

/// Label set with involution and commutation signs.
#[derive(Debug, Clone)]
pub struct NoiseBasis {
    time: String,
    noise: Vec<String>,
    involution: BTreeMap<String, String>,
    rho_sign: BTreeMap<String, i8>,
}

impl NoiseBasis {
    /// `noise` lists each differential label with its adjoint label and
    /// commutation sign; the involution must come out self-inverse.
    pub fn new(time: &str, noise: &[(&str, &str, i8)]) -> Result<Self> {
        let mut involution = BTreeMap::new();
        let mut rho_sign = BTreeMap::new();
        let mut labels = Vec::new();
        involution.insert(time.to_string(), time.to_string());
        rho_sign.insert(time.to_string(), 1);
        for (label, star, rho) in noise {
            if *label == time || labels.iter().any(|l| l == label) {
                return Err(Error::BadState {
                    reason: format!("duplicate noise label {label}"),
                });
            }
            if !matches!(rho, 1 | -1) {
                return Err(Error::BadState {
                    reason: format!("commutation sign for {label} must be +1 or -1"),
                });
            }
            labels.push(label.to_string());
            involution.insert(label.to_string(), star.to_string());
            rho_sign.insert(label.to_string(), *rho);
        }
        for (label, star) in &involution {
            let back = involution.get(star).ok_or_else(|| Error::UnknownLabel {
                label: star.clone(),
            })?;
            if back != label {
                return Err(Error::BadState {
                    reason: format!("involution is not self-inverse at {label}"),
                });
            }
            if rho_sign[label] != rho_sign[star] {
                return Err(Error::BadState {
                    reason: format!("commutation signs differ across the pair {label}/{star}"),
                });
            }
        }
        Ok(NoiseBasis {
            time: time.to_string(),
            noise: labels,
            involution,
            rho_sign,
        })
    }

    pub fn time_label(&self) -> &str {
        &self.time
    }

    pub fn noise_labels(&self) -> &[String] {
        &self.noise
    }
}

/// Product table over a noise basis.
#[derive(Debug, Clone)]
pub struct ItoTable {
    basis: NoiseBasis,
    products: BTreeMap<(String, String), Vec<(String, Coeff)>>,
    sigma: Option<[[Complex64; 2]; 2]>,
}

impl ItoTable {
    pub fn new(
        basis: NoiseBasis,
        products: BTreeMap<(String, String), Vec<(String, Coeff)>>,
    ) -> Result<Self> {
        for ((a, b), targets) in &products {
            for label in [a, b] {
                if *label == basis.time || !basis.noise.iter().any(|l| l == label) {
                    return Err(Error::UnknownLabel {
                        label: label.clone(),
                    });
                }
            }
            for (target, _) in targets {
                if *target != basis.time && !basis.noise.iter().any(|l| l == target) {
                    return Err(Error::UnknownLabel {
                        label: target.clone(),
                    });
                }
            }
        }
        Ok(ItoTable {
            basis,
            products,
            sigma: None,
        })
    }

    /// Annihilation/creation pair over vacuum: `dA dAdag = dt`, all other
    /// products zero, differentials commuting with adapted symbols.
    pub fn boson_fock() -> Self {
        Self::fock_pair("dA", "dAdag", 1)
    }

    /// Same table with anticommuting differentials.
    pub fn fermion_fock() -> Self {
        Self::fock_pair("dA", "dAdag", -1)
    }

    fn fock_pair(ann: &str, cre: &str, rho: i8) -> Self {
        let basis = NoiseBasis::new("dt", &[(ann, cre, rho), (cre, ann, rho)])
            .expect("static basis");
        let mut products = BTreeMap::new();
        products.insert(
            (ann.to_string(), cre.to_string()),
            vec![("dt".to_string(), Coeff::num(ONE))],
        );
        ItoTable::new(basis, products).expect("static table")
    }

    /// Time only; every stochastic sum is empty.
    pub fn no_noise() -> Self {
        let basis = NoiseBasis::new("dt", &[]).expect("static basis");
        ItoTable::new(basis, BTreeMap::new()).expect("static table")
    }

    /// Single self-adjoint classical noise with `dW dW = dt`.
    pub fn brownian() -> Self {
        Self::self_adjoint_noise("dW", ONE, 1)
    }

    /// Single self-adjoint noise `dM` with `dM dM = c0 dt`.
    pub fn single_noise(c0: Complex64, rho: i8) -> Self {
        Self::self_adjoint_noise("dM", c0, rho)
    }

    fn self_adjoint_noise(label: &str, c0: Complex64, rho: i8) -> Self {
        let basis = NoiseBasis::new("dt", &[(label, label, rho)]).expect("static basis");
        let mut products = BTreeMap::new();
        if c0 != Complex64::new(0.0, 0.0) {
            products.insert(
                (label.to_string(), label.to_string()),
                vec![("dt".to_string(), Coeff::num(c0))],
            );
        }
        ItoTable::new(basis, products).expect("static table")
    }

    /// Adjoint pair `dM1 = dM2*` whose products close on `dt` through a
    /// numeric covariance matrix:
    /// `dM1 dM2 = sigma22 dt`, `dM2 dM1 = sigma11 dt`,
    /// `dM2 dM2 = sigma12 dt`, `dM1 dM1 = sigma21 dt`.
    /// The covariance must be Hermitian positive semidefinite.
    pub fn levy_pair_numeric(sigma: [[Complex64; 2]; 2], rho: i8) -> Result<Self> {
        let scale = sigma
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(1.0, f64::max);
        let herm_defect = (sigma[0][1] - sigma[1][0].conj()).norm()
            .max(sigma[0][0].im.abs())
            .max(sigma[1][1].im.abs());
        if herm_defect > SIGMA_TOL * scale {
            return Err(Error::NotHermitian {
                asymmetry: herm_defect,
                tol: SIGMA_TOL * scale,
            });
        }
        let det = sigma[0][0].re * sigma[1][1].re - (sigma[0][1].conj() * sigma[0][1]).re;
        let min_entry = sigma[0][0].re.min(sigma[1][1].re);
        if min_entry < -SIGMA_TOL * scale || det < -SIGMA_TOL * scale * scale {
            return Err(Error::NotPsd {
                min_eig: min_entry.min(det),
                tol: SIGMA_TOL * scale,
            });
        }
        let basis =
            NoiseBasis::new("dt", &[("dM1", "dM2", rho), ("dM2", "dM1", rho)])?;
        let mut products = BTreeMap::new();
        let entries = [
            (("dM1", "dM2"), sigma[1][1]),
            (("dM2", "dM1"), sigma[0][0]),
            (("dM2", "dM2"), sigma[0][1]),
            (("dM1", "dM1"), sigma[1][0]),
        ];
        for ((a, b), value) in entries {
            if value != Complex64::new(0.0, 0.0) {
                products.insert(
                    (a.to_string(), b.to_string()),
                    vec![("dt".to_string(), Coeff::num(value))],
                );
            }
        }
        let mut table = ItoTable::new(basis, products)?;
        table.sigma = Some(sigma);
        Ok(table)
    }

    /// Vacuum pair (`dM1` annihilating): covariance `[[0,0],[0,1]]`,
    /// commuting differentials.
    pub fn levy_pair_boson() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self::levy_pair_numeric([[zero, zero], [zero, ONE]], 1).expect("static table")
    }

    /// Vacuum pair with anticommuting differentials.
    pub fn levy_pair_fermion() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self::levy_pair_numeric([[zero, zero], [zero, ONE]], -1).expect("static table")
    }

    /// Adjoint pair with four independent symbolic covariance entries
    /// `s11, s12, s21, s22` (no relations assumed between them).
    pub fn levy_pair_symbolic(rho: i8) -> Self {
        Self::levy_pair_from_syms(
            rho,
            Coeff::sym(ScalarSym::new("s11")),
            Coeff::sym(ScalarSym::new("s12")),
            Coeff::sym(ScalarSym::new("s21")),
            Coeff::sym(ScalarSym::new("s22")),
        )
    }

    /// Adjoint pair with a symbolic Hermitian covariance: real `s11`, `s22`,
    /// and `s21` identified with the conjugate of `s12`.
    pub fn levy_pair_symbolic_hermitian(rho: i8) -> Self {
        Self::levy_pair_from_syms(
            rho,
            Coeff::sym(ScalarSym::real("s11")),
            Coeff::sym(ScalarSym::new("s12")),
            Coeff::sym(ScalarSym::new("s12").conjugate()),
            Coeff::sym(ScalarSym::real("s22")),
        )
    }

    fn levy_pair_from_syms(rho: i8, s11: Coeff, s12: Coeff, s21: Coeff, s22: Coeff) -> Self {
        let basis = NoiseBasis::new("dt", &[("dM1", "dM2", rho), ("dM2", "dM1", rho)])
            .expect("static basis");
        let mut products = BTreeMap::new();
        let entries = [
            (("dM1", "dM2"), s22),
            (("dM2", "dM1"), s11),
            (("dM2", "dM2"), s12),
            (("dM1", "dM1"), s21),
        ];
        for ((a, b), coeff) in entries {
            products.insert(
                (a.to_string(), b.to_string()),
                vec![("dt".to_string(), coeff)],
            );
        }
        ItoTable::new(basis, products).expect("static table")
    }

    pub fn time_label(&self) -> &str {
        self.basis.time_label()
    }

    pub fn noise_labels(&self) -> &[String] {
        self.basis.noise_labels()
    }

    pub fn is_time(&self, label: &str) -> bool {
        label == self.basis.time
    }

    pub fn sigma(&self) -> Option<&[[Complex64; 2]; 2]> {
        self.sigma.as_ref()
    }

    pub fn check_label(&self, label: &str) -> Result<()> {
        if self.basis.involution.contains_key(label) {
            Ok(())
        } else {
            Err(Error::UnknownLabel {
                label: label.to_string(),
            })
        }
    }

    pub fn involute(&self, label: &str) -> Result<&str> {
        self.basis
            .involution
            .get(label)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownLabel {
                label: label.to_string(),
            })
    }

    pub fn rho_sign(&self, label: &str) -> Result<i8> {
        self.basis
            .rho_sign
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel {
                label: label.to_string(),
            })
    }

    /// Product `dM_a dM_b` as (target label, coefficient) pairs; an empty
    /// slice means the product is zero (always the case for the time label).
    pub fn product(&self, a: &str, b: &str) -> Result<&[(String, Coeff)]> {
        self.check_label(a)?;
        self.check_label(b)?;
        match self.products.get(&(a.to_string(), b.to_string())) {
            Some(v) => Ok(v.as_slice()),
            None => Ok(&[]),
        }
    }
}

//! Noncommutative symbolic expressions over operator words and noise
//! differentials.
//!
//! A term is (complex number × scalar-symbol monomial × optional noise
//! differential × word of operator symbols). The differential always sits on
//! the left of the word; moving it there across adapted symbols picks up the
//! table's commutation sign once per adapted symbol crossed. Canonical form
//! sorts terms, merges equal keys and drops zero coefficients, so structural
//! equality of canonical expressions is semantic equality.

use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ito::table::ItoTable;

pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Commuting scalar symbol; `real` symbols absorb conjugation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScalarSym {
    pub name: String,
    pub conj: bool,
    pub real: bool,
}

impl ScalarSym {
    pub fn new(name: &str) -> Self {
        ScalarSym {
            name: name.to_string(),
            conj: false,
            real: false,
        }
    }

    pub fn real(name: &str) -> Self {
        ScalarSym {
            name: name.to_string(),
            conj: false,
            real: true,
        }
    }

    pub fn conjugate(&self) -> Self {
        let mut s = self.clone();
        if !s.real {
            s.conj = !s.conj;
        }
        s
    }
}

/// Scalar coefficient: numeric factor times a monomial of scalar symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeff {
    pub num: Complex64,
    pub syms: Vec<ScalarSym>,
}

impl Coeff {
    pub fn num(num: Complex64) -> Self {
        Coeff { num, syms: vec![] }
    }

    pub fn sym(sym: ScalarSym) -> Self {
        Coeff {
            num: ONE,
            syms: vec![sym],
        }
    }
}

/// Operator letter. `adapted` marks symbols that pick up the commutation
/// sign when a noise differential crosses them; `hermitian` symbols absorb
/// the dagger.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct OpSym {
    pub name: String,
    pub dagger: bool,
    pub adapted: bool,
    pub hermitian: bool,
}

impl OpSym {
    pub fn adapted(name: &str) -> Self {
        OpSym {
            name: name.to_string(),
            dagger: false,
            adapted: true,
            hermitian: false,
        }
    }

    pub fn constant(name: &str) -> Self {
        OpSym {
            name: name.to_string(),
            dagger: false,
            adapted: false,
            hermitian: false,
        }
    }

    pub fn hermitian(mut self) -> Self {
        self.hermitian = true;
        self
    }

    pub fn dag(mut self) -> Self {
        if !self.hermitian {
            self.dagger = !self.dagger;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub num: Complex64,
    pub syms: Vec<ScalarSym>,
    pub diff: Option<String>,
    pub word: Vec<OpSym>,
}

impl Term {
    fn cmp_key(&self, other: &Term) -> Ordering {
        self.diff
            .cmp(&other.diff)
            .then_with(|| self.word.cmp(&other.word))
            .then_with(|| self.syms.cmp(&other.syms))
    }
}

/// Canonical sum of terms. Construction always canonicalizes, so two equal
/// expressions have identical term lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NcExpr {
    terms: Vec<Term>,
}

fn canonicalize(mut terms: Vec<Term>) -> Vec<Term> {
    for t in &mut terms {
        for s in &mut t.word {
            if s.hermitian {
                s.dagger = false;
            }
        }
        for s in &mut t.syms {
            if s.real {
                s.conj = false;
            }
        }
        t.syms.sort();
    }
    terms.sort_by(Term::cmp_key);
    let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
    for t in terms {
        match merged.last_mut() {
            Some(last) if last.cmp_key(&t) == Ordering::Equal => last.num += t.num,
            _ => merged.push(t),
        }
    }
    merged.retain(|t| t.num.re != 0.0 || t.num.im != 0.0);
    merged
}

fn crossing_sign(table: &ItoTable, label: &str, word: &[OpSym]) -> Result<Complex64> {
    if table.rho_sign(label)? == 1 {
        return Ok(ONE);
    }
    let odd = word.iter().filter(|s| s.adapted).count() % 2 == 1;
    Ok(if odd { -ONE } else { ONE })
}

impl NcExpr {
    pub fn from_terms(terms: Vec<Term>) -> Self {
        NcExpr {
            terms: canonicalize(terms),
        }
    }

    pub fn zero() -> Self {
        NcExpr { terms: vec![] }
    }

    pub fn one() -> Self {
        NcExpr::scalar(ONE)
    }

    pub fn scalar(num: Complex64) -> Self {
        NcExpr::from_terms(vec![Term {
            num,
            syms: vec![],
            diff: None,
            word: vec![],
        }])
    }

    pub fn scalar_sym(sym: ScalarSym) -> Self {
        NcExpr::from_terms(vec![Term {
            num: ONE,
            syms: vec![sym],
            diff: None,
            word: vec![],
        }])
    }

    pub fn sym(sym: OpSym) -> Self {
        NcExpr::from_terms(vec![Term {
            num: ONE,
            syms: vec![],
            diff: None,
            word: vec![sym],
        }])
    }

    pub fn word(word: Vec<OpSym>) -> Self {
        NcExpr::from_terms(vec![Term {
            num: ONE,
            syms: vec![],
            diff: None,
            word,
        }])
    }

    /// A bare differential `dM_label`.
    pub fn differential(label: &str) -> Self {
        NcExpr::from_terms(vec![Term {
            num: ONE,
            syms: vec![],
            diff: Some(label.to_string()),
            word: vec![],
        }])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.num.norm()).fold(0.0, f64::max)
    }

    pub fn has_differential(&self) -> bool {
        self.terms.iter().any(|t| t.diff.is_some())
    }

    pub fn add(&self, other: &NcExpr) -> NcExpr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        NcExpr::from_terms(terms)
    }

    pub fn neg(&self) -> NcExpr {
        self.scale(-ONE)
    }

    pub fn sub(&self, other: &NcExpr) -> NcExpr {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: Complex64) -> NcExpr {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                num: t.num * c,
                ..t.clone()
            })
            .collect();
        NcExpr::from_terms(terms)
    }

    pub fn scale_sym(&self, sym: &ScalarSym) -> NcExpr {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut syms = t.syms.clone();
                syms.push(sym.clone());
                Term {
                    syms,
                    ..t.clone()
                }
            })
            .collect();
        NcExpr::from_terms(terms)
    }

    /// Product with the noise table collapsing differential pairs and
    /// applying commutation signs for differentials crossing adapted words.
    pub fn mul(&self, other: &NcExpr, table: &ItoTable) -> Result<NcExpr> {
        let mut out: Vec<Term> = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                let num = a.num * b.num;
                let mut syms = a.syms.clone();
                syms.extend(b.syms.iter().cloned());
                let mut word = a.word.clone();
                word.extend(b.word.iter().cloned());
                match (&a.diff, &b.diff) {
                    (None, None) => out.push(Term {
                        num,
                        syms,
                        diff: None,
                        word,
                    }),
                    (Some(d), None) => {
                        table.check_label(d)?;
                        out.push(Term {
                            num,
                            syms,
                            diff: Some(d.clone()),
                            word,
                        });
                    }
                    (None, Some(d)) => {
                        let sign = crossing_sign(table, d, &a.word)?;
                        out.push(Term {
                            num: num * sign,
                            syms,
                            diff: Some(d.clone()),
                            word,
                        });
                    }
                    (Some(d1), Some(d2)) => {
                        let sign = crossing_sign(table, d2, &a.word)?;
                        for (target, coeff) in table.product(d1, d2)? {
                            let mut syms2 = syms.clone();
                            syms2.extend(coeff.syms.iter().cloned());
                            out.push(Term {
                                num: num * sign * coeff.num,
                                syms: syms2,
                                diff: Some(target.clone()),
                                word: word.clone(),
                            });
                        }
                    }
                }
            }
        }
        Ok(NcExpr::from_terms(out))
    }

    /// Involution: conjugate scalars, reverse and star the word, star the
    /// differential and restore it to the left of the reversed word.
    pub fn adjoint(&self, table: &ItoTable) -> Result<NcExpr> {
        let mut out = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let word: Vec<OpSym> = t.word.iter().rev().map(|s| s.clone().dag()).collect();
            let syms: Vec<ScalarSym> = t.syms.iter().map(ScalarSym::conjugate).collect();
            let mut num = t.num.conj();
            let diff = match &t.diff {
                None => None,
                Some(d) => {
                    let starred = table.involute(d)?.to_string();
                    num *= crossing_sign(table, &starred, &word)?;
                    Some(starred)
                }
            };
            out.push(Term {
                num,
                syms,
                diff,
                word,
            });
        }
        Ok(NcExpr::from_terms(out))
    }

    /// Replace every occurrence of the named operator symbol by a
    /// differential-free expression (its adjoint at daggered occurrences).
    pub fn substitute(&self, name: &str, replacement: &NcExpr, table: &ItoTable) -> Result<NcExpr> {
        if replacement.has_differential() {
            return Err(Error::DifferentialInSubstitution {
                symbol: name.to_string(),
            });
        }
        let rep_adj = replacement.adjoint(table)?;
        let mut total = NcExpr::zero();
        for t in &self.terms {
            let mut acc = NcExpr::from_terms(vec![Term {
                num: t.num,
                syms: t.syms.clone(),
                diff: t.diff.clone(),
                word: vec![],
            }]);
            for s in &t.word {
                let factor = if s.name == name {
                    if s.dagger {
                        rep_adj.clone()
                    } else {
                        replacement.clone()
                    }
                } else {
                    NcExpr::sym(s.clone())
                };
                acc = acc.mul(&factor, table)?;
            }
            total = total.add(&acc);
        }
        Ok(total)
    }

    /// Group terms by differential; the differential-free group sits under
    /// `None`. Group expressions carry no differential: reassembly is
    /// `sum_label dM_label * group(label) + group(None)`.
    pub fn collect(&self) -> BTreeMap<Option<String>, NcExpr> {
        let mut groups: BTreeMap<Option<String>, Vec<Term>> = BTreeMap::new();
        for t in &self.terms {
            let mut stripped = t.clone();
            let key = stripped.diff.take();
            groups.entry(key).or_default().push(stripped);
        }
        groups
            .into_iter()
            .map(|(k, v)| (k, NcExpr::from_terms(v)))
            .collect()
    }

    pub fn coefficient_of(&self, label: Option<&str>) -> NcExpr {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.diff.as_deref() == label)
            .map(|t| {
                let mut s = t.clone();
                s.diff = None;
                s
            })
            .collect();
        NcExpr::from_terms(terms)
    }

    /// Delete adjacent mutually-inverse letters (both orders, matching
    /// dagger flags) until no pair remains.
    pub fn reduce_inverse_pairs(&self, pairs: &[(&str, &str)]) -> NcExpr {
        let is_pair = |a: &OpSym, b: &OpSym| {
            a.dagger == b.dagger
                && pairs
                    .iter()
                    .any(|(p, q)| (a.name == *p && b.name == *q) || (a.name == *q && b.name == *p))
        };
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut word = t.word.clone();
                loop {
                    let hit = (0..word.len().saturating_sub(1))
                        .find(|&i| is_pair(&word[i], &word[i + 1]));
                    match hit {
                        Some(i) => {
                            word.drain(i..=i + 1);
                        }
                        None => break,
                    }
                }
                Term {
                    word,
                    ..t.clone()
                }
            })
            .collect();
        NcExpr::from_terms(terms)
    }

    /// Deterministic text form: one line per canonical term,
    /// `coeff | differential | word`.
    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut lines = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut coeff = format_complex(t.num);
            for s in &t.syms {
                coeff.push(' ');
                coeff.push_str(&s.name);
                if s.conj {
                    coeff.push('*');
                }
            }
            let diff = t.diff.as_deref().unwrap_or("1").to_string();
            let word = if t.word.is_empty() {
                "1".to_string()
            } else {
                t.word
                    .iter()
                    .map(|s| {
                        if s.dagger {
                            format!("{}*", s.name)
                        } else {
                            s.name.clone()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            lines.push(format!("{coeff} | {diff} | {word}"));
        }
        lines.join("\n")
    }
}

fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else {
        format!("({}{:+}i)", z.re, z.im)
    }
}

/// Table lookup as an expression: the product `dM_a dM_b`.
pub fn mul_differentials(a: &str, b: &str, table: &ItoTable) -> Result<NcExpr> {
    NcExpr::differential(a).mul(&NcExpr::differential(b), table)
}

/// Product rule `d(XY) = dX Y + X dY + dX dY` with the last term collapsed
/// through the table. `X`, `Y` must be differential-free; `dX`, `dY` must be
/// pure differential expressions.
pub fn ito_product(
    x: &NcExpr,
    dx: &NcExpr,
    y: &NcExpr,
    dy: &NcExpr,
    table: &ItoTable,
) -> Result<NcExpr> {
    if x.has_differential() || y.has_differential() {
        return Err(Error::Unsupported {
            context: "ito_product",
            reason: "process arguments must be differential-free".to_string(),
        });
    }
    for (name, d) in [("dX", dx), ("dY", dy)] {
        if d.terms().iter().any(|t| t.diff.is_none()) {
            return Err(Error::Unsupported {
                context: "ito_product",
                reason: format!("{name} must be a pure differential expression"),
            });
        }
    }
    let a = dx.mul(y, table)?;
    let b = x.mul(dy, table)?;
    let c = dx.mul(dy, table)?;
    Ok(a.add(&b).add(&c))
}

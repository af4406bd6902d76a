//! Monomials, posynomials, and matrices of posynomials.
//!
//! A monomial is `c * x1^a1 * ... * xn^an` with `c > 0` and real exponents
//! over strictly positive variables; a posynomial is a finite sum of
//! monomials. Posynomials are closed under addition, multiplication, and
//! positive scaling, and become convex after the change of variables
//! `y = log x`, which is what makes the control programs in [`crate::gpsolve`]
//! tractable. Everything here is immutable after construction and safe to
//! share across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Threshold on `|exponent * ln(value)|` beyond which evaluation switches to
/// log space to avoid intermediate overflow.
const LOG_SPACE_THRESHOLD: f64 = 500.0;

/// A named positive variable. Ordering is lexicographic on the name and is
/// used for canonical printing and like-term comparison.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(Arc<str>);

impl VarId {
    pub fn new(name: impl AsRef<str>) -> Self {
        VarId(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VarId({})", self.0)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        VarId::new(s)
    }
}

/// Errors from posynomial construction and evaluation.
#[derive(Debug, Error)]
pub enum PosyError {
    #[error("variable {0} is not bound in the assignment")]
    UnboundVariable(String),
    #[error("variable {var} must be assigned a positive value, got {value}")]
    NonPositiveValue { var: String, value: f64 },
    #[error("monomial coefficient must be positive and finite, got {0}")]
    BadCoefficient(f64),
    #[error("scale factor must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("a posynomial must have at least one term")]
    Empty,
    #[error("matrix shape mismatch: left is {lr}x{lc}, right is {rr}x{rc}")]
    ShapeMismatch { lr: usize, lc: usize, rr: usize, rc: usize },
    #[error("entry ({row},{col}) outside a {rows}x{cols} matrix")]
    OutOfBounds { row: usize, col: usize, rows: usize, cols: usize },
}

/// `c * prod_j x_j^{a_j}` with `c > 0`. Exponents that are exactly zero are
/// not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    coeff: f64,
    exponents: BTreeMap<VarId, f64>,
}

impl Monomial {
    /// Builds a monomial, dropping zero exponents.
    pub fn new(
        coeff: f64,
        exponents: impl IntoIterator<Item = (VarId, f64)>,
    ) -> Result<Self, PosyError> {
        if !(coeff > 0.0) || !coeff.is_finite() {
            return Err(PosyError::BadCoefficient(coeff));
        }
        let exponents = exponents
            .into_iter()
            .filter(|(_, a)| *a != 0.0)
            .collect::<BTreeMap<_, _>>();
        Ok(Monomial { coeff, exponents })
    }

    pub fn constant(coeff: f64) -> Result<Self, PosyError> {
        Monomial::new(coeff, [])
    }

    /// `x^1` for a single variable.
    pub fn var(v: VarId) -> Self {
        Monomial {
            coeff: 1.0,
            exponents: BTreeMap::from([(v, 1.0)]),
        }
    }

    /// `c * x^a`.
    pub fn var_pow(coeff: f64, v: VarId, a: f64) -> Result<Self, PosyError> {
        Monomial::new(coeff, [(v, a)])
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn exponents(&self) -> impl Iterator<Item = (&VarId, f64)> {
        self.exponents.iter().map(|(v, a)| (v, *a))
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Key identifying the exponent map; like terms are merged on exact
    /// (bitwise) exponent equality.
    fn term_key(&self) -> Vec<(VarId, u64)> {
        self.exponents
            .iter()
            .map(|(v, a)| (v.clone(), a.to_bits()))
            .collect()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut exponents = self.exponents.clone();
        for (v, a) in &other.exponents {
            let e = exponents.entry(v.clone()).or_insert(0.0);
            *e += a;
            if *e == 0.0 {
                exponents.remove(v);
            }
        }
        Monomial {
            coeff: self.coeff * other.coeff,
            exponents,
        }
    }

    fn eval_plain(&self, assignment: &BTreeMap<VarId, f64>) -> f64 {
        let mut acc = self.coeff;
        for (v, a) in &self.exponents {
            acc *= assignment[v].powf(*a);
        }
        acc
    }

    /// `ln c + sum_j a_j * y_j` where `y_j = ln x_j`.
    fn log_at(&self, log_assignment: &BTreeMap<VarId, f64>) -> f64 {
        let mut acc = self.coeff.ln();
        for (v, a) in &self.exponents {
            acc += a * log_assignment[v];
        }
        acc
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.16e}", self.coeff)?;
        for (v, a) in &self.exponents {
            write!(f, " * {}^{:.16e}", v, a)?;
        }
        Ok(())
    }
}

/// A sum of one or more monomials, kept with like terms merged and in
/// canonical term order.
#[derive(Clone, Debug, PartialEq)]
pub struct Posynomial {
    terms: Vec<Monomial>,
}

impl Posynomial {
    /// Builds a posynomial from terms, merging like terms.
    pub fn new(terms: impl IntoIterator<Item = Monomial>) -> Result<Self, PosyError> {
        let terms: Vec<Monomial> = terms.into_iter().collect();
        if terms.is_empty() {
            return Err(PosyError::Empty);
        }
        Ok(Self::canonicalize(terms))
    }

    pub fn constant(c: f64) -> Result<Self, PosyError> {
        Ok(Posynomial {
            terms: vec![Monomial::constant(c)?],
        })
    }

    pub fn var(v: VarId) -> Self {
        Posynomial {
            terms: vec![Monomial::var(v)],
        }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// All variables appearing in the posynomial, in canonical order.
    pub fn variables(&self) -> Vec<VarId> {
        let mut vars: Vec<VarId> = self
            .terms
            .iter()
            .flat_map(|m| m.exponents.keys().cloned())
            .collect();
        vars.sort();
        vars.dedup();
        vars
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(Monomial::is_constant)
    }

    /// Value of a constant posynomial (sum of its coefficients); `None` if
    /// any term has a variable.
    pub fn constant_value(&self) -> Option<f64> {
        if self.is_constant() {
            Some(self.terms.iter().map(|m| m.coeff).sum())
        } else {
            None
        }
    }

    fn canonicalize(terms: Vec<Monomial>) -> Posynomial {
        let mut merged: BTreeMap<Vec<(VarId, u64)>, Monomial> = BTreeMap::new();
        for t in terms {
            let key = t.term_key();
            match merged.get_mut(&key) {
                Some(existing) => existing.coeff += t.coeff,
                None => {
                    merged.insert(key, t);
                }
            }
        }
        Posynomial {
            terms: merged.into_values().collect(),
        }
    }

    fn check_assignment(&self, assignment: &BTreeMap<VarId, f64>) -> Result<(), PosyError> {
        for t in &self.terms {
            for v in t.exponents.keys() {
                match assignment.get(v) {
                    None => return Err(PosyError::UnboundVariable(v.name().to_string())),
                    Some(x) if !(*x > 0.0) || !x.is_finite() => {
                        return Err(PosyError::NonPositiveValue {
                            var: v.name().to_string(),
                            value: *x,
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Evaluates at a positive assignment. Switches to log-space evaluation
    /// when any single factor `x^a` would leave the representable range.
    pub fn eval(&self, assignment: &BTreeMap<VarId, f64>) -> Result<f64, PosyError> {
        self.check_assignment(assignment)?;
        let risky = self.terms.iter().any(|t| {
            t.exponents
                .iter()
                .any(|(v, a)| (a * assignment[v].ln()).abs() > LOG_SPACE_THRESHOLD)
        });
        if risky {
            let log_assignment: BTreeMap<VarId, f64> = assignment
                .iter()
                .map(|(v, x)| (v.clone(), x.ln()))
                .collect();
            let logs: Vec<f64> = self.terms.iter().map(|t| t.log_at(&log_assignment)).collect();
            Ok(log_sum_exp(&logs).exp())
        } else {
            Ok(self.terms.iter().map(|t| t.eval_plain(assignment)).sum())
        }
    }

    /// Sum of two posynomials; like terms merged.
    pub fn add(&self, other: &Posynomial) -> Posynomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::canonicalize(terms)
    }

    /// Product of two posynomials; term count at most `|p| * |q|`.
    pub fn mul(&self, other: &Posynomial) -> Posynomial {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.mul(b));
            }
        }
        Self::canonicalize(terms)
    }

    /// Multiplies every coefficient by `c > 0`.
    pub fn scale(&self, c: f64) -> Result<Posynomial, PosyError> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(PosyError::BadScale(c));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| Monomial {
                coeff: t.coeff * c,
                exponents: t.exponents.clone(),
            })
            .collect();
        Ok(Posynomial { terms })
    }

    /// Pins a subset of variables to positive values, folding them into the
    /// coefficients. Remaining variables are untouched, so
    /// `eval` commutes with `substitute`.
    pub fn substitute(&self, partial: &BTreeMap<VarId, f64>) -> Result<Posynomial, PosyError> {
        for (v, x) in partial {
            if !(*x > 0.0) || !x.is_finite() {
                return Err(PosyError::NonPositiveValue {
                    var: v.name().to_string(),
                    value: *x,
                });
            }
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut coeff = t.coeff;
                let mut exponents = BTreeMap::new();
                for (v, a) in &t.exponents {
                    match partial.get(v) {
                        Some(x) => coeff *= x.powf(*a),
                        None => {
                            exponents.insert(v.clone(), *a);
                        }
                    }
                }
                Monomial { coeff, exponents }
            })
            .collect();
        Ok(Self::canonicalize(terms))
    }

    /// `F(y) = log f(exp y)` and its exact gradient, computed with
    /// overflow-safe log-sum-exp. Every variable of the posynomial must be
    /// present in `y`; the entries of `y` are unrestricted reals.
    pub fn log_value_grad(
        &self,
        y: &BTreeMap<VarId, f64>,
    ) -> Result<(f64, BTreeMap<VarId, f64>), PosyError> {
        let mut logs = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut s = t.coeff.ln();
            for (v, a) in &t.exponents {
                let yv = y
                    .get(v)
                    .ok_or_else(|| PosyError::UnboundVariable(v.name().to_string()))?;
                s += a * yv;
            }
            logs.push(s);
        }
        let value = log_sum_exp(&logs);
        // softmax weights over terms
        let mut weights = Vec::with_capacity(logs.len());
        for s in &logs {
            weights.push((s - value).exp());
        }
        let wsum: f64 = weights.iter().sum();
        let mut grad: BTreeMap<VarId, f64> = self
            .variables()
            .into_iter()
            .map(|v| (v, 0.0))
            .collect();
        for (t, w) in self.terms.iter().zip(&weights) {
            for (v, a) in &t.exponents {
                *grad.get_mut(v).unwrap() += a * w / wsum;
            }
        }
        Ok((value, grad))
    }
}

impl fmt::Display for Posynomial {
    /// Canonical text form: terms sorted by exponent map, reals printed with
    /// 17 significant digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{}", t)?;
        }
        Ok(())
    }
}

/// Overflow-safe `log(sum_i exp(s_i))`.
pub fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = logs.iter().map(|s| (s - max).exp()).sum();
    max + sum.ln()
}

/// A rectangular grid of optional posynomials. An absent entry is a
/// structural zero: additive identity and multiplicative annihilator.
/// Posynomials cannot represent zero themselves (coefficients are positive),
/// so zeros must live at the matrix level.
#[derive(Clone, Debug, PartialEq)]
pub struct PosyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Option<Posynomial>>,
}

impl PosyMatrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PosyMatrix {
            rows,
            cols,
            entries: vec![None; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&Posynomial> {
        self.entries[row * self.cols + col].as_ref()
    }

    pub fn set(
        &mut self,
        row: usize,
        col: usize,
        entry: Option<Posynomial>,
    ) -> Result<(), PosyError> {
        if row >= self.rows || col >= self.cols {
            return Err(PosyError::OutOfBounds {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        self.entries[row * self.cols + col] = entry;
        Ok(())
    }

    /// Matrix product; `[AB]_ij = sum_t A_it * B_tj` with absent slots acting
    /// as zero.
    pub fn mat_mul(&self, other: &PosyMatrix) -> Result<PosyMatrix, PosyError> {
        if self.cols != other.rows {
            return Err(PosyError::ShapeMismatch {
                lr: self.rows,
                lc: self.cols,
                rr: other.rows,
                rc: other.cols,
            });
        }
        let mut out = PosyMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc: Option<Posynomial> = None;
                for t in 0..self.cols {
                    if let (Some(a), Some(b)) = (self.get(i, t), other.get(t, j)) {
                        let prod = a.mul(b);
                        acc = Some(match acc {
                            Some(sum) => sum.add(&prod),
                            None => prod,
                        });
                    }
                }
                out.entries[i * other.cols + j] = acc;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn v(name: &str) -> VarId {
        VarId::new(name)
    }

    fn assign(pairs: &[(&str, f64)]) -> BTreeMap<VarId, f64> {
        pairs.iter().map(|(n, x)| (v(n), *x)).collect()
    }

    #[test]
    fn eval_constant_is_identity() {
        let p = Posynomial::constant(1.0).unwrap();
        assert_eq!(p.eval(&assign(&[("x", 123.0)])).unwrap(), 1.0);
    }

    #[test]
    fn eval_hand_example() {
        // 3 * x^0.5 * y^-1 at x=4, y=2 -> 3
        let p = Posynomial::new([Monomial::new(3.0, [(v("x"), 0.5), (v("y"), -1.0)]).unwrap()])
            .unwrap();
        assert_relative_eq!(
            p.eval(&assign(&[("x", 4.0), ("y", 2.0)])).unwrap(),
            3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn eval_unit_sum() {
        let p = Posynomial::var(v("x")).add(&Posynomial::var(v("y")));
        assert_eq!(p.eval(&assign(&[("x", 1.0), ("y", 1.0)])).unwrap(), 2.0);
    }

    #[test]
    fn eval_errors() {
        let p = Posynomial::var(v("x"));
        assert!(matches!(
            p.eval(&BTreeMap::new()),
            Err(PosyError::UnboundVariable(_))
        ));
        assert!(matches!(
            p.eval(&assign(&[("x", -1.0)])),
            Err(PosyError::NonPositiveValue { .. })
        ));
        assert!(matches!(
            p.eval(&assign(&[("x", 0.0)])),
            Err(PosyError::NonPositiveValue { .. })
        ));
    }

    #[test]
    fn eval_switches_to_log_space() {
        // x^300 at x=1e3: plain space would overflow (1e900), log space keeps
        // the evaluation finite-by-structure until the final exp.
        let p = Posynomial::new([Monomial::var_pow(1.0, v("x"), 300.0).unwrap()]).unwrap();
        let big = p.eval(&assign(&[("x", 1e3)])).unwrap();
        assert!(big.is_infinite()); // genuinely larger than f64::MAX
        // x^300 * x^-299 = x survives in log space
        let q = Posynomial::new([
            Monomial::new(1.0, [(v("x"), 300.0), (v("y"), -300.0)]).unwrap()
        ])
        .unwrap();
        let val = q.eval(&assign(&[("x", 1e3), ("y", 1e3)])).unwrap();
        assert_relative_eq!(val, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn add_merges_like_terms() {
        let x = Posynomial::var(v("x"));
        let sum = x.add(&x);
        assert_eq!(sum.terms().len(), 1);
        assert_eq!(sum.terms()[0].coeff(), 2.0);

        let two = Posynomial::var(v("x")).add(&Posynomial::var(v("y")));
        assert_eq!(two.terms().len(), 2);

        // (2x^2) + (x^2 + y) = 3x^2 + y
        let p = Posynomial::new([Monomial::var_pow(2.0, v("x"), 2.0).unwrap()]).unwrap();
        let q = Posynomial::new([
            Monomial::var_pow(1.0, v("x"), 2.0).unwrap(),
            Monomial::var(v("y")),
        ])
        .unwrap();
        let r = p.add(&q);
        assert_eq!(r.terms().len(), 2);
        let a = assign(&[("x", 1.7), ("y", 0.3)]);
        assert_relative_eq!(
            r.eval(&a).unwrap(),
            p.eval(&a).unwrap() + q.eval(&a).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn mul_examples() {
        // (x + y)(2x) = 2x^2 + 2xy
        let p = Posynomial::var(v("x")).add(&Posynomial::var(v("y")));
        let q = Posynomial::new([Monomial::var_pow(2.0, v("x"), 1.0).unwrap()]).unwrap();
        let r = p.mul(&q);
        assert_eq!(r.terms().len(), 2);
        let a = assign(&[("x", 3.0), ("y", 5.0)]);
        assert_relative_eq!(r.eval(&a).unwrap(), 2.0 * 3.0 * (3.0 + 5.0));

        // multiplicative identity
        let one = Posynomial::constant(1.0).unwrap();
        assert_eq!(p.mul(&one), p);

        // exponent cancellation: x^-1 * x = 1
        let inv = Posynomial::new([Monomial::var_pow(1.0, v("x"), -1.0).unwrap()]).unwrap();
        let x = Posynomial::var(v("x"));
        let unit = inv.mul(&x);
        assert!(unit.is_constant());
        assert_eq!(unit.constant_value(), Some(1.0));
    }

    #[test]
    fn scale_examples() {
        let x = Posynomial::var(v("x"));
        assert_eq!(x.scale(1.0).unwrap(), x);
        let p = Posynomial::var(v("x")).add(&Posynomial::var(v("y")));
        let doubled = p.scale(2.0).unwrap();
        assert_eq!(doubled.terms()[0].coeff(), 2.0);
        let q = Posynomial::new([Monomial::var_pow(3.0, v("x"), 2.0).unwrap()]).unwrap();
        assert_eq!(q.scale(0.5).unwrap().terms()[0].coeff(), 1.5);
        assert!(matches!(x.scale(0.0), Err(PosyError::BadScale(_))));
        assert!(matches!(x.scale(-2.0), Err(PosyError::BadScale(_))));
    }

    #[test]
    fn substitute_examples() {
        let xy = Posynomial::new([
            Monomial::new(1.0, [(v("x"), 1.0), (v("y"), 1.0)]).unwrap()
        ])
        .unwrap();
        let sub = xy.substitute(&assign(&[("x", 1.0)])).unwrap();
        assert_eq!(sub, Posynomial::var(v("y")));

        let x2 = Posynomial::new([Monomial::var_pow(1.0, v("x"), 2.0).unwrap()]).unwrap();
        let folded = x2.substitute(&assign(&[("x", 3.0)])).unwrap();
        assert_eq!(folded.constant_value(), Some(9.0));

        let p = Posynomial::var(v("x")).add(&Posynomial::var(v("y")));
        assert_eq!(p.substitute(&BTreeMap::new()).unwrap(), p);

        assert!(p.substitute(&assign(&[("x", -3.0)])).is_err());
    }

    #[test]
    fn substitute_commutes_with_eval() {
        let p = Posynomial::new([
            Monomial::new(2.0, [(v("x"), 1.5), (v("y"), -0.5)]).unwrap(),
            Monomial::var_pow(0.3, v("y"), 2.0).unwrap(),
        ])
        .unwrap();
        let partial = assign(&[("x", 2.5)]);
        let rest = assign(&[("y", 0.7)]);
        let full: BTreeMap<VarId, f64> =
            partial.iter().chain(rest.iter()).map(|(k, x)| (k.clone(), *x)).collect();
        let direct = p.eval(&full).unwrap();
        let staged = p.substitute(&partial).unwrap().eval(&rest).unwrap();
        assert_relative_eq!(direct, staged, max_relative = 1e-12);
    }

    #[test]
    fn log_value_grad_examples() {
        // p = x at y_x = 0 -> (0, {x: 1})
        let p = Posynomial::var(v("x"));
        let (val, grad) = p.log_value_grad(&assign(&[("x", 0.0)])).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(grad[&v("x")], 1.0);

        // constant c -> (log c, zero gradient)
        let c = Posynomial::constant(7.5).unwrap();
        let (val, grad) = c.log_value_grad(&BTreeMap::new()).unwrap();
        assert_relative_eq!(val, 7.5f64.ln());
        assert!(grad.is_empty());

        // x + 1/x at y_x = 0 -> (log 2, {x: 0})
        let sym = Posynomial::var(v("x"))
            .add(&Posynomial::new([Monomial::var_pow(1.0, v("x"), -1.0).unwrap()]).unwrap());
        let (val, grad) = sym.log_value_grad(&assign(&[("x", 0.0)])).unwrap();
        assert_relative_eq!(val, 2.0f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(grad[&v("x")], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn log_value_grad_is_overflow_safe() {
        let p = Posynomial::var(v("x")).add(&Posynomial::constant(1.0).unwrap());
        let (val, grad) = p.log_value_grad(&assign(&[("x", 2000.0)])).unwrap();
        assert_relative_eq!(val, 2000.0, max_relative = 1e-12);
        assert_relative_eq!(grad[&v("x")], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn mat_mul_identity_pattern() {
        let mut ident = PosyMatrix::zeros(2, 2);
        for i in 0..2 {
            ident.set(i, i, Some(Posynomial::constant(1.0).unwrap())).unwrap();
        }
        let mut b = PosyMatrix::zeros(2, 2);
        b.set(0, 0, Some(Posynomial::var(v("x")))).unwrap();
        b.set(1, 0, Some(Posynomial::var(v("y")))).unwrap();
        assert_eq!(ident.mat_mul(&b).unwrap(), b);
    }

    #[test]
    fn mat_mul_1x1() {
        let mut a = PosyMatrix::zeros(1, 1);
        a.set(0, 0, Some(Posynomial::var(v("x")))).unwrap();
        let mut b = PosyMatrix::zeros(1, 1);
        b.set(0, 0, Some(Posynomial::var(v("y")))).unwrap();
        let ab = a.mat_mul(&b).unwrap();
        let expect = Posynomial::new([
            Monomial::new(1.0, [(v("x"), 1.0), (v("y"), 1.0)]).unwrap()
        ])
        .unwrap();
        assert_eq!(ab.get(0, 0), Some(&expect));
    }

    #[test]
    fn mat_mul_matches_numeric_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a_num: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..3).map(|_| rng.random_range(0.1..5.0)).collect())
                .collect();
            let b_num: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..3).map(|_| rng.random_range(0.1..5.0)).collect())
                .collect();
            let lift = |m: &Vec<Vec<f64>>| {
                let mut p = PosyMatrix::zeros(3, 3);
                for i in 0..3 {
                    for j in 0..3 {
                        p.set(i, j, Some(Posynomial::constant(m[i][j]).unwrap())).unwrap();
                    }
                }
                p
            };
            let prod = lift(&a_num).mat_mul(&lift(&b_num)).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let expect: f64 = (0..3).map(|t| a_num[i][t] * b_num[t][j]).sum();
                    let got = prod.get(i, j).unwrap().constant_value().unwrap();
                    assert_relative_eq!(got, expect, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn mat_mul_shape_error() {
        let a = PosyMatrix::zeros(2, 3);
        let b = PosyMatrix::zeros(2, 2);
        assert!(matches!(
            a.mat_mul(&b),
            Err(PosyError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn display_canonical_form() {
        let p = Posynomial::new([
            Monomial::var(v("y")),
            Monomial::new(2.0, [(v("x"), 2.0)]).unwrap(),
        ])
        .unwrap();
        assert_eq!(
            p.to_string(),
            "2.0000000000000000e0 * x^2.0000000000000000e0 + 1.0000000000000000e0 * y^1.0000000000000000e0"
        );
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let terms = vec![
            Monomial::var(v("x")),
            Monomial::var(v("x")),
            Monomial::constant(1.0).unwrap(),
        ];
        let once = Posynomial::new(terms).unwrap();
        let twice = Posynomial::new(once.terms().to_vec()).unwrap();
        assert_eq!(once, twice);
    }

    /// Random posynomial over up to `max_vars` variables.
    fn random_posynomial(rng: &mut ChaCha8Rng, max_vars: usize) -> Posynomial {
        let names = ["a", "b", "c", "d", "e"];
        let n_terms = rng.random_range(1..=4);
        let terms: Vec<Monomial> = (0..n_terms)
            .map(|_| {
                let n_vars = rng.random_range(0..=max_vars.min(names.len()));
                let exps: Vec<(VarId, f64)> = (0..n_vars)
                    .map(|_| {
                        let name = names[rng.random_range(0..names.len())];
                        (v(name), rng.random_range(-3.0..3.0))
                    })
                    .collect();
                Monomial::new(rng.random_range(0.01..10.0), exps).unwrap()
            })
            .collect();
        Posynomial::new(terms).unwrap()
    }

    #[test]
    fn closure_under_add_and_mul() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = random_posynomial(&mut rng, 5);
            let q = random_posynomial(&mut rng, 5);
            let a: BTreeMap<VarId, f64> = ["a", "b", "c", "d", "e"]
                .iter()
                .map(|n| (v(n), rng.random_range(0.1..10.0)))
                .collect();
            let sum = p.add(&q);
            let prod = p.mul(&q);
            let (pe, qe) = (p.eval(&a).unwrap(), q.eval(&a).unwrap());
            assert_relative_eq!(sum.eval(&a).unwrap(), pe + qe, max_relative = 1e-12);
            assert_relative_eq!(prod.eval(&a).unwrap(), pe * qe, max_relative = 1e-12);
        }
    }

    #[test]
    fn log_value_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = random_posynomial(&mut rng, 4);
            let vars = p.variables();
            let y: BTreeMap<VarId, f64> = vars
                .iter()
                .map(|v| (v.clone(), rng.random_range(-2.0..2.0)))
                .collect();
            let (_, grad) = p.log_value_grad(&y).unwrap();
            let h = 1e-6;
            for var in &vars {
                let mut y_hi = y.clone();
                let mut y_lo = y.clone();
                *y_hi.get_mut(var).unwrap() += h;
                *y_lo.get_mut(var).unwrap() -= h;
                let fd = (p.log_value_grad(&y_hi).unwrap().0 - p.log_value_grad(&y_lo).unwrap().0)
                    / (2.0 * h);
                let g = grad[var];
                assert!(
                    (g - fd).abs() <= 1e-6 * g.abs().max(fd.abs()).max(1e-3),
                    "grad {} vs fd {}",
                    g,
                    fd
                );
            }
        }
    }

    proptest! {
        #[test]
        fn eval_invariant_under_term_reordering(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_posynomial(&mut rng, 3);
            let mut shuffled = p.terms().to_vec();
            shuffled.reverse();
            let q = Posynomial::new(shuffled).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn substitution_of_all_vars_equals_eval(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(977));
            let p = random_posynomial(&mut rng, 3);
            let a: BTreeMap<VarId, f64> = p
                .variables()
                .into_iter()
                .map(|v| (v, rng.random_range(0.1..5.0)))
                .collect();
            let folded = p.substitute(&a).unwrap();
            let c = folded.constant_value().unwrap();
            let direct = p.eval(&a).unwrap();
            prop_assert!((c - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}

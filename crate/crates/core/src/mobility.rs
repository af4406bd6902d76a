//! The parametric map from mobility levels to the daily infection rate.
//!
//! `beta = sum_k theta_k * m_k^{alpha_k} + b` over K mobility categories,
//! where `m_k = 1` is the pre-lockdown baseline. The map is a posynomial in
//! `m`, which keeps the downstream control programs geometric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::posynomial::{Monomial, Posynomial, VarId};

/// Floor applied when converting percent changes to levels; posynomial
/// variables must stay strictly positive.
pub const LEVEL_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("invalid mobility-map parameters: {0}")]
    InvalidParams(String),
    #[error("mobility level m[{index}] = {value} must be positive")]
    NonPositiveLevel { index: usize, value: f64 },
    #[error("mobility vector has {got} categories, map expects {want}")]
    CategoryMismatch { got: usize, want: usize },
    #[error("the map has no terms: all theta are zero and b is zero")]
    EmptyMap,
    #[error(transparent)]
    Posynomial(#[from] crate::posynomial::PosyError),
}

/// Per-region parameters of the mobility map, plus the asymptomatic
/// infectivity weight that scales how A contributes to new infections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityMapParams {
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub b: f64,
    #[serde(rename = "gamma_A")]
    pub gamma_a: f64,
    pub categories: Vec<String>,
}

impl MobilityMapParams {
    pub fn num_categories(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        let k = self.theta.len();
        if k == 0 {
            return Err(MobilityError::InvalidParams(
                "at least one mobility category is required".into(),
            ));
        }
        if self.alpha.len() != k || self.categories.len() != k {
            return Err(MobilityError::InvalidParams(format!(
                "theta, alpha, categories must have equal length ({}, {}, {})",
                k,
                self.alpha.len(),
                self.categories.len()
            )));
        }
        for (i, t) in self.theta.iter().enumerate() {
            if !(*t >= 0.0) || !t.is_finite() {
                return Err(MobilityError::InvalidParams(format!(
                    "theta[{i}] = {t} must be finite and nonnegative"
                )));
            }
        }
        for (i, a) in self.alpha.iter().enumerate() {
            if !a.is_finite() {
                return Err(MobilityError::InvalidParams(format!(
                    "alpha[{i}] = {a} must be finite"
                )));
            }
        }
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(MobilityError::InvalidParams(format!(
                "b = {} must be finite and nonnegative",
                self.b
            )));
        }
        if !(self.gamma_a >= 0.0) || !self.gamma_a.is_finite() {
            return Err(MobilityError::InvalidParams(format!(
                "gamma_A = {} must be finite and nonnegative",
                self.gamma_a
            )));
        }
        Ok(())
    }
}

/// Relative visitation levels for the K categories; 1.0 is the pre-lockdown
/// baseline and all entries are strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityVector(pub Vec<f64>);

impl MobilityVector {
    pub fn validate(&self) -> Result<(), MobilityError> {
        for (index, value) in self.0.iter().enumerate() {
            if !(*value > 0.0) || !value.is_finite() {
                return Err(MobilityError::NonPositiveLevel {
                    index,
                    value: *value,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Daily infection rate for mobility levels `m`.
pub fn beta(m: &MobilityVector, p: &MobilityMapParams) -> Result<f64, MobilityError> {
    p.validate()?;
    m.validate()?;
    if m.len() != p.num_categories() {
        return Err(MobilityError::CategoryMismatch {
            got: m.len(),
            want: p.num_categories(),
        });
    }
    let mut acc = p.b;
    for k in 0..p.num_categories() {
        acc += p.theta[k] * m.0[k].powf(p.alpha[k]);
    }
    Ok(acc)
}

/// The map as a posynomial in the given control variables: one term
/// `theta_k * vars_k^{alpha_k}` per category with positive weight, plus the
/// constant `b` when positive.
pub fn beta_posynomial(
    p: &MobilityMapParams,
    vars: &[VarId],
) -> Result<Posynomial, MobilityError> {
    p.validate()?;
    if vars.len() != p.num_categories() {
        return Err(MobilityError::CategoryMismatch {
            got: vars.len(),
            want: p.num_categories(),
        });
    }
    let mut terms = Vec::new();
    for k in 0..p.num_categories() {
        if p.theta[k] > 0.0 {
            terms.push(Monomial::var_pow(p.theta[k], vars[k].clone(), p.alpha[k])?);
        }
    }
    if p.b > 0.0 {
        terms.push(Monomial::constant(p.b)?);
    }
    if terms.is_empty() {
        return Err(MobilityError::EmptyMap);
    }
    Ok(Posynomial::new(terms)?)
}

/// Converts a signed percent change from baseline into a positive level:
/// `max(LEVEL_FLOOR, 1 + pct/100)`. Values at or below -100% clamp to the
/// floor so downstream posynomial inputs stay positive.
pub fn percent_to_level(pct: f64) -> f64 {
    (1.0 + pct / 100.0).max(LEVEL_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn map(theta: &[f64], alpha: &[f64], b: f64) -> MobilityMapParams {
        MobilityMapParams {
            theta: theta.to_vec(),
            alpha: alpha.to_vec(),
            b,
            gamma_a: 0.5,
            categories: (0..theta.len()).map(|k| format!("cat{k}")).collect(),
        }
    }

    #[test]
    fn beta_at_baseline_is_theta_sum_plus_b() {
        let p = map(&[0.1, 0.2, 0.3], &[2.0, -1.0, 0.7], 0.05);
        let m = MobilityVector(vec![1.0, 1.0, 1.0]);
        // 1^alpha = 1 exactly, so only summation order can differ
        assert_relative_eq!(
            beta(&m, &p).unwrap(),
            0.1 + 0.2 + 0.3 + 0.05,
            max_relative = 1e-15
        );
    }

    #[test]
    fn beta_hand_example() {
        let p = map(&[0.1], &[2.0], 0.01);
        let m = MobilityVector(vec![2.0]);
        assert_relative_eq!(beta(&m, &p).unwrap(), 0.41, max_relative = 1e-12);
    }

    #[test]
    fn beta_all_theta_zero_returns_bias() {
        let p = map(&[0.0, 0.0], &[2.0, 1.0], 0.07);
        let m = MobilityVector(vec![0.3, 4.0]);
        assert_eq!(beta(&m, &p).unwrap(), 0.07);
    }

    #[test]
    fn beta_rejects_nonpositive_levels() {
        let p = map(&[0.1], &[2.0], 0.01);
        assert!(matches!(
            beta(&MobilityVector(vec![0.0]), &p),
            Err(MobilityError::NonPositiveLevel { .. })
        ));
        assert!(matches!(
            beta(&MobilityVector(vec![-0.5]), &p),
            Err(MobilityError::NonPositiveLevel { .. })
        ));
    }

    #[test]
    fn posynomial_form_matches_direct_map() {
        let p = map(&[0.1], &[2.0], 0.01);
        let vars = vec![VarId::new("u1")];
        let posy = beta_posynomial(&p, &vars).unwrap();
        assert_eq!(posy.terms().len(), 2);
        let assignment: BTreeMap<VarId, f64> = [(VarId::new("u1"), 2.0)].into();
        assert_relative_eq!(posy.eval(&assignment).unwrap(), 0.41, max_relative = 1e-12);
    }

    #[test]
    fn posynomial_omits_zero_weight_categories() {
        let p = map(&[0.0, 0.3], &[2.0, 1.5], 0.0);
        let vars = vec![VarId::new("u1"), VarId::new("u2")];
        let posy = beta_posynomial(&p, &vars).unwrap();
        assert_eq!(posy.terms().len(), 1);
        assert_eq!(posy.variables(), vec![VarId::new("u2")]);
    }

    #[test]
    fn posynomial_rejects_empty_map() {
        let p = map(&[0.0], &[2.0], 0.0);
        assert!(matches!(
            beta_posynomial(&p, &[VarId::new("u1")]),
            Err(MobilityError::EmptyMap)
        ));
    }

    #[test]
    fn percent_conversion() {
        assert_eq!(percent_to_level(0.0), 1.0);
        assert_relative_eq!(percent_to_level(-35.0), 0.65, max_relative = 1e-12);
        assert_eq!(percent_to_level(-100.0), LEVEL_FLOOR);
        assert_eq!(percent_to_level(-400.0), LEVEL_FLOOR);
        assert_relative_eq!(percent_to_level(50.0), 1.5, max_relative = 1e-12);
    }

    #[test]
    fn json_schema_round_trip() {
        let p = map(&[0.1, 0.2], &[1.0, -0.5], 0.01);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"gamma_A\""));
        assert!(json.contains("\"categories\""));
        let back: MobilityMapParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn monotone_in_each_category_for_positive_weights(
            m1 in 0.1f64..2.0,
            bump in 0.01f64..1.0,
        ) {
            let p = map(&[0.2, 0.4], &[1.3, 0.8], 0.01);
            let lo = beta(&MobilityVector(vec![m1, 1.0]), &p).unwrap();
            let hi = beta(&MobilityVector(vec![m1 + bump, 1.0]), &p).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn symbolic_and_numeric_agree(
            m1 in 0.1f64..3.0,
            m2 in 0.1f64..3.0,
            a1 in -2.0f64..2.0,
            a2 in -2.0f64..2.0,
        ) {
            let p = map(&[0.15, 0.25], &[a1, a2], 0.02);
            let vars = vec![VarId::new("u1"), VarId::new("u2")];
            let posy = beta_posynomial(&p, &vars).unwrap();
            let assignment: BTreeMap<VarId, f64> =
                [(VarId::new("u1"), m1), (VarId::new("u2"), m2)].into();
            let sym = posy.eval(&assignment).unwrap();
            let num = beta(&MobilityVector(vec![m1, m2]), &p).unwrap();
            prop_assert!((sym - num).abs() <= 1e-12 * num.abs().max(1e-12));
        }
    }
}

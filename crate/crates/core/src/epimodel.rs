//! Discrete-time compartment dynamics with a constant susceptible pool.
//!
//! The model tracks Exposed, Infected (symptomatic), Asymptomatic,
//! Hospitalized, Recovered, and Dead populations. Susceptibles are held at
//! `S0` over the horizon, which makes the (E, I, A, H) update linear in the
//! state with coefficients that are posynomials in the daily infection rate.
//! That closure property is what lets hospitalizations and deaths be written
//! as posynomials of the mobility controls (see [`symbolic_state_posynomials`]).

use std::fmt::Write as _;

use thiserror::Error;

use crate::posynomial::{PosyMatrix, Posynomial};

#[derive(Debug, Error)]
pub enum EpiError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("beta series has {got} entries, need at least {need}")]
    SeriesTooShort { got: usize, need: usize },
    #[error("initial E, I, A, H are all zero: hospitalizations and deaths are identically zero and have no posynomial form")]
    DegenerateInitialState,
    #[error("symbolic expansion over {horizon} days with {controls} control variables per day exceeds the supported size")]
    SizeLimit { horizon: usize, controls: usize },
    #[error(transparent)]
    Posynomial(#[from] crate::posynomial::PosyError),
}

/// Clinical transition rates shared across regions.
///
/// Hospital discharge happens at total rate `rho_hr`, split between recovery
/// and death by `alpha_d`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GlobalParams {
    #[serde(rename = "rho_EI")]
    pub rho_ei: f64,
    #[serde(rename = "rho_EA")]
    pub rho_ea: f64,
    #[serde(rename = "rho_IR")]
    pub rho_ir: f64,
    #[serde(rename = "rho_IH")]
    pub rho_ih: f64,
    #[serde(rename = "rho_AR")]
    pub rho_ar: f64,
    #[serde(rename = "rho_HR")]
    pub rho_hr: f64,
    #[serde(rename = "alpha_D")]
    pub alpha_d: f64,
}

impl GlobalParams {
    pub fn validate(&self) -> Result<(), EpiError> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        let all = [
            ("rho_EI", self.rho_ei),
            ("rho_EA", self.rho_ea),
            ("rho_IR", self.rho_ir),
            ("rho_IH", self.rho_ih),
            ("rho_AR", self.rho_ar),
            ("rho_HR", self.rho_hr),
            ("alpha_D", self.alpha_d),
        ];
        for (name, x) in all {
            if !in_unit(x) {
                return Err(EpiError::InvalidParams(format!(
                    "{name} = {x} must lie in (0, 1)"
                )));
            }
        }
        if self.rho_ei + self.rho_ea >= 1.0 {
            return Err(EpiError::InvalidParams(format!(
                "rho_EI + rho_EA = {} must be < 1",
                self.rho_ei + self.rho_ea
            )));
        }
        if self.rho_ir + self.rho_ih >= 1.0 {
            return Err(EpiError::InvalidParams(format!(
                "rho_IR + rho_IH = {} must be < 1",
                self.rho_ir + self.rho_ih
            )));
        }
        Ok(())
    }
}

/// Per-region initial compartment counts; `s0` is the constant susceptible
/// pool.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegionInit {
    #[serde(rename = "S0")]
    pub s0: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
}

impl RegionInit {
    pub fn validate(&self) -> Result<(), EpiError> {
        if !(self.s0 > 0.0) {
            return Err(EpiError::InvalidParams(format!(
                "S0 = {} must be positive",
                self.s0
            )));
        }
        for (name, x) in [
            ("E0", self.e0),
            ("I0", self.i0),
            ("A0", self.a0),
            ("H0", self.h0),
            ("R0", self.r0),
            ("D0", self.d0),
        ] {
            if !(x >= 0.0) {
                return Err(EpiError::InvalidParams(format!(
                    "{name} = {x} must be nonnegative"
                )));
            }
        }
        Ok(())
    }

    pub fn state(&self) -> EpiState {
        EpiState {
            e: self.e0,
            i: self.i0,
            a: self.a0,
            h: self.h0,
            r: self.r0,
            d: self.d0,
        }
    }
}

/// Compartment populations at one time step. Real-valued: the model is a
/// deterministic mean-field description, so fractional persons are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpiState {
    pub e: f64,
    pub i: f64,
    pub a: f64,
    pub h: f64,
    pub r: f64,
    pub d: f64,
}

impl EpiState {
    pub fn total(&self) -> f64 {
        self.e + self.i + self.a + self.h + self.r + self.d
    }
}

/// A rollout of the dynamics: `states[t]` for `t = 0..=T` and the daily
/// infection rates that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EpiState>,
    pub beta_series: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn deaths(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.d).collect()
    }

    pub fn hospitalized(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.h).collect()
    }

    /// CSV export: header `t,E,I,A,H,R,D,beta`, one row per day. The beta
    /// column holds the rate applied over `[t, t+1)` and is empty on the
    /// final row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,E,I,A,H,R,D,beta\n");
        for (t, s) in self.states.iter().enumerate() {
            let beta = self
                .beta_series
                .get(t)
                .map(|b| b.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                t, s.e, s.i, s.a, s.h, s.r, s.d, beta
            );
        }
        out
    }
}

/// One day of dynamics. New infections `S0 * beta * (gamma_a * A + I)` enter
/// E; everything else flows at the clinical rates. The only inflow to the
/// system is the infection term, so total population (excluding S) grows by
/// exactly that amount.
pub fn step(
    s: &EpiState,
    g: &GlobalParams,
    s0: f64,
    beta: f64,
    gamma_a: f64,
) -> Result<EpiState, EpiError> {
    g.validate()?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(EpiError::InvalidParams(format!(
            "beta = {beta} must be a finite nonnegative rate"
        )));
    }
    if !(gamma_a >= 0.0) || !gamma_a.is_finite() {
        return Err(EpiError::InvalidParams(format!(
            "gamma_A = {gamma_a} must be finite and nonnegative"
        )));
    }
    if !(s0 > 0.0) {
        return Err(EpiError::InvalidParams(format!("S0 = {s0} must be positive")));
    }
    Ok(step_unchecked(s, g, s0, beta, gamma_a))
}

pub(crate) fn step_unchecked(
    s: &EpiState,
    g: &GlobalParams,
    s0: f64,
    beta: f64,
    gamma_a: f64,
) -> EpiState {
    EpiState {
        e: (1.0 - g.rho_ei - g.rho_ea) * s.e + s0 * beta * (gamma_a * s.a + s.i),
        i: (1.0 - g.rho_ir - g.rho_ih) * s.i + g.rho_ei * s.e,
        a: (1.0 - g.rho_ar) * s.a + g.rho_ea * s.e,
        h: (1.0 - g.rho_hr) * s.h + g.rho_ih * s.i,
        r: s.r + g.rho_ir * s.i + g.rho_ar * s.a + (1.0 - g.alpha_d) * g.rho_hr * s.h,
        d: s.d + g.alpha_d * g.rho_hr * s.h,
    }
}

/// Rolls the dynamics forward `horizon` days with the given daily rates.
pub fn rollout(
    init: &RegionInit,
    g: &GlobalParams,
    gamma_a: f64,
    beta_series: &[f64],
    horizon: usize,
) -> Result<Trajectory, EpiError> {
    g.validate()?;
    init.validate()?;
    if !(gamma_a >= 0.0) || !gamma_a.is_finite() {
        return Err(EpiError::InvalidParams(format!(
            "gamma_A = {gamma_a} must be finite and nonnegative"
        )));
    }
    if beta_series.len() < horizon {
        return Err(EpiError::SeriesTooShort {
            got: beta_series.len(),
            need: horizon,
        });
    }
    for (t, b) in beta_series.iter().take(horizon).enumerate() {
        if !(*b >= 0.0) || !b.is_finite() {
            return Err(EpiError::InvalidParams(format!(
                "beta[{t}] = {b} must be a finite nonnegative rate"
            )));
        }
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(init.state());
    for t in 0..horizon {
        let next = step_unchecked(states.last().unwrap(), g, init.s0, beta_series[t], gamma_a);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        beta_series: beta_series[..horizon].to_vec(),
    })
}

/// The 4x4 one-step matrix over the state `(E, I, A, H)`. Off-diagonal
/// couplings that the dynamics do not contain are structural zeros; the
/// infection entries `(0,1)` and `(0,2)` carry the posynomial `beta_t`
/// scaled by `S0` and `gamma_a * S0`.
pub fn transition_matrix(
    g: &GlobalParams,
    s0: f64,
    gamma_a: f64,
    beta_t: &Posynomial,
) -> Result<PosyMatrix, EpiError> {
    g.validate()?;
    if !(s0 > 0.0) {
        return Err(EpiError::InvalidParams(format!("S0 = {s0} must be positive")));
    }
    if !(gamma_a >= 0.0) || !gamma_a.is_finite() {
        return Err(EpiError::InvalidParams(format!(
            "gamma_A = {gamma_a} must be finite and nonnegative"
        )));
    }
    let mut m = PosyMatrix::zeros(4, 4);
    let diag = [
        1.0 - g.rho_ei - g.rho_ea,
        1.0 - g.rho_ir - g.rho_ih,
        1.0 - g.rho_ar,
        1.0 - g.rho_hr,
    ];
    for (idx, d) in diag.into_iter().enumerate() {
        m.set(idx, idx, Some(Posynomial::constant(d)?))?;
    }
    m.set(0, 1, Some(beta_t.scale(s0)?))?;
    if gamma_a > 0.0 {
        m.set(0, 2, Some(beta_t.scale(gamma_a * s0)?))?;
    }
    m.set(1, 0, Some(Posynomial::constant(g.rho_ei)?))?;
    m.set(2, 0, Some(Posynomial::constant(g.rho_ea)?))?;
    m.set(3, 1, Some(Posynomial::constant(g.rho_ih)?))?;
    Ok(m)
}

/// Hospitalizations and deaths over the horizon as posynomials in the
/// control variables appearing in `beta_posys`.
///
/// Entry `t` of each sequence is the symbolic `H(t)` / `D(t)`; `None` marks a
/// value that is identically zero (posynomial coefficients are positive, so
/// zero has no representation). For any positive assignment of the control
/// variables these evaluate to exactly what [`rollout`] produces with
/// `beta_series[t] = beta_posys[t](assignment)`.
pub fn symbolic_state_posynomials(
    init: &RegionInit,
    g: &GlobalParams,
    gamma_a: f64,
    beta_posys: &[Posynomial],
    horizon: usize,
) -> Result<(Vec<Option<Posynomial>>, Vec<Option<Posynomial>>), EpiError> {
    g.validate()?;
    init.validate()?;
    if horizon < 1 {
        return Err(EpiError::InvalidParams(
            "horizon must be at least 1".to_string(),
        ));
    }
    if beta_posys.len() < horizon {
        return Err(EpiError::SeriesTooShort {
            got: beta_posys.len(),
            need: horizon,
        });
    }
    if init.e0 == 0.0 && init.i0 == 0.0 && init.a0 == 0.0 && init.h0 == 0.0 {
        return Err(EpiError::DegenerateInitialState);
    }
    let max_controls = beta_posys
        .iter()
        .take(horizon)
        .map(|p| p.variables().len())
        .max()
        .unwrap_or(0);
    if horizon > 90 && max_controls > 6 {
        return Err(EpiError::SizeLimit {
            horizon,
            controls: max_controls,
        });
    }

    // State column vector (E, I, A, H) with structural zeros for empty
    // compartments.
    let mut y = PosyMatrix::zeros(4, 1);
    for (idx, x0) in [init.e0, init.i0, init.a0, init.h0].into_iter().enumerate() {
        if x0 > 0.0 {
            y.set(idx, 0, Some(Posynomial::constant(x0)?))?;
        }
    }

    let mut h_posys: Vec<Option<Posynomial>> = Vec::with_capacity(horizon + 1);
    let mut d_posys: Vec<Option<Posynomial>> = Vec::with_capacity(horizon + 1);
    h_posys.push(y.get(3, 0).cloned());
    d_posys.push(if init.d0 > 0.0 {
        Some(Posynomial::constant(init.d0)?)
    } else {
        None
    });

    let death_rate = g.alpha_d * g.rho_hr;
    for t in 0..horizon {
        // D(t+1) = D(t) + alpha_D * rho_HR * H(t)
        let d_next = match (d_posys[t].as_ref(), h_posys[t].as_ref()) {
            (Some(d), Some(h)) => Some(d.add(&h.scale(death_rate)?)),
            (Some(d), None) => Some(d.clone()),
            (None, Some(h)) => Some(h.scale(death_rate)?),
            (None, None) => None,
        };
        let m = transition_matrix(g, init.s0, gamma_a, &beta_posys[t])?;
        y = m.mat_mul(&y)?;
        h_posys.push(y.get(3, 0).cloned());
        d_posys.push(d_next);
    }
    Ok((h_posys, d_posys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posynomial::{Monomial, VarId};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn params() -> GlobalParams {
        GlobalParams {
            rho_ei: 0.2,
            rho_ea: 0.3,
            rho_ir: 0.1,
            rho_ih: 0.05,
            rho_ar: 0.1,
            rho_hr: 0.1,
            alpha_d: 0.2,
        }
    }

    fn random_params(rng: &mut ChaCha8Rng) -> GlobalParams {
        GlobalParams {
            rho_ei: rng.random_range(0.05..0.4),
            rho_ea: rng.random_range(0.05..0.4),
            rho_ir: rng.random_range(0.05..0.3),
            rho_ih: rng.random_range(0.01..0.3),
            rho_ar: rng.random_range(0.05..0.9),
            rho_hr: rng.random_range(0.05..0.9),
            alpha_d: rng.random_range(0.05..0.9),
        }
    }

    #[test]
    fn validation_rejects_bad_rates() {
        let mut g = params();
        g.rho_ei = 0.7;
        g.rho_ea = 0.5;
        assert!(g.validate().is_err());
        g = params();
        g.alpha_d = 1.0;
        assert!(g.validate().is_err());
        g = params();
        g.rho_hr = 0.0;
        assert!(g.validate().is_err());
        assert!(params().validate().is_ok());
    }

    #[test]
    fn step_hand_example() {
        let s = EpiState { e: 10.0, i: 5.0, a: 4.0, h: 2.0, r: 0.0, d: 0.0 };
        let next = step(&s, &params(), 1000.0, 1e-4, 0.5).unwrap();
        assert_relative_eq!(next.e, 5.7, max_relative = 1e-12);
        assert_relative_eq!(next.i, 6.25, max_relative = 1e-12);
        assert_relative_eq!(next.a, 6.6, max_relative = 1e-12);
        assert_relative_eq!(next.h, 2.05, max_relative = 1e-12);
        assert_relative_eq!(next.r, 1.06, max_relative = 1e-12);
        assert_relative_eq!(next.d, 0.04, max_relative = 1e-12);
    }

    #[test]
    fn step_disease_free_fixed_point() {
        let s = EpiState { e: 0.0, i: 0.0, a: 0.0, h: 0.0, r: 3.0, d: 1.0 };
        let next = step(&s, &params(), 1000.0, 0.5, 0.5).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn step_no_flows_when_beta_zero_and_rates_tiny() {
        // with beta = 0 the infection inflow vanishes; compartments decay
        let s = EpiState { e: 10.0, i: 5.0, a: 4.0, h: 2.0, r: 0.0, d: 0.0 };
        let next = step(&s, &params(), 1000.0, 0.0, 0.5).unwrap();
        assert_relative_eq!(next.e, 5.0);
        assert_relative_eq!(next.total(), s.total(), max_relative = 1e-12);
    }

    #[test]
    fn rollout_zero_horizon_is_initial_state() {
        let init = RegionInit { s0: 1000.0, e0: 1.0, i0: 2.0, a0: 3.0, h0: 4.0, r0: 5.0, d0: 6.0 };
        let traj = rollout(&init, &params(), 0.5, &[], 0).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.states[0], init.state());
    }

    #[test]
    fn rollout_one_step_matches_hand_example() {
        let init = RegionInit { s0: 1000.0, e0: 10.0, i0: 5.0, a0: 4.0, h0: 2.0, r0: 0.0, d0: 0.0 };
        let traj = rollout(&init, &params(), 0.5, &[1e-4], 1).unwrap();
        assert_relative_eq!(traj.states[1].e, 5.7, max_relative = 1e-12);
        assert_relative_eq!(traj.states[1].d, 0.04, max_relative = 1e-12);
    }

    #[test]
    fn rollout_zero_beta_matches_geometric_sum() {
        // with beta = 0, H decays geometrically from inflows of I, and
        // D(T) = D0 + alpha_D * rho_HR * sum_t H(t)
        let g = params();
        let init = RegionInit { s0: 500.0, e0: 0.0, i0: 0.0, a0: 0.0, h0: 8.0, r0: 0.0, d0: 1.0 };
        let t_max = 40;
        let traj = rollout(&init, &g, 0.5, &vec![0.0; t_max], t_max).unwrap();
        // H(t) = (1 - rho_HR)^t * H0, so
        // sum_{t=0}^{T-1} H(t) = H0 * (1 - q^T) / (1 - q), q = 1 - rho_HR
        let q: f64 = 1.0 - g.rho_hr;
        let h_sum = init.h0 * (1.0 - q.powi(t_max as i32)) / (1.0 - q);
        let expect_d = init.d0 + g.alpha_d * g.rho_hr * h_sum;
        assert_relative_eq!(traj.states[t_max].d, expect_d, max_relative = 1e-12);
    }

    #[test]
    fn rollout_rejects_short_series() {
        let init = RegionInit { s0: 1000.0, e0: 1.0, i0: 0.0, a0: 0.0, h0: 0.0, r0: 0.0, d0: 0.0 };
        assert!(matches!(
            rollout(&init, &params(), 0.5, &[0.1], 2),
            Err(EpiError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn flow_conservation_and_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let g = random_params(&mut rng);
            if g.validate().is_err() {
                continue;
            }
            let s = EpiState {
                e: rng.random_range(0.0..100.0),
                i: rng.random_range(0.0..100.0),
                a: rng.random_range(0.0..100.0),
                h: rng.random_range(0.0..100.0),
                r: rng.random_range(0.0..100.0),
                d: rng.random_range(0.0..100.0),
            };
            let s0 = rng.random_range(100.0..1e6);
            let beta = rng.random_range(0.0..1e-5);
            let gamma_a = rng.random_range(0.0..2.0);
            let next = step(&s, &g, s0, beta, gamma_a).unwrap();
            for x in [next.e, next.i, next.a, next.h, next.r, next.d] {
                assert!(x >= 0.0);
            }
            assert!(next.d >= s.d);
            assert!(next.r >= s.r);
            let inflow = s0 * beta * (gamma_a * s.a + s.i);
            let growth = next.total() - s.total();
            assert_relative_eq!(growth, inflow, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn rollout_is_linear_in_initial_state() {
        let g = params();
        let init = RegionInit { s0: 1000.0, e0: 3.0, i0: 2.0, a0: 1.0, h0: 0.5, r0: 0.0, d0: 0.0 };
        let lambda = 2.5;
        let scaled = RegionInit {
            s0: init.s0,
            e0: lambda * init.e0,
            i0: lambda * init.i0,
            a0: lambda * init.a0,
            h0: lambda * init.h0,
            r0: lambda * init.r0,
            d0: lambda * init.d0,
        };
        let betas = [1e-4, 2e-4, 5e-5, 1e-4];
        let a = rollout(&init, &g, 0.5, &betas, 4).unwrap();
        let b = rollout(&scaled, &g, 0.5, &betas, 4).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_relative_eq!(sb.e, lambda * sa.e, max_relative = 1e-12);
            assert_relative_eq!(sb.i, lambda * sa.i, max_relative = 1e-12);
            assert_relative_eq!(sb.a, lambda * sa.a, max_relative = 1e-12);
            assert_relative_eq!(sb.h, lambda * sa.h, max_relative = 1e-12);
        }
    }

    #[test]
    fn transition_matrix_constant_beta_matches_hand_matrix() {
        let g = params();
        let beta = Posynomial::constant(2e-4).unwrap();
        let m = transition_matrix(&g, 1000.0, 0.5, &beta).unwrap();
        let expect = |x: f64| Posynomial::constant(x).unwrap();
        assert_eq!(m.get(0, 0), Some(&expect(0.5)));
        assert_eq!(m.get(0, 1), Some(&expect(0.2)));
        assert_eq!(m.get(0, 2), Some(&expect(0.1)));
        assert_eq!(m.get(1, 0), Some(&expect(0.2)));
        assert_eq!(m.get(1, 1), Some(&expect(0.85)));
        assert_eq!(m.get(2, 0), Some(&expect(0.3)));
        assert_eq!(m.get(2, 2), Some(&expect(0.9)));
        assert_eq!(m.get(3, 1), Some(&expect(0.05)));
        assert_eq!(m.get(3, 3), Some(&expect(0.9)));
    }

    #[test]
    fn transition_matrix_structural_zeros() {
        let g = params();
        let beta = Posynomial::var(VarId::new("u"));
        let m = transition_matrix(&g, 1000.0, 0.5, &beta).unwrap();
        for (i, j) in [(0, 3), (1, 2), (1, 3), (2, 1), (2, 3), (3, 0), (3, 2)] {
            assert!(m.get(i, j).is_none(), "({i},{j}) should be a structural zero");
        }
    }

    #[test]
    fn symbolic_first_step_is_constant() {
        let g = params();
        let init = RegionInit { s0: 1000.0, e0: 10.0, i0: 5.0, a0: 4.0, h0: 2.0, r0: 0.0, d0: 0.0 };
        let beta = Posynomial::var(VarId::new("u"));
        let (h, _d) = symbolic_state_posynomials(&init, &g, 0.5, &[beta], 1).unwrap();
        let h1 = h[1].as_ref().unwrap();
        assert!(h1.is_constant());
        assert_relative_eq!(
            h1.constant_value().unwrap(),
            (1.0 - g.rho_hr) * init.h0 + g.rho_ih * init.i0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn symbolic_matches_rollout() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let g = loop {
                let g = random_params(&mut rng);
                if g.validate().is_ok() {
                    break g;
                }
            };
            let init = RegionInit {
                s0: rng.random_range(100.0..1e5),
                e0: rng.random_range(0.1..20.0),
                i0: rng.random_range(0.1..20.0),
                a0: rng.random_range(0.1..20.0),
                h0: rng.random_range(0.1..20.0),
                r0: 0.0,
                d0: rng.random_range(0.0..5.0),
            };
            let gamma_a = rng.random_range(0.0..1.5);
            let horizon = rng.random_range(1..=6);
            let k = rng.random_range(1..=2usize);
            let vars: Vec<VarId> = (0..k).map(|j| VarId::new(format!("u{j}"))).collect();
            let beta_posys: Vec<Posynomial> = (0..horizon)
                .map(|_| {
                    let mut terms: Vec<Monomial> = vars
                        .iter()
                        .map(|v| {
                            Monomial::var_pow(
                                rng.random_range(1e-7..1e-5),
                                v.clone(),
                                rng.random_range(0.2..2.0),
                            )
                            .unwrap()
                        })
                        .collect();
                    terms.push(Monomial::constant(rng.random_range(1e-8..1e-6)).unwrap());
                    Posynomial::new(terms).unwrap()
                })
                .collect();
            let (h_posys, d_posys) =
                symbolic_state_posynomials(&init, &g, gamma_a, &beta_posys, horizon).unwrap();

            let assignment: BTreeMap<VarId, f64> = vars
                .iter()
                .map(|v| (v.clone(), rng.random_range(0.2..2.0)))
                .collect();
            let betas: Vec<f64> = beta_posys
                .iter()
                .map(|p| p.eval(&assignment).unwrap())
                .collect();
            let traj = rollout(&init, &g, gamma_a, &betas, horizon).unwrap();
            for t in 0..=horizon {
                let h_sym = h_posys[t]
                    .as_ref()
                    .map(|p| p.eval(&assignment).unwrap())
                    .unwrap_or(0.0);
                let d_sym = d_posys[t]
                    .as_ref()
                    .map(|p| p.eval(&assignment).unwrap())
                    .unwrap_or(0.0);
                assert_relative_eq!(h_sym, traj.states[t].h, max_relative = 1e-9);
                assert_relative_eq!(d_sym, traj.states[t].d, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn symbolic_rejects_degenerate_initial_state() {
        let g = params();
        let init = RegionInit { s0: 1000.0, e0: 0.0, i0: 0.0, a0: 0.0, h0: 0.0, r0: 0.0, d0: 3.0 };
        let beta = Posynomial::var(VarId::new("u"));
        assert!(matches!(
            symbolic_state_posynomials(&init, &g, 0.5, &[beta], 1),
            Err(EpiError::DegenerateInitialState)
        ));
    }

    #[test]
    fn trajectory_csv_layout() {
        let init = RegionInit { s0: 10.0, e0: 1.0, i0: 0.0, a0: 0.0, h0: 0.0, r0: 0.0, d0: 0.0 };
        let traj = rollout(&init, &params(), 0.5, &[0.0], 1).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,E,I,A,H,R,D,beta"));
        assert!(lines.next().unwrap().starts_with("0,1,0,0,0,0,0,0"));
        let last = lines.next().unwrap();
        assert!(last.ends_with(',')); // no beta on the final row
    }
}

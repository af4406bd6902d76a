//! Flat-vector parametrization of the trainable parameters.
//!
//! Gradient descent runs in an unconstrained coordinate space; constrained
//! parameters are mapped through smooth reparametrizations so every iterate
//! satisfies the model invariants:
//!
//! * each compartment's exit rates go through a softmax over
//!   `{stay, exit...}` flows, which keeps every rate in (0, 1) and rate sums
//!   below 1;
//! * `alpha_D` goes through a sigmoid;
//! * `theta`, `b`, `gamma_A`, `S0` and the initial compartments go through
//!   `exp`;
//! * the mobility exponents `alpha` are unconstrained.
//!
//! `D0` is not trained: it is pinned to the observed (cleaned) cumulative
//! deaths on day 0, which anchors the cumulative series.

use crate::epimodel::{GlobalParams, RegionInit};
use crate::mobility::MobilityMapParams;

use super::{LearnError, ParamSet, RegionDataset, RegionParams};

/// Values packed through `exp` are floored here so `log` stays finite.
const LOG_FLOOR: f64 = 1e-30;

/// Index map for the packed parameter vector: 11 global coordinates followed
/// by one block per region, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub region_ids: Vec<String>,
    pub categories: Vec<String>,
    pub learn_s0: bool,
    /// Census population per region; used as the fixed `S0` when
    /// `learn_s0` is false.
    pub populations: Vec<f64>,
    /// Observed cleaned cumulative deaths on day 0, pinned as `D0`.
    pub d0: Vec<f64>,
}

pub(crate) const GLOBAL_LEN: usize = 11;

// global coordinate indices
pub(crate) const Z_E_STAY: usize = 0;
pub(crate) const Z_E_I: usize = 1;
pub(crate) const Z_E_A: usize = 2;
pub(crate) const Z_I_STAY: usize = 3;
pub(crate) const Z_I_R: usize = 4;
pub(crate) const Z_I_H: usize = 5;
pub(crate) const Z_A_STAY: usize = 6;
pub(crate) const Z_A_R: usize = 7;
pub(crate) const Z_H_STAY: usize = 8;
pub(crate) const Z_H_R: usize = 9;
pub(crate) const Z_ALPHA_D: usize = 10;

impl ParamLayout {
    /// Derives a layout from the datasets. `categories` must match the
    /// mobility dimension of every region.
    pub fn from_datasets(
        data: &[RegionDataset],
        categories: Vec<String>,
        learn_s0: bool,
    ) -> Result<Self, LearnError> {
        if data.is_empty() {
            return Err(LearnError::BadDataset("no regions".into()));
        }
        let k = categories.len();
        for ds in data {
            ds.validate()?;
            if ds.mobility.first().map(|m| m.len()).unwrap_or(0) != k {
                return Err(LearnError::BadDataset(format!(
                    "region {} has {} mobility categories, expected {}",
                    ds.region_id,
                    ds.mobility.first().map(|m| m.len()).unwrap_or(0),
                    k
                )));
            }
        }
        let d0 = data
            .iter()
            .map(|ds| super::clean_cumulative(&ds.deaths_raw)[0])
            .collect();
        Ok(ParamLayout {
            region_ids: data.iter().map(|d| d.region_id.clone()).collect(),
            categories,
            learn_s0,
            populations: data.iter().map(|d| d.population).collect(),
            d0,
        })
    }

    pub fn num_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn region_block_len(&self) -> usize {
        // theta, alpha, b, gamma_A, [S0], E0, I0, A0, H0, R0
        2 * self.num_categories() + 2 + usize::from(self.learn_s0) + 5
    }

    pub fn region_offset(&self, region: usize) -> usize {
        GLOBAL_LEN + region * self.region_block_len()
    }

    pub fn total_len(&self) -> usize {
        GLOBAL_LEN + self.num_regions() * self.region_block_len()
    }
}

fn softmax3(z0: f64, z1: f64, z2: f64) -> (f64, f64, f64) {
    let m = z0.max(z1).max(z2);
    let (e0, e1, e2) = ((z0 - m).exp(), (z1 - m).exp(), (z2 - m).exp());
    let s = e0 + e1 + e2;
    (e0 / s, e1 / s, e2 / s)
}

fn softmax2(z0: f64, z1: f64) -> (f64, f64) {
    let m = z0.max(z1);
    let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
    let s = e0 + e1;
    (e0 / s, e1 / s)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_floored(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

/// Packs a parameter set into the unconstrained coordinate vector.
pub fn pack(params: &ParamSet, layout: &ParamLayout) -> Result<Vec<f64>, LearnError> {
    let g = &params.global;
    g.validate()?;
    let mut x = Vec::with_capacity(layout.total_len());
    x.push((1.0 - g.rho_ei - g.rho_ea).ln());
    x.push(g.rho_ei.ln());
    x.push(g.rho_ea.ln());
    x.push((1.0 - g.rho_ir - g.rho_ih).ln());
    x.push(g.rho_ir.ln());
    x.push(g.rho_ih.ln());
    x.push((1.0 - g.rho_ar).ln());
    x.push(g.rho_ar.ln());
    x.push((1.0 - g.rho_hr).ln());
    x.push(g.rho_hr.ln());
    x.push((g.alpha_d / (1.0 - g.alpha_d)).ln());

    for id in &layout.region_ids {
        let rp = params
            .per_region
            .get(id)
            .ok_or_else(|| LearnError::UnknownRegion(id.clone()))?;
        rp.mobility_map.validate()?;
        rp.init.validate()?;
        if rp.mobility_map.num_categories() != layout.num_categories() {
            return Err(LearnError::BadDataset(format!(
                "region {id}: mobility map has {} categories, layout has {}",
                rp.mobility_map.num_categories(),
                layout.num_categories()
            )));
        }
        for t in &rp.mobility_map.theta {
            x.push(log_floored(*t));
        }
        x.extend_from_slice(&rp.mobility_map.alpha);
        x.push(log_floored(rp.mobility_map.b));
        x.push(log_floored(rp.mobility_map.gamma_a));
        if layout.learn_s0 {
            x.push(log_floored(rp.init.s0));
        }
        x.push(log_floored(rp.init.e0));
        x.push(log_floored(rp.init.i0));
        x.push(log_floored(rp.init.a0));
        x.push(log_floored(rp.init.h0));
        x.push(log_floored(rp.init.r0));
    }
    Ok(x)
}

/// Reconstructs a parameter set from packed coordinates. All invariants hold
/// by construction for any finite input.
pub fn unpack(x: &[f64], layout: &ParamLayout) -> ParamSet {
    assert_eq!(x.len(), layout.total_len(), "packed vector length mismatch");
    let (_, rho_ei, rho_ea) = softmax3(x[Z_E_STAY], x[Z_E_I], x[Z_E_A]);
    let (_, rho_ir, rho_ih) = softmax3(x[Z_I_STAY], x[Z_I_R], x[Z_I_H]);
    let (_, rho_ar) = softmax2(x[Z_A_STAY], x[Z_A_R]);
    let (_, rho_hr) = softmax2(x[Z_H_STAY], x[Z_H_R]);
    let alpha_d = sigmoid(x[Z_ALPHA_D]);
    let global = GlobalParams {
        rho_ei,
        rho_ea,
        rho_ir,
        rho_ih,
        rho_ar,
        rho_hr,
        alpha_d,
    };

    let k = layout.num_categories();
    let mut per_region = std::collections::BTreeMap::new();
    for (r, id) in layout.region_ids.iter().enumerate() {
        let base = layout.region_offset(r);
        let theta: Vec<f64> = (0..k).map(|j| x[base + j].exp()).collect();
        let alpha: Vec<f64> = (0..k).map(|j| x[base + k + j]).collect();
        let b = x[base + 2 * k].exp();
        let gamma_a = x[base + 2 * k + 1].exp();
        let mut cursor = base + 2 * k + 2;
        let s0 = if layout.learn_s0 {
            let v = x[cursor].exp();
            cursor += 1;
            v
        } else {
            layout.populations[r]
        };
        let e0 = x[cursor].exp();
        let i0 = x[cursor + 1].exp();
        let a0 = x[cursor + 2].exp();
        let h0 = x[cursor + 3].exp();
        let r0 = x[cursor + 4].exp();
        per_region.insert(
            id.clone(),
            RegionParams {
                mobility_map: MobilityMapParams {
                    theta,
                    alpha,
                    b,
                    gamma_a,
                    categories: layout.categories.clone(),
                },
                init: RegionInit {
                    s0,
                    e0,
                    i0,
                    a0,
                    h0,
                    r0,
                    d0: layout.d0[r],
                },
            },
        );
    }
    ParamSet { global, per_region }
}

/// Natural-coordinate gradient for one region's contribution, before the
/// chain rule through the reparametrization.
#[derive(Debug, Clone, Default)]
pub(crate) struct NaturalGrad {
    pub rho_ei: f64,
    pub rho_ea: f64,
    pub rho_ir: f64,
    pub rho_ih: f64,
    pub rho_ar: f64,
    pub rho_hr: f64,
    pub alpha_d: f64,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub b: f64,
    pub gamma_a: f64,
    pub s0: f64,
    pub e0: f64,
    pub i0: f64,
    pub a0: f64,
    pub h0: f64,
}

impl NaturalGrad {
    pub fn zeros(k: usize) -> Self {
        NaturalGrad {
            theta: vec![0.0; k],
            alpha: vec![0.0; k],
            ..Default::default()
        }
    }
}

/// Applies the reparametrization chain rule.
///
/// `region_grads` holds `(region_index, natural_grad)` pairs; regions that
/// did not contribute (outside the mini-batch) are simply absent and their
/// packed gradient entries stay zero. Global contributions are summed in the
/// order given.
pub(crate) fn chain_to_packed(
    params: &ParamSet,
    layout: &ParamLayout,
    region_grads: &[(usize, NaturalGrad)],
) -> Vec<f64> {
    let mut out = vec![0.0; layout.total_len()];
    let g = &params.global;

    let mut g_rho_ei = 0.0;
    let mut g_rho_ea = 0.0;
    let mut g_rho_ir = 0.0;
    let mut g_rho_ih = 0.0;
    let mut g_rho_ar = 0.0;
    let mut g_rho_hr = 0.0;
    let mut g_alpha_d = 0.0;
    for (_, ng) in region_grads {
        g_rho_ei += ng.rho_ei;
        g_rho_ea += ng.rho_ea;
        g_rho_ir += ng.rho_ir;
        g_rho_ih += ng.rho_ih;
        g_rho_ar += ng.rho_ar;
        g_rho_hr += ng.rho_hr;
        g_alpha_d += ng.alpha_d;
    }

    // softmax over {stay, exit1, exit2}: dL/dz_j = sum_i g_i p_i (d_ij - p_j)
    let softmax3_chain = |g1: f64, g2: f64, p1: f64, p2: f64| -> (f64, f64, f64) {
        let p0 = 1.0 - p1 - p2;
        let z0 = -(g1 * p1 + g2 * p2) * p0;
        let z1 = g1 * p1 * (1.0 - p1) - g2 * p2 * p1;
        let z2 = -g1 * p1 * p2 + g2 * p2 * (1.0 - p2);
        (z0, z1, z2)
    };
    let (z0, z1, z2) = softmax3_chain(g_rho_ei, g_rho_ea, g.rho_ei, g.rho_ea);
    out[Z_E_STAY] = z0;
    out[Z_E_I] = z1;
    out[Z_E_A] = z2;
    let (z0, z1, z2) = softmax3_chain(g_rho_ir, g_rho_ih, g.rho_ir, g.rho_ih);
    out[Z_I_STAY] = z0;
    out[Z_I_R] = z1;
    out[Z_I_H] = z2;
    // softmax over {stay, exit}: dL/dz_exit = g * p(1-p), dL/dz_stay = -that
    let d_ar = g_rho_ar * g.rho_ar * (1.0 - g.rho_ar);
    out[Z_A_STAY] = -d_ar;
    out[Z_A_R] = d_ar;
    let d_hr = g_rho_hr * g.rho_hr * (1.0 - g.rho_hr);
    out[Z_H_STAY] = -d_hr;
    out[Z_H_R] = d_hr;
    out[Z_ALPHA_D] = g_alpha_d * g.alpha_d * (1.0 - g.alpha_d);

    let k = layout.num_categories();
    for (r, ng) in region_grads {
        let id = &layout.region_ids[*r];
        let rp = &params.per_region[id];
        let base = layout.region_offset(*r);
        for j in 0..k {
            out[base + j] = ng.theta[j] * rp.mobility_map.theta[j];
            out[base + k + j] = ng.alpha[j];
        }
        out[base + 2 * k] = ng.b * rp.mobility_map.b;
        out[base + 2 * k + 1] = ng.gamma_a * rp.mobility_map.gamma_a;
        let mut cursor = base + 2 * k + 2;
        if layout.learn_s0 {
            out[cursor] = ng.s0 * rp.init.s0;
            cursor += 1;
        }
        out[cursor] = ng.e0 * rp.init.e0;
        out[cursor + 1] = ng.i0 * rp.init.i0;
        out[cursor + 2] = ng.a0 * rp.init.a0;
        out[cursor + 3] = ng.h0 * rp.init.h0;
        // R0 does not feed the death trajectory; its gradient is identically 0.
    }
    out
}

//! Forward simulation and the exact adjoint of the training loss.
//!
//! The loss compares 7-day-smoothed observed cumulative deaths against the
//! 7-day-smoothed model deaths. Because the state update is linear in
//! (E, I, A, H) at fixed daily rates, the gradient is computed by one
//! backward sweep of adjoint variables, followed by the chain rule through
//! the mobility map.

use crate::epimodel::{GlobalParams, RegionInit};
use crate::mobility::{MobilityMapParams, MobilityVector};

use super::packing::NaturalGrad;
use super::rolling_mean;

/// Forward pass storage: state series plus the mobility-map intermediates
/// needed by the backward sweep.
pub(crate) struct Forward {
    pub e: Vec<f64>,
    pub i: Vec<f64>,
    pub a: Vec<f64>,
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    pub beta: Vec<f64>,
    /// `m_k^{alpha_k}` per day and category, row-major `[t * k + j]`.
    pub mpow: Vec<f64>,
    /// `ln m_k` per day and category.
    pub mlog: Vec<f64>,
}

pub(crate) fn forward(
    g: &GlobalParams,
    map: &MobilityMapParams,
    init: &RegionInit,
    mobility: &[MobilityVector],
    horizon: usize,
) -> Forward {
    let k = map.num_categories();
    let mut fwd = Forward {
        e: Vec::with_capacity(horizon + 1),
        i: Vec::with_capacity(horizon + 1),
        a: Vec::with_capacity(horizon + 1),
        h: Vec::with_capacity(horizon + 1),
        d: Vec::with_capacity(horizon + 1),
        beta: Vec::with_capacity(horizon),
        mpow: vec![0.0; horizon * k],
        mlog: vec![0.0; horizon * k],
    };
    fwd.e.push(init.e0);
    fwd.i.push(init.i0);
    fwd.a.push(init.a0);
    fwd.h.push(init.h0);
    fwd.d.push(init.d0);
    for t in 0..horizon {
        let m = &mobility[t].0;
        let mut beta = map.b;
        for j in 0..k {
            let ml = m[j].ln();
            let mp = (map.alpha[j] * ml).exp();
            fwd.mlog[t * k + j] = ml;
            fwd.mpow[t * k + j] = mp;
            beta += map.theta[j] * mp;
        }
        fwd.beta.push(beta);
        let (e, i, a, h, d) = (fwd.e[t], fwd.i[t], fwd.a[t], fwd.h[t], fwd.d[t]);
        fwd.e.push((1.0 - g.rho_ei - g.rho_ea) * e + init.s0 * beta * (map.gamma_a * a + i));
        fwd.i.push((1.0 - g.rho_ir - g.rho_ih) * i + g.rho_ei * e);
        fwd.a.push((1.0 - g.rho_ar) * a + g.rho_ea * e);
        fwd.h.push((1.0 - g.rho_hr) * h + g.rho_ih * i);
        fwd.d.push(d + g.alpha_d * g.rho_hr * h);
    }
    fwd
}

/// Model cumulative deaths `D(0..=horizon)` under observed mobility.
pub(crate) fn forward_deaths(
    g: &GlobalParams,
    map: &MobilityMapParams,
    init: &RegionInit,
    mobility: &[MobilityVector],
    horizon: usize,
) -> Vec<f64> {
    forward(g, map, init, mobility, horizon).d
}

/// Squared residual sum for one region over `t = 1..=t_train`, scaled by
/// `inv_mt = 1 / (M * T)`.
pub(crate) fn region_loss(
    g: &GlobalParams,
    map: &MobilityMapParams,
    init: &RegionInit,
    mobility: &[MobilityVector],
    x_smooth: &[f64],
    population: f64,
    t_train: usize,
    inv_mt: f64,
) -> f64 {
    let d = forward_deaths(g, map, init, mobility, t_train);
    let xhat = rolling_mean(&d);
    let inv_n = 1.0 / population;
    let mut loss = 0.0;
    for t in 1..=t_train {
        let r = (x_smooth[t] - xhat[t]) * inv_n;
        loss += inv_mt * r * r;
    }
    loss
}

/// Loss plus its exact gradient in natural coordinates.
pub(crate) fn region_loss_grad(
    g: &GlobalParams,
    map: &MobilityMapParams,
    init: &RegionInit,
    mobility: &[MobilityVector],
    x_smooth: &[f64],
    population: f64,
    t_train: usize,
    inv_mt: f64,
) -> (f64, NaturalGrad) {
    let k = map.num_categories();
    let t_max = t_train;
    let fwd = forward(g, map, init, mobility, t_max);
    let xhat = rolling_mean(&fwd.d);
    let inv_n = 1.0 / population;

    let mut loss = 0.0;
    let mut dl_dxhat = vec![0.0; t_max + 1];
    for t in 1..=t_max {
        let r = (x_smooth[t] - xhat[t]) * inv_n;
        loss += inv_mt * r * r;
        dl_dxhat[t] = inv_mt * 2.0 * (xhat[t] - x_smooth[t]) * inv_n * inv_n;
    }

    // adjoint of the trailing rolling mean
    let mut dl_dd = vec![0.0; t_max + 1];
    for t in 1..=t_max {
        if dl_dxhat[t] == 0.0 {
            continue;
        }
        let lo = t.saturating_sub(6);
        let w = (t - lo + 1) as f64;
        let share = dl_dxhat[t] / w;
        for s in lo..=t {
            dl_dd[s] += share;
        }
    }

    // backward sweep of the dynamics
    let mut le = vec![0.0; t_max + 1];
    let mut li = vec![0.0; t_max + 1];
    let mut la = vec![0.0; t_max + 1];
    let mut lh = vec![0.0; t_max + 1];
    let mut ld = vec![0.0; t_max + 1];
    ld[t_max] = dl_dd[t_max];

    let mut ng = NaturalGrad::zeros(k);
    for t in (0..t_max).rev() {
        ld[t] = dl_dd[t] + ld[t + 1];
        lh[t] = lh[t + 1] * (1.0 - g.rho_hr) + ld[t + 1] * g.alpha_d * g.rho_hr;
        li[t] = li[t + 1] * (1.0 - g.rho_ir - g.rho_ih)
            + lh[t + 1] * g.rho_ih
            + le[t + 1] * init.s0 * fwd.beta[t];
        la[t] = la[t + 1] * (1.0 - g.rho_ar) + le[t + 1] * init.s0 * fwd.beta[t] * map.gamma_a;
        le[t] = le[t + 1] * (1.0 - g.rho_ei - g.rho_ea)
            + li[t + 1] * g.rho_ei
            + la[t + 1] * g.rho_ea;

        let (et, it, at, ht) = (fwd.e[t], fwd.i[t], fwd.a[t], fwd.h[t]);
        let dbeta = le[t + 1] * init.s0 * (map.gamma_a * at + it);
        for j in 0..k {
            let mp = fwd.mpow[t * k + j];
            ng.theta[j] += dbeta * mp;
            ng.alpha[j] += dbeta * map.theta[j] * mp * fwd.mlog[t * k + j];
        }
        ng.b += dbeta;
        ng.gamma_a += le[t + 1] * init.s0 * fwd.beta[t] * at;
        ng.s0 += le[t + 1] * fwd.beta[t] * (map.gamma_a * at + it);

        ng.rho_ei += et * (li[t + 1] - le[t + 1]);
        ng.rho_ea += et * (la[t + 1] - le[t + 1]);
        ng.rho_ir += -it * li[t + 1];
        ng.rho_ih += it * (lh[t + 1] - li[t + 1]);
        ng.rho_ar += -at * la[t + 1];
        ng.rho_hr += ht * (g.alpha_d * ld[t + 1] - lh[t + 1]);
        ng.alpha_d += g.rho_hr * ht * ld[t + 1];
    }
    ng.e0 = le[0];
    ng.i0 = li[0];
    ng.a0 = la[0];
    ng.h0 = lh[0];
    // D0 is pinned to data and R0 never reaches the loss; neither gets a
    // gradient coordinate.

    (loss, ng)
}

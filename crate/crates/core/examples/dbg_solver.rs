use std::collections::BTreeMap;
use std::time::Instant;

use epimob::data::{synth_gen, MobilityWalk, SynthSpec};
use epimob::epimodel::RegionInit;
use epimob::learn::{self, ParamSet, RegionParams, TrainConfig};
use epimob::mobility::MobilityMapParams;

fn make_spec(step: f64, theta_scale: f64) -> SynthSpec {
    let k = 4;
    let mut per_region = BTreeMap::new();
    let mut populations = BTreeMap::new();
    for i in 0..3 {
        let id = format!("r{i}");
        let n = 3e5 + 1e5 * i as f64;
        per_region.insert(
            id.clone(),
            RegionParams {
                mobility_map: MobilityMapParams {
                    theta: vec![1.5e-6 * theta_scale, 8e-7 * theta_scale, 5e-7 * theta_scale, 1e-6 * theta_scale],
                    alpha: vec![1.4, 0.9, 1.8, 0.6],
                    b: 8e-8,
                    gamma_a: 0.6,
                    categories: (0..k).map(|j| format!("c{j}")).collect(),
                },
                init: RegionInit {
                    s0: 0.4 * n, e0: 60.0 + 10.0 * i as f64, i0: 35.0, a0: 40.0,
                    h0: 9.0, r0: 20.0, d0: 6.0 + i as f64,
                },
            },
        );
        populations.insert(id, n);
    }
    SynthSpec {
        regions: 3,
        days: 82,
        true_params: ParamSet {
            global: epimob::epimodel::GlobalParams {
                rho_ei: 0.22, rho_ea: 0.26, rho_ir: 0.12, rho_ih: 0.05,
                rho_ar: 0.14, rho_hr: 0.1, alpha_d: 0.25,
            },
            per_region,
        },
        populations,
        walk: MobilityWalk {
            start: vec![0.7, 0.8, 0.9, 0.75],
            step,
            lower: vec![0.55, 0.65, 0.75, 0.6],
            upper: vec![0.85, 0.95, 1.05, 0.9],
        },
        noise: 0.0,
        start_date: chrono::NaiveDate::from_ymd_opt(2020, 7, 1).unwrap(),
    }
}

fn run(spec: &SynthSpec, synth_seed: u64, cfg: &TrainConfig, label: &str) {
    let out = synth_gen(spec, synth_seed).unwrap();
    let t0 = Instant::now();
    let outcome = learn::train(&out.datasets, cfg).unwrap();
    let best = outcome.trials.iter().find(|t| t.trial == outcome.best_trial).unwrap();
    let mut worst: f64 = 0.0;
    for (i, ds) in out.datasets.iter().enumerate() {
        let rp = &outcome.best.per_region[&ds.region_id];
        let betas: Vec<f64> = ds.mobility.iter().take(81)
            .map(|m| epimob::mobility::beta(m, &rp.mobility_map).unwrap())
            .collect();
        let traj = epimob::epimodel::rollout(&rp.init, &outcome.best.global, rp.mobility_map.gamma_a, &betas, 81).unwrap();
        for t in 61..=81 {
            let rel = (traj.states[t].d - out.noiseless_deaths[i][t]).abs() / out.noiseless_deaths[i][t];
            worst = worst.max(rel);
        }
    }
    println!(
        "{label}: {:5.1}s  trial {}  train {:.2e}  test {:.2e}  ratio {:8.1}  relerr {:.3}",
        t0.elapsed().as_secs_f64(), outcome.best_trial, best.train_loss, best.test_loss,
        best.test_loss / best.train_loss, worst
    );
}

fn main() {
    let base = TrainConfig {
        epochs: 10000, batch_size: 3, learning_rate: 1e-2, lr_decay: 1.0,
        trials: 10, rng_seed: 7, train_days: 60, test_days: 21,
        ..TrainConfig::default()
    };
    let spec = make_spec(0.03, 0.5);
    for learn_s0 in [true, false] {
        for synth_seed in [2020u64, 2022, 2023] {
            let cfg = TrainConfig { epochs: 30000, trials: 24, rng_seed: 7, learn_s0, ..base.clone() };
            run(&spec, synth_seed, &cfg, &format!("s0 {learn_s0} synth {synth_seed}"));
        }
    }
}

#![allow(dead_code)]

use std::sync::Arc;

use asddpg_core::networks::ConvSpec;
use asddpg_core::{LayerParams, NetConfig, Observation};
use rand::Rng;

/// Tiny networks: 12 beams × 2 scans, two convs, 5-4 trunk.
pub fn small_config(dueling: bool) -> NetConfig {
    NetConfig {
        beams: 12,
        stack: 2,
        conv: vec![
            ConvSpec {
                out_channels: 3,
                kernel: 3,
                stride: 2,
            },
            ConvSpec {
                out_channels: 2,
                kernel: 3,
                stride: 1,
            },
        ],
        hidden: vec![5, 4],
        v_max: 0.5,
        omega_max: 1.0,
        max_range: 6.0,
        distance_scale: 11.3,
        dueling_switch: dueling,
    }
}

/// No convolutions, so every scan value reaches the trunk directly.
pub fn flat_config(beams: usize, hidden: Vec<usize>) -> NetConfig {
    NetConfig {
        beams,
        stack: 1,
        conv: Vec::new(),
        hidden,
        v_max: 0.5,
        omega_max: 1.0,
        max_range: 6.0,
        distance_scale: 10.0,
        dueling_switch: true,
    }
}

pub fn random_obs<R: Rng>(config: &NetConfig, rng: &mut R) -> Observation {
    let scan_stack = (0..config.stack)
        .map(|_| {
            (0..config.beams)
                .map(|_| rng.random_range(0.2..config.max_range))
                .collect::<Vec<_>>()
                .into()
        })
        .collect::<Vec<Arc<[f64]>>>();
    Observation {
        scan_stack,
        speed: [rng.random_range(0.0..config.v_max), rng.random_range(-config.omega_max..config.omega_max)],
        target_local: [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
    }
}

pub fn obs_with(config: &NetConfig, scan: f64, target_local: [f64; 2]) -> Observation {
    let s: Arc<[f64]> = vec![scan; config.beams].into();
    Observation {
        scan_stack: vec![s; config.stack],
        speed: [0.0, 0.0],
        target_local,
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradReport {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

impl GradReport {
    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.worst = self.worst.max(other.worst);
    }
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error.
pub const REL_FLOOR: f64 = 1e-4;

/// Compares `analytic[i]` against central differences of `f` w.r.t. the
/// `i`-th coordinate of `state`. Coordinates where the step-h and step-h/4
/// estimates disagree straddle a ReLU kink and are skipped.
pub fn check_coords<T>(
    state: &mut T,
    analytic: &[f64],
    get: impl Fn(&mut T, usize) -> f64,
    set: impl Fn(&mut T, usize, f64),
    f: impl Fn(&T) -> f64,
) -> GradReport {
    let central = |state: &mut T, i: usize, h: f64| {
        let x0 = get(state, i);
        set(state, i, x0 + h);
        let up = f(state);
        set(state, i, x0 - h);
        let down = f(state);
        set(state, i, x0);
        (up - down) / (2.0 * h)
    };
    let mut report = GradReport::default();
    for (i, &g) in analytic.iter().enumerate() {
        let fd = central(state, i, FD_STEP);
        let fd_fine = central(state, i, FD_STEP / 4.0);
        if (fd - fd_fine).abs() > 1e-6 * fd.abs().max(1.0) {
            report.skipped += 1;
            continue;
        }
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(REL_FLOOR);
        report.checked += 1;
        report.worst = report.worst.max(rel);
    }
    report
}

/// All weight then bias gradients, layer by layer.
pub fn flat_grads(params: &[&LayerParams]) -> Vec<f64> {
    params
        .iter()
        .flat_map(|p| p.weight_grads.data().iter().chain(p.bias_grads.data()).copied())
        .collect()
}

/// The scalar parameter at flat index `i`, in [`flat_grads`] order.
pub fn flat_param<'a>(params: Vec<&'a mut LayerParams>, mut i: usize) -> &'a mut f64 {
    for p in params {
        let nw = p.weights.len();
        if i < nw {
            return &mut p.weights.data_mut()[i];
        }
        i -= nw;
        let nb = p.biases.len();
        if i < nb {
            return &mut p.biases.data_mut()[i];
        }
        i -= nb;
    }
    panic!("parameter index out of range")
}

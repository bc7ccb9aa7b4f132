//! Self-consistency checks run against one chirp configuration. Each check
//! compares two independent routes to the same quantity.

use nalgebra::Vector3;
use serde::Serialize;

use crate::effham::{
    attenuation_factor, inversion_factorize, pair_field, supercycle_error_scaling, sweep_midpoint,
};
use crate::error::Result;
use crate::propagate::{
    adiabatic_factorization, bloch_rotation, mixing_buildup, spin_propagate, two_spin_propagate,
    SpinSystem,
};
use crate::spinops::{kron, UNITARY_TOL};
use crate::waveform::{
    hz_to_rad, rad_to_hz, sample_chirp, supercycle, ChirpParams, CompositeTable, DEFAULT_DWELL,
};

pub const FACTORIZATION_TOL: f64 = 0.15;
pub const ATTENUATION_TOL: f64 = 1e-9;
pub const KRON_TOL: f64 = 1e-8;
pub const DWELL_CONVERGENCE_TOL: f64 = 1e-4;
/// Lowest acceptable log-log slope of the four-period error.
pub const SUPERCYCLE_MIN_ORDER: f64 = 1.7;
/// Accepted band for the two-period slope.
pub const TWO_PERIOD_ORDER: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub params: ChirpParams,
    pub dwell: f64,
    pub system: SpinSystem,
    /// Supercycles compared in the dwell-convergence check.
    pub n_supercycles: usize,
    pub composite: CompositeTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Measured figure of merit; NaN when the check could not run.
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl PropertyCheck {
    fn below(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value < limit,
            value,
            limit,
            detail: detail.into(),
        }
    }

    fn errored(name: &str, limit: f64, err: &crate::Error) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            limit,
            detail: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    #[serde(rename = "check")]
    pub checks: Vec<PropertyCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

/// Angle between the images of the z axis under the closed-form adiabatic
/// propagator and the sampled Bloch rotation, maximized over `offsets` (rad/s).
pub fn factorization_discrepancy(params: &ChirpParams, dwell: f64, offsets: &[f64]) -> Result<f64> {
    let w = sample_chirp(params, dwell)?;
    let t = w.duration().min(params.duration());
    let z = Vector3::z();
    let mut worst: f64 = 0.0;
    for &omega0 in offsets {
        let exact = bloch_rotation(&w, omega0) * z;
        let closed = adiabatic_factorization(params, omega0, t)? * z;
        let angle = exact.cross(&closed).norm().atan2(exact.dot(&closed));
        worst = worst.max(angle);
    }
    Ok(worst)
}

/// Offsets `[-20, 20]` kHz in 1 kHz steps, in rad/s.
pub fn factorization_offsets() -> Vec<f64> {
    (-20..=20).map(|k| hz_to_rad(k as f64 * 1e3)).collect()
}

/// Largest deviation of the midpoint tilt identity over a deterministic
/// low-discrepancy set of `n` pairs: rf 1..50 kHz, separation -60..60 kHz,
/// center -10..10 kHz.
pub fn attenuation_deviation(n: usize) -> Result<f64> {
    // additive recurrence with the plastic-number constants
    let (g1, g2, g3) = (
        0.819_172_513_396_164_4,
        0.671_043_606_703_789_2,
        0.549_700_477_901_970_3,
    );
    let mut worst: f64 = 0.0;
    for k in 1..=n {
        let u = |g: f64| (0.5 + g * k as f64).fract();
        let omega1 = hz_to_rad(1e3 + 49e3 * u(g1));
        let delta = hz_to_rad(-60e3 + 120e3 * u(g2));
        let center = hz_to_rad(-10e3 + 20e3 * u(g3));
        let params = ChirpParams::new(hz_to_rad(100e3), omega1 * omega1 / 16.0, omega1)?;
        let sys = SpinSystem::new(center - 0.5 * delta, center + 0.5 * delta, 1.0)?;
        let weight = pair_field(&params, &sys, sweep_midpoint(&params, &sys)).zero_quantum_weight();
        worst = worst.max((weight - attenuation_factor(omega1, sys.delta())?).abs());
    }
    Ok(worst)
}

/// Largest entry-wise deviation between the uncoupled two-spin propagator
/// and the tensor product of the one-spin propagators.
pub fn kron_deviation(params: &ChirpParams, dwell: f64, pairs_hz: &[(f64, f64)]) -> Result<f64> {
    let w = sample_chirp(params, dwell)?;
    let mut worst: f64 = 0.0;
    for &(nu_i, nu_s) in pairs_hz {
        let sys = SpinSystem::from_hz(nu_i, nu_s, 0.0)?;
        let full = two_spin_propagate(&w, &sys).matrix;
        let product = kron(
            &spin_propagate(&w, sys.omega_i),
            &spin_propagate(&w, sys.omega_s),
        );
        worst = worst.max(
            (full - product)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max),
        );
    }
    Ok(worst)
}

/// Largest efficiency change over `n` supercycles when the dwell is halved.
pub fn dwell_sensitivity(
    params: &ChirpParams,
    dwell: f64,
    sys: &SpinSystem,
    n: usize,
) -> Result<f64> {
    let coarse = mixing_buildup(sys, &supercycle(&sample_chirp(params, dwell)?), n);
    let fine = mixing_buildup(sys, &supercycle(&sample_chirp(params, 0.5 * dwell)?), n);
    Ok(coarse
        .efficiencies
        .iter()
        .zip(&fine.efficiencies)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

pub fn run_checks(cfg: &VerifyConfig) -> VerifyReport {
    let mut checks = Vec::new();
    let p = &cfg.params;

    checks.push(
        match factorization_discrepancy(p, cfg.dwell, &factorization_offsets()) {
            Ok(v) => PropertyCheck::below(
                "adiabatic_factorization",
                v,
                FACTORIZATION_TOL,
                "max z-axis image angle (rad), closed form vs Bloch, offsets -20..20 kHz",
            ),
            Err(e) => PropertyCheck::errored("adiabatic_factorization", FACTORIZATION_TOL, &e),
        },
    );

    checks.push(match attenuation_deviation(100) {
        Ok(v) => PropertyCheck::below(
            "attenuation_identity",
            v,
            ATTENUATION_TOL,
            "max |cos^2(dtheta/2) - w1^2/(w1^2 + D^2/4)| at the sweep midpoint, 100 pairs",
        ),
        Err(e) => PropertyCheck::errored("attenuation_identity", ATTENUATION_TOL, &e),
    });

    checks.extend(error_order_checks(cfg));

    let pairs = [
        (rad_to_hz(cfg.system.omega_i), rad_to_hz(cfg.system.omega_s)),
        (-5e3, 5e3),
        (-18e3, 7e3),
        (12e3, 12e3),
    ];
    checks.push(match kron_deviation(p, cfg.dwell, &pairs) {
        Ok(v) => PropertyCheck::below(
            "zero_coupling_factorization",
            v,
            KRON_TOL,
            "max entry deviation of the J=0 two-spin propagator from the one-spin tensor product",
        ),
        Err(e) => PropertyCheck::errored("zero_coupling_factorization", KRON_TOL, &e),
    });

    checks.push(match unitarity_deviation(cfg) {
        Ok(v) => PropertyCheck::below(
            "unitarity",
            v,
            UNITARY_TOL,
            "max ||U^dag U - 1|| over chirp, supercycle powers and composite cycle",
        ),
        Err(e) => PropertyCheck::errored("unitarity", UNITARY_TOL, &e),
    });

    checks.push(
        match dwell_sensitivity(p, cfg.dwell, &cfg.system, cfg.n_supercycles) {
            Ok(v) => PropertyCheck::below(
                "dwell_convergence",
                v,
                DWELL_CONVERGENCE_TOL,
                format!(
                    "max efficiency change over {} supercycles when the dwell is halved",
                    cfg.n_supercycles
                ),
            ),
            Err(e) => PropertyCheck::errored("dwell_convergence", DWELL_CONVERGENCE_TOL, &e),
        },
    );

    VerifyReport { checks }
}

fn error_order_checks(cfg: &VerifyConfig) -> Vec<PropertyCheck> {
    let eps = [0.02, 0.04, 0.08, 0.16, 0.32];
    let fitted = sample_chirp(&cfg.params, cfg.dwell)
        .and_then(|w| inversion_factorize(&w, cfg.system.omega_i))
        .and_then(|f| supercycle_error_scaling(f.theta1, f.theta2, &eps));
    match fitted {
        Ok(s) => vec![
            PropertyCheck {
                name: "two_period_error_order".into(),
                passed: (TWO_PERIOD_ORDER.0..=TWO_PERIOD_ORDER.1).contains(&s.two_period_slope),
                value: s.two_period_slope,
                limit: TWO_PERIOD_ORDER.1,
                detail: format!(
                    "log-log slope of the U Ubar error vs inversion deficit, accepted band {:?}",
                    TWO_PERIOD_ORDER
                ),
            },
            PropertyCheck {
                name: "supercycle_error_order".into(),
                passed: s.four_period_slope >= SUPERCYCLE_MIN_ORDER,
                value: s.four_period_slope,
                limit: SUPERCYCLE_MIN_ORDER,
                detail: "log-log slope of the U Ubar Ubar U error; must be at least quadratic"
                    .into(),
            },
        ],
        Err(e) => vec![
            PropertyCheck::errored("two_period_error_order", TWO_PERIOD_ORDER.1, &e),
            PropertyCheck::errored("supercycle_error_order", SUPERCYCLE_MIN_ORDER, &e),
        ],
    }
}

fn unitarity_deviation(cfg: &VerifyConfig) -> Result<f64> {
    let w = sample_chirp(&cfg.params, cfg.dwell)?;
    let single = two_spin_propagate(&w, &cfg.system);
    let cycle = two_spin_propagate(&supercycle(&w), &cfg.system);
    let composite = cfg
        .composite
        .waveform(cfg.params.rf_amplitude, cfg.dwell.min(DEFAULT_DWELL))?;
    let composite = two_spin_propagate(&composite, &cfg.system);
    let powered = cycle.pow(cfg.n_supercycles.max(1) as u32);
    Ok([single, cycle, powered, composite]
        .iter()
        .map(|u| u.unitarity_error())
        .fold(0.0, f64::max))
}

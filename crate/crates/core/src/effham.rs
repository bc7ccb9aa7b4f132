//! Interaction-frame analysis of chirp mixing.
//!
//! In the frame that follows each spin's effective field, the scalar
//! coupling splits into a zero-quantum part weighted by
//! `cos^2((theta_I - theta_S) / 2)` and rotating at the difference of the
//! effective-field strengths, a double-quantum part weighted by
//! `sin^2((theta_I - theta_S) / 2)` and rotating at their sum, and a static
//! `I_z S_z` part weighted by `cos(theta_I - theta_S)`. This module integrates
//! those pieces over a sweep and analyses how imperfect inversion errors
//! propagate through repeated sweeps.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::propagate::{spin_propagate, SpinSystem};
use crate::spinops::{su2_propagator, Mat2, Mat4, ProductOperator, C64};
use crate::waveform::{ChirpParams, PulseWaveform};

/// Effective field seen by one spin in the frame of the chirp phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinField {
    /// `sqrt((omega0 - omega(t))^2 + omega1^2)`, rad/s
    pub omega_eff: f64,
    /// `atan2(omega1, omega0 - omega(t))`, in `[0, pi]`
    pub theta: f64,
}

pub fn effective_field(params: &ChirpParams, omega0: f64, t: f64) -> SpinField {
    let residual = omega0 - params.frequency(t);
    let w1 = params.rf_amplitude;
    SpinField {
        omega_eff: residual.hypot(w1),
        theta: w1.atan2(residual),
    }
}

/// `int_0^t omega_eff dt'`, evaluated from the antiderivative of
/// `sqrt(u^2 + omega1^2)` with `u = omega0 - omega(t)` linear in time.
pub fn effective_field_integral(params: &ChirpParams, omega0: f64, t: f64) -> f64 {
    let w1 = params.rf_amplitude;
    let antiderivative = |u: f64| {
        if w1 == 0.0 {
            0.5 * u * u.abs()
        } else {
            0.5 * (u * u.hypot(w1) + w1 * w1 * (u / w1).asinh())
        }
    };
    let u0 = omega0 - params.frequency(0.0);
    let u1 = omega0 - params.frequency(t);
    (antiderivative(u0) - antiderivative(u1)) / params.sweep_rate
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveFieldState {
    pub t: f64,
    pub omega_eff_i: f64,
    pub omega_eff_s: f64,
    pub theta_i: f64,
    pub theta_s: f64,
    /// `omega_eff_i - omega_eff_s`
    pub omega_d: f64,
    /// `omega_I - omega_S`
    pub delta: f64,
}

impl EffectiveFieldState {
    /// `cos^2((theta_I - theta_S) / 2)`
    pub fn zero_quantum_weight(&self) -> f64 {
        (0.5 * (self.theta_i - self.theta_s)).cos().powi(2)
    }
}

pub fn pair_field(params: &ChirpParams, sys: &SpinSystem, t: f64) -> EffectiveFieldState {
    let i = effective_field(params, sys.omega_i, t);
    let s = effective_field(params, sys.omega_s, t);
    EffectiveFieldState {
        t,
        omega_eff_i: i.omega_eff,
        omega_eff_s: s.omega_eff,
        theta_i: i.theta,
        theta_s: s.theta,
        omega_d: i.omega_eff - s.omega_eff,
        delta: sys.delta(),
    }
}

/// `omega1^2 / (omega1^2 + Delta^2 / 4)`.
pub fn attenuation_factor(omega1: f64, delta: f64) -> Result<f64> {
    if !(omega1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rf amplitude must be positive, got {omega1}"
        )));
    }
    Ok(omega1 * omega1 / (omega1 * omega1 + 0.25 * delta * delta))
}

/// Time at which the sweep passes midway between the two offsets.
pub fn sweep_midpoint(params: &ChirpParams, sys: &SpinSystem) -> f64 {
    params.crossing_time(0.5 * (sys.omega_i + sys.omega_s))
}

/// Cumulative integral of uniformly spaced samples. Each interval uses the
/// three-point quadratic through its neighbourhood (Simpson-type, local
/// error O(h^4)); fewer than three samples fall back to the trapezoid rule.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(0.0);
    let mut acc = 0.0;
    for k in 0..n - 1 {
        let piece = if n < 3 {
            0.5 * h * (values[k] + values[k + 1])
        } else if k + 2 < n {
            h / 12.0 * (5.0 * values[k] + 8.0 * values[k + 1] - values[k + 2])
        } else {
            h / 12.0 * (-values[k - 1] + 8.0 * values[k] + 5.0 * values[k + 1])
        };
        acc += piece;
        out.push(acc);
    }
    out
}

/// Zero- and double-quantum coupling accumulated over one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingIntegrals {
    pub times: Vec<f64>,
    /// rad/s
    pub c: Vec<f64>,
    /// rad/s
    pub d: Vec<f64>,
    pub eta: Vec<f64>,
    pub dq: Vec<f64>,
    /// Accumulated `int c dt`, `int d dt`.
    pub zq_integral: (f64, f64),
    /// Accumulated static `I_z S_z` coefficient.
    pub zz_integral: f64,
    /// `int_0^T omega_d dt`
    pub difference_phase: f64,
}

impl CouplingIntegrals {
    pub fn eta_final(&self) -> f64 {
        *self.eta.last().unwrap_or(&0.0)
    }

    pub fn dq_final(&self) -> f64 {
        *self.dq.last().unwrap_or(&0.0)
    }

    pub fn dq_max(&self) -> f64 {
        self.dq.iter().cloned().fold(0.0, f64::max)
    }

    /// Centre of the window of length `window` (seconds) over which eta grows
    /// fastest. A window spanning several oscillations of the
    /// difference-frequency phase separates the net buildup from the
    /// bounded ripple that precedes it.
    pub fn steepest_growth_time(&self, window: f64) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let h = self.times[1] - self.times[0];
        let span = ((window / h).round() as usize).max(1);
        if span >= self.times.len() {
            return None;
        }
        (0..self.times.len() - span)
            .map(|k| (k, self.eta[k + span] - self.eta[k]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| 0.5 * (self.times[k] + self.times[k + span]))
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "time_s,c,d,eta,dq")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                self.times[k], self.c[k], self.d[k], self.eta[k], self.dq[k]
            )?;
        }
        Ok(())
    }
}

/// Coupling integrands `c(t)`, `d(t)` and the buildups `eta(t)`, `dq(t)`
/// on a uniform grid of at most `dwell` spacing covering `[0, T]`.
pub fn coupling_integrals(
    params: &ChirpParams,
    sys: &SpinSystem,
    dwell: f64,
) -> Result<CouplingIntegrals> {
    if !(dwell > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dwell must be positive, got {dwell}"
        )));
    }
    let duration = params.duration();
    let intervals = (duration / dwell).ceil().max(2.0) as usize;
    let h = duration / intervals as f64;
    let times: Vec<f64> = (0..=intervals).map(|k| k as f64 * h).collect();
    let coupling = TAU * sys.coupling_hz;

    let fields: Vec<EffectiveFieldState> =
        times.iter().map(|&t| pair_field(params, sys, t)).collect();
    let phase_i: Vec<f64> = times
        .iter()
        .map(|&t| effective_field_integral(params, sys.omega_i, t))
        .collect();
    let phase_s: Vec<f64> = times
        .iter()
        .map(|&t| effective_field_integral(params, sys.omega_s, t))
        .collect();

    let mut c = Vec::with_capacity(times.len());
    let mut d = Vec::with_capacity(times.len());
    let mut dq_re = Vec::with_capacity(times.len());
    let mut dq_im = Vec::with_capacity(times.len());
    let mut zz = Vec::with_capacity(times.len());
    for (k, f) in fields.iter().enumerate() {
        let tilt = f.theta_i - f.theta_s;
        let zq_weight = coupling * (0.5 * tilt).cos().powi(2);
        let dq_weight = coupling * (0.5 * tilt).sin().powi(2);
        let (s, co) = (phase_i[k] - phase_s[k]).sin_cos();
        c.push(zq_weight * co);
        d.push(zq_weight * s);
        let (s, co) = (phase_i[k] + phase_s[k]).sin_cos();
        dq_re.push(dq_weight * co);
        dq_im.push(dq_weight * s);
        zz.push(coupling * tilt.cos());
    }
    let int_c = cumulative_simpson(&c, h);
    let int_d = cumulative_simpson(&d, h);
    let int_dq_re = cumulative_simpson(&dq_re, h);
    let int_dq_im = cumulative_simpson(&dq_im, h);
    let int_zz = cumulative_simpson(&zz, h);
    let eta = int_c.iter().zip(&int_d).map(|(a, b)| a.hypot(*b)).collect();
    let dq = int_dq_re
        .iter()
        .zip(&int_dq_im)
        .map(|(a, b)| a.hypot(*b))
        .collect();
    let last = intervals;
    Ok(CouplingIntegrals {
        zq_integral: (int_c[last], int_d[last]),
        zz_integral: int_zz[last],
        difference_phase: phase_i[last] - phase_s[last],
        times,
        c,
        d,
        eta,
        dq,
    })
}

/// Number of whole periods needed to accumulate a zero-quantum rotation
/// of `pi`, and the corresponding time.
pub fn periods_to_pi(eta_period: f64, period: f64) -> Result<(u64, f64)> {
    if !(eta_period > 0.0) {
        return Err(Error::NoCoupling);
    }
    let n = (PI / eta_period - 1e-9).ceil().max(1.0) as u64;
    Ok((n, n as f64 * period))
}

/// First-order effective coupling of one or more sweeps:
/// `a_zz I_zS_z + b (cos alpha (I_xS_x + I_yS_y) + sin alpha (I_xS_y - I_yS_x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCoupling {
    pub a_zz: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dq_residual: f64,
}

impl EffectiveCoupling {
    /// Effective coupling of a single sweep.
    pub fn from_integrals(ci: &CouplingIntegrals) -> Self {
        let (zc, zd) = ci.zq_integral;
        Self {
            a_zz: ci.zz_integral,
            b: zc.hypot(zd),
            alpha: zd.atan2(zc),
            beta: ci.difference_phase.rem_euclid(TAU),
            dq_residual: ci.dq_final(),
        }
    }

    pub fn hamiltonian(&self) -> Mat4 {
        let (s, c) = self.alpha.sin_cos();
        ProductOperator::Bilinear(crate::spinops::Axis::Z, crate::spinops::Axis::Z).matrix()
            * C64::from(self.a_zz)
            + (ProductOperator::ZeroQuantumX.matrix() * C64::from(c)
                + ProductOperator::ZeroQuantumY.matrix() * C64::from(s))
                * C64::from(self.b)
    }

    /// `I_z -> S_z` transfer produced by `exp(-i H)`, `sin^2(b / 2)`.
    pub fn predicted_transfer(&self) -> f64 {
        (0.5 * self.b).sin().powi(2)
    }
}

/// Adds the second sweep's coupling, which reaches the first-period frame
/// with its `I_xS_y - I_yS_x` part reversed by the inversion and its
/// zero-quantum phase advanced by `beta`.
pub fn compose_two_periods(h1: &EffectiveCoupling, beta: f64) -> EffectiveCoupling {
    let first = Complex64::from_polar(h1.b, h1.alpha);
    let second = Complex64::from_polar(h1.b, -(h1.alpha + beta));
    let sum = first + second;
    EffectiveCoupling {
        a_zz: 2.0 * h1.a_zz,
        b: sum.norm(),
        alpha: if sum.norm() > 0.0 { sum.arg() } else { 0.0 },
        beta,
        // phases of the double-quantum parts are not tracked; this is a bound
        dq_residual: 2.0 * h1.dq_residual,
    }
}

/// `exp(-i a I_z)` on one spin.
pub fn rz(angle: f64) -> Mat2 {
    su2_propagator(&Vector3::new(0.0, 0.0, 1.0), angle)
}

/// `exp(-i a I_y)` on one spin.
pub fn ry(angle: f64) -> Mat2 {
    su2_propagator(&Vector3::new(0.0, 1.0, 0.0), angle)
}

/// Single-spin propagator written as
/// `exp(-i theta1 I_z) exp(-i (pi - epsilon) I_y) exp(-i theta2 I_z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionFactorization {
    pub theta1: f64,
    pub theta2: f64,
    pub epsilon: f64,
    /// `|Tr(V^dag U)| / 2` between reconstruction and propagator.
    pub fidelity: f64,
}

impl InversionFactorization {
    pub fn reconstruct(&self) -> Mat2 {
        rz(self.theta1) * ry(PI - self.epsilon) * rz(self.theta2)
    }
}

/// z-y-z Euler angles `(a, b, c)` of `u` up to a global phase, with
/// `b` in `[0, pi]`.
pub fn zyz_angles(u: &Mat2) -> (f64, f64, f64) {
    // remove the global phase so that u lies in SU(2); the remaining sign
    // ambiguity only shifts `a` by 2 pi
    let v = u / u.determinant().sqrt();
    let cos_half = 0.5 * (v[(0, 0)].norm() + v[(1, 1)].norm());
    let sin_half = 0.5 * (v[(1, 0)].norm() + v[(0, 1)].norm());
    let b = 2.0 * sin_half.atan2(cos_half);
    let tiny = 1e-12;
    let half_sum = if cos_half > tiny {
        -v[(0, 0)].arg()
    } else {
        0.0
    };
    let half_diff = if sin_half > tiny {
        v[(1, 0)].arg()
    } else {
        0.0
    };
    // with cos(b/2) ~ 0 only the difference is fixed, and vice versa
    let (half_sum, half_diff) = if cos_half <= tiny {
        (0.0, half_diff)
    } else if sin_half <= tiny {
        (half_sum, 0.0)
    } else {
        (half_sum, half_diff)
    };
    (half_sum + half_diff, b, half_sum - half_diff)
}

fn phase_fidelity(a: &Mat2, b: &Mat2) -> f64 {
    0.5 * (a.adjoint() * b).trace().norm()
}

/// Fits the flanking z-rotations and inversion deficit of one chirp period.
pub fn inversion_factorize(w: &PulseWaveform, omega0: f64) -> Result<InversionFactorization> {
    let u = spin_propagate(w, omega0);
    let (theta1, b, theta2) = zyz_angles(&u);
    let epsilon = PI - b;
    if epsilon > FRAC_PI_2 {
        return Err(Error::NonAdiabatic { epsilon });
    }
    let mut fit = InversionFactorization {
        theta1,
        theta2,
        epsilon,
        fidelity: 0.0,
    };
    fit.fidelity = phase_fidelity(&fit.reconstruct(), &u);
    Ok(fit)
}

/// Frobenius distance, minimized over global phase, from `u` in U(2) to
/// the nearest z-rotation: `2 sqrt(1 - |u_00|)`, written as
/// `2 |u_10| / sqrt(1 + |u_00|)` to avoid cancellation.
pub fn distance_to_z_rotation(u: &Mat2) -> f64 {
    let p = 0.5 * (u[(0, 0)].norm() + u[(1, 1)].norm());
    let q = 0.5 * (u[(1, 0)].norm() + u[(0, 1)].norm());
    2.0 * q / (1.0 + p.min(1.0)).sqrt()
}

/// Frobenius distance, minimized over global phase, from `u` in U(2) to
/// the identity: `2 sqrt(1 - |Tr u| / 2)`, evaluated through the traceless
/// part of `u`.
pub fn distance_to_identity(u: &Mat2) -> f64 {
    let half_trace = u.trace() * C64::from(0.5);
    let traceless = u - Mat2::identity() * half_trace;
    let half_abs = half_trace.norm().min(1.0);
    std::f64::consts::SQRT_2 * traceless.norm() / (1.0 + half_abs).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorScaling {
    pub epsilons: Vec<f64>,
    /// Distance of `U Ubar` from the nearest z-rotation.
    pub two_period: Vec<f64>,
    /// Distance of `U Ubar Ubar U` from the nearest z-rotation.
    pub four_period: Vec<f64>,
    /// Distance of `U Ubar` from the identity.
    pub two_period_total: Vec<f64>,
    /// Distance of `U Ubar Ubar U` from the identity.
    pub four_period_total: Vec<f64>,
    pub two_period_slope: f64,
    pub four_period_slope: f64,
    pub two_period_total_slope: f64,
    pub four_period_total_slope: f64,
}

/// Products of imperfect inversions `U = Rz(t1) Ry(pi - eps) Rz(t2)` and their
/// pi-phase-shifted partners `Ubar = Rz(pi) U Rz(-pi)`, and the log-log
/// slopes of their errors against `eps`.
pub fn supercycle_error_scaling(
    theta1: f64,
    theta2: f64,
    eps_values: &[f64],
) -> Result<ErrorScaling> {
    if eps_values.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "need at least 4 epsilon values, got {}",
            eps_values.len()
        )));
    }
    if let Some(e) = eps_values.iter().find(|e| !(**e > 0.0 && **e <= 0.5)) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {e} outside (0, 0.5]"
        )));
    }
    let mut scaling = ErrorScaling {
        epsilons: eps_values.to_vec(),
        two_period: Vec::new(),
        four_period: Vec::new(),
        two_period_total: Vec::new(),
        four_period_total: Vec::new(),
        two_period_slope: 0.0,
        four_period_slope: 0.0,
        two_period_total_slope: 0.0,
        four_period_total_slope: 0.0,
    };
    for &eps in eps_values {
        let u = rz(theta1) * ry(PI - eps) * rz(theta2);
        let bar = rz(PI) * u * rz(-PI);
        let two = u * bar;
        let four = u * bar * bar * u;
        scaling.two_period.push(distance_to_z_rotation(&two));
        scaling.four_period.push(distance_to_z_rotation(&four));
        scaling.two_period_total.push(distance_to_identity(&two));
        scaling.four_period_total.push(distance_to_identity(&four));
    }
    for series in [
        &scaling.two_period,
        &scaling.four_period,
        &scaling.two_period_total,
        &scaling.four_period_total,
    ] {
        if series.iter().all(|e| *e < 1e-12) {
            return Err(Error::DegenerateFit(
                "all errors below 1e-12; theta1 + theta2 is a multiple of 2 pi".into(),
            ));
        }
    }
    let eps = &scaling.epsilons;
    scaling.two_period_slope = log_log_slope(eps, &scaling.two_period);
    scaling.four_period_slope = log_log_slope(eps, &scaling.four_period);
    scaling.two_period_total_slope = log_log_slope(eps, &scaling.two_period_total);
    scaling.four_period_total_slope = log_log_slope(eps, &scaling.four_period_total);
    Ok(scaling)
}

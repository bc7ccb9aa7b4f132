//! Cross-checks of the step propagators against direct RK4 integration of
//! the equations of motion with the continuous chirp phase. The oracle
//! builds its own operators from Pauli matrices.

use chirp_mix::propagate::{bloch_propagate, two_spin_propagate, SpinSystem};
use chirp_mix::spinops::{Mat4, C64};
use chirp_mix::waveform::{chirp, hz_to_rad, supercycle, ChirpParams, DEFAULT_DWELL};
use nalgebra::{Matrix2, Vector3};
use std::f64::consts::{PI, TAU};

fn pauli() -> [Matrix2<C64>; 3] {
    let (o, i) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    let j = C64::new(0.0, 1.0);
    [
        Matrix2::new(o, i, i, o),
        Matrix2::new(o, -j, j, o),
        Matrix2::new(i, o, o, -i),
    ]
}

fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Mat4 {
    Mat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

struct Oracle {
    i: [Mat4; 3],
    s: [Mat4; 3],
    coupling: Mat4,
}

impl Oracle {
    fn new() -> Self {
        let one = Matrix2::<C64>::identity();
        let half = C64::from(0.5);
        let p = pauli();
        let i = [0, 1, 2].map(|k| kron2(&(p[k] * half), &one));
        let s = [0, 1, 2].map(|k| kron2(&one, &(p[k] * half)));
        let coupling = i[0] * s[0] + i[1] * s[1] + i[2] * s[2];
        Self { i, s, coupling }
    }

    fn hamiltonian(&self, sys: &SpinSystem, w1: f64, phase: f64) -> Mat4 {
        let (sn, cs) = phase.sin_cos();
        let r = C64::from;
        (self.i[2] * r(sys.omega_i))
            + self.s[2] * r(sys.omega_s)
            + (self.i[0] + self.s[0]) * r(w1 * cs)
            + (self.i[1] + self.s[1]) * r(w1 * sn)
            + self.coupling * r(TAU * sys.coupling_hz)
    }

    /// RK4 for `dU/dt = -i H(t) U` over `[0, duration]`.
    fn propagate(
        &self,
        sys: &SpinSystem,
        w1: f64,
        phase: impl Fn(f64) -> f64,
        duration: f64,
        steps: usize,
    ) -> Mat4 {
        let h = duration / steps as f64;
        let mi = C64::new(0.0, -1.0);
        let rhs = |t: f64, u: &Mat4| self.hamiltonian(sys, w1, phase(t)) * u * mi;
        let mut u = Mat4::identity();
        let hc = C64::from(h);
        for k in 0..steps {
            let t = k as f64 * h;
            let k1 = rhs(t, &u);
            let k2 = rhs(t + 0.5 * h, &(u + k1 * (hc * 0.5)));
            let k3 = rhs(t + 0.5 * h, &(u + k2 * (hc * 0.5)));
            let k4 = rhs(t + h, &(u + k3 * hc));
            u += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * (hc / 6.0);
        }
        u
    }
}

fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn reference_chirp() -> ChirpParams {
    ChirpParams::from_khz(30.0, 10.0, 16.0).unwrap()
}

#[test]
fn two_spin_chirp_propagator_matches_rk4() {
    let p = reference_chirp();
    let oracle = Oracle::new();
    for (nu_i, nu_s) in [(-5e3, 5e3), (-5e3, 20e3)] {
        let sys = SpinSystem::from_hz(nu_i, nu_s, 33.0).unwrap();
        let exact = oracle.propagate(&sys, p.rf_amplitude, |t| p.phase(t), p.duration(), 200_000);
        let deviation = |dwell: f64| {
            max_abs(&(exact - two_spin_propagate(&chirp(&p, dwell).unwrap(), &sys).matrix))
        };
        let (coarse, fine) = (deviation(DEFAULT_DWELL), deviation(0.5 * DEFAULT_DWELL));
        assert!(coarse < 1e-5, "({nu_i}, {nu_s}): deviation {coarse:e}");
        // second order in the dwell
        assert!(fine < 0.3 * coarse, "{fine:e} vs {coarse:e}");
    }
}

#[test]
fn supercycle_propagator_matches_rk4() {
    let p = reference_chirp();
    let period = p.duration();
    let oracle = Oracle::new();
    let sys = SpinSystem::from_hz(-5e3, 5e3, 33.0).unwrap();
    let plain = oracle.propagate(&sys, p.rf_amplitude, |t| p.phase(t), period, 200_000);
    let shifted = oracle.propagate(&sys, p.rf_amplitude, |t| p.phase(t) + PI, period, 200_000);
    let exact = plain * shifted * shifted * plain;
    let stepped = two_spin_propagate(&supercycle(&chirp(&p, DEFAULT_DWELL).unwrap()), &sys).matrix;
    let diff = max_abs(&(exact - stepped));
    assert!(diff < 4e-5, "deviation {diff:e}");
    // transfer after 10/J of mixing
    let n = (10.0 / 33.0 / (4.0 * period)) as u32;
    let transfer = |u: &Mat4| {
        let sz = [0.5, -0.5, 0.5, -0.5];
        let iz = [0.5, 0.5, -0.5, -0.5];
        let mut acc = 0.0;
        for j in 0..4 {
            for k in 0..4 {
                acc += sz[j] * u[(j, k)].norm_sqr() * iz[k];
            }
        }
        acc
    };
    let a = transfer(&exact.pow(n));
    let b = transfer(&stepped.pow(n));
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn bloch_inversion_matches_rk4() {
    let p = reference_chirp();
    let omega0 = hz_to_rad(-5e3);
    let field = |t: f64| {
        let (s, c) = p.phase(t).sin_cos();
        Vector3::new(p.rf_amplitude * c, p.rf_amplitude * s, omega0)
    };
    let steps = 200_000;
    let h = p.duration() / steps as f64;
    let mut x = Vector3::z();
    for k in 0..steps {
        let t = k as f64 * h;
        let f = |t: f64, x: &Vector3<f64>| field(t).cross(x);
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &(x + k1 * 0.5 * h));
        let k3 = f(t + 0.5 * h, &(x + k2 * 0.5 * h));
        let k4 = f(t + h, &(x + k3 * h));
        x += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    }
    let traj = bloch_propagate(&chirp(&p, DEFAULT_DWELL).unwrap(), omega0, Vector3::z()).unwrap();
    assert!((traj.last() - x).norm() < 1e-6);
    for v in &traj.vectors {
        assert!((v.norm() - 1.0).abs() < 1e-9);
    }
    // the spin ends on the inverted side of a cone about the final field
    assert!(traj.last().z < -0.95);
}

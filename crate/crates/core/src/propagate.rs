//! Time-domain propagation under sampled waveforms.
//!
//! Within a step the rf phase is `phase + frequency * (t - t_mid)`. Each step
//! is propagated exactly in the frame that follows this ramp, where the
//! Hamiltonian is constant, so every step is exactly unitary (orthogonal for
//! Bloch vectors). For stepped-phase samples this is the plain exponential of
//! the midpoint Hamiltonian; for chirps it removes the error of freezing a
//! rapidly advancing phase, leaving only the sweep curvature within a step.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};

use crate::effham::{effective_field, effective_field_integral};
use crate::error::{Error, Result};
use crate::spinops::{
    exp_hermitian, rodrigues, rotation, su2_propagator, Axis, Mat2, Mat4, ProductOperator,
    UnitaryPropagator, C64, UNITARY_TOL,
};
use crate::waveform::{ChirpParams, PulseWaveform, Sample};

/// Two coupled spins: offsets in rad/s, scalar coupling in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinSystem {
    pub omega_i: f64,
    pub omega_s: f64,
    pub coupling_hz: f64,
}

impl SpinSystem {
    pub fn new(omega_i: f64, omega_s: f64, coupling_hz: f64) -> Result<Self> {
        if !(omega_i.is_finite() && omega_s.is_finite()) {
            return Err(Error::InvalidParameter("offsets must be finite".into()));
        }
        if !(coupling_hz >= 0.0 && coupling_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coupling must be finite and non-negative, got {coupling_hz}"
            )));
        }
        Ok(Self {
            omega_i,
            omega_s,
            coupling_hz,
        })
    }

    /// Offsets given in Hz.
    pub fn from_hz(nu_i: f64, nu_s: f64, coupling_hz: f64) -> Result<Self> {
        Self::new(TAU * nu_i, TAU * nu_s, coupling_hz)
    }

    pub fn swapped(&self) -> Self {
        Self {
            omega_i: self.omega_s,
            omega_s: self.omega_i,
            ..*self
        }
    }

    /// `omega_I - omega_S`
    pub fn delta(&self) -> f64 {
        self.omega_i - self.omega_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlochTrajectory {
    pub times: Vec<f64>,
    pub vectors: Vec<Vector3<f64>>,
}

impl BlochTrajectory {
    pub fn last(&self) -> Vector3<f64> {
        *self
            .vectors
            .last()
            .expect("trajectory holds the initial vector")
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "time_s,mx,my,mz")?;
        for (t, v) in self.times.iter().zip(&self.vectors) {
            writeln!(out, "{:.9e},{:.9},{:.9},{:.9}", t, v.x, v.y, v.z)?;
        }
        Ok(())
    }
}

/// Bloch-vector trajectory under `w` at offset `omega0`, sampled at every
/// dwell boundary (the first entry is `x0` at t = 0).
pub fn bloch_propagate(
    w: &PulseWaveform,
    omega0: f64,
    x0: Vector3<f64>,
) -> Result<BlochTrajectory> {
    if (x0.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "initial magnetization must be a unit vector, |x0| = {}",
            x0.norm()
        )));
    }
    let mut times = Vec::with_capacity(w.len() + 1);
    let mut vectors = Vec::with_capacity(w.len() + 1);
    times.push(0.0);
    vectors.push(x0);
    let mut x = x0;
    for (k, s) in w.played().enumerate() {
        x = bloch_step(&s, omega0, w.dwell) * x;
        times.push((k + 1) as f64 * w.dwell);
        vectors.push(x);
    }
    Ok(BlochTrajectory { times, vectors })
}

/// Edge phases of a step, `phase -/+ frequency * dwell / 2`.
fn edge_phases(s: &Sample, dwell: f64) -> (f64, f64) {
    let half = 0.5 * s.frequency * dwell;
    (s.phase - half, s.phase + half)
}

fn bloch_step(s: &Sample, omega0: f64, dwell: f64) -> Matrix3<f64> {
    let (start, end) = edge_phases(s, dwell);
    let field = Vector3::new(s.amplitude, 0.0, omega0 - s.frequency);
    rotation(Axis::Z, end) * rodrigues(&field, dwell) * rotation(Axis::Z, -start)
}

/// Net rotation of the Bloch vector under `w`.
pub fn bloch_rotation(w: &PulseWaveform, omega0: f64) -> Matrix3<f64> {
    w.played().fold(Matrix3::identity(), |acc, s| {
        bloch_step(&s, omega0, w.dwell) * acc
    })
}

/// Closed-form adiabatic propagator of a chirp:
/// `exp(phi(t) Oz) exp(theta(t) Oy) exp(Phi(t) Oz) exp(-theta(0) Oy)`,
/// where `Phi` is the integrated effective-field strength. The trailing
/// factor maps the initial magnetization into the effective-field frame;
/// it reduces to the identity when the sweep starts far from resonance.
pub fn adiabatic_factorization(params: &ChirpParams, omega0: f64, t: f64) -> Result<Matrix3<f64>> {
    let duration = params.duration();
    if !(0.0..=duration).contains(&t) {
        return Err(Error::TimeOutOfRange { t, duration });
    }
    let start = effective_field(params, omega0, 0.0);
    let now = effective_field(params, omega0, t);
    let precession = effective_field_integral(params, omega0, t);
    Ok(rotation(Axis::Z, params.phase(t))
        * rotation(Axis::Y, now.theta)
        * rotation(Axis::Z, precession)
        * rotation(Axis::Y, -start.theta))
}

/// SU(2) propagator of a single spin at offset `omega0`.
pub fn spin_propagate(w: &PulseWaveform, omega0: f64) -> Mat2 {
    let z = Vector3::z();
    w.played().fold(Mat2::identity(), |acc, s| {
        let (start, end) = edge_phases(&s, w.dwell);
        let field = Vector3::new(s.amplitude, 0.0, omega0 - s.frequency);
        su2_propagator(&z, end) * su2_propagator(&field, w.dwell) * su2_propagator(&z, -start) * acc
    })
}

/// Rotating-frame Hamiltonian of the coupled pair in the frame of the rf
/// phase: the static part plus `F_x` and `F_z` pieces.
struct PairHamiltonian {
    base: Mat4,
    fx: Mat4,
    fz: Mat4,
}

impl PairHamiltonian {
    fn new(sys: &SpinSystem) -> Self {
        let base = ProductOperator::I(Axis::Z).matrix() * C64::from(sys.omega_i)
            + ProductOperator::S(Axis::Z).matrix() * C64::from(sys.omega_s)
            + ProductOperator::Isotropic.matrix() * C64::from(TAU * sys.coupling_hz);
        Self {
            base,
            fx: ProductOperator::F(Axis::X).matrix(),
            fz: ProductOperator::F(Axis::Z).matrix(),
        }
    }

    /// `exp(-i phi_end F_z) exp(-i dwell H') exp(i phi_start F_z)` with
    /// `H' = base + amplitude F_x - frequency F_z`.
    fn step(&self, s: &Sample, dwell: f64) -> Mat4 {
        let h = self.base + self.fx * C64::from(s.amplitude) - self.fz * C64::from(s.frequency);
        let inner = exp_hermitian(&h, dwell);
        let (start, end) = edge_phases(s, dwell);
        // F_z is diag(1, 0, 0, -1)
        let diag = |phi: f64| {
            let e = C64::from_polar(1.0, -phi);
            [e, C64::from(1.0), C64::from(1.0), e.conj()]
        };
        let (left, right) = (diag(end), diag(-start));
        Mat4::from_fn(|j, k| left[j] * inner[(j, k)] * right[k])
    }
}

/// Exact two-spin propagator under `w`. Runs of identical samples reuse
/// one step exponential.
pub fn two_spin_propagate(w: &PulseWaveform, sys: &SpinSystem) -> UnitaryPropagator {
    let ham = PairHamiltonian::new(sys);
    let mut u = Mat4::identity();
    let mut cached: Option<(Sample, Mat4)> = None;
    for s in w.played() {
        let step = match &cached {
            Some((k, m)) if *k == s => *m,
            _ => {
                let m = ham.step(&s, w.dwell);
                cached = Some((s, m));
                m
            }
        };
        u = step * u;
    }
    UnitaryPropagator::new(u, w.duration())
}

/// `Tr(S_z U I_z U^dag) / Tr(I_z^2)` for a matrix assumed unitary.
///
/// `I_z` and `S_z` are diagonal, so the trace reduces to a weighted sum of
/// `|U_jk|^2`.
pub(crate) fn efficiency_of(u: &Mat4) -> f64 {
    const IZ: [f64; 4] = [0.5, 0.5, -0.5, -0.5];
    const SZ: [f64; 4] = [0.5, -0.5, 0.5, -0.5];
    let mut acc = 0.0;
    for j in 0..4 {
        for k in 0..4 {
            acc += SZ[j] * u[(j, k)].norm_sqr() * IZ[k];
        }
    }
    acc
}

pub fn transfer_efficiency(u: &UnitaryPropagator) -> Result<f64> {
    let deviation = u.unitarity_error();
    if deviation > UNITARY_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    let iz = ProductOperator::I(Axis::Z).matrix();
    let sz = ProductOperator::S(Axis::Z).matrix();
    let value = (sz * u.conjugate(&iz)).trace() / (iz * iz).trace();
    debug_assert!(value.im.abs() < 1e-9);
    Ok(value.re)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingCurve {
    pub coupling_hz: f64,
    pub mixing_times: Vec<f64>,
    pub efficiencies: Vec<f64>,
}

impl MixingCurve {
    pub fn max(&self) -> (f64, f64) {
        self.mixing_times.iter().zip(&self.efficiencies).fold(
            (0.0, f64::NEG_INFINITY),
            |best, (&t, &e)| {
                if e > best.1 {
                    (t, e)
                } else {
                    best
                }
            },
        )
    }

    /// Earliest mixing time at which the efficiency exceeds `threshold`.
    pub fn first_crossing(&self, threshold: f64) -> Option<f64> {
        self.mixing_times
            .iter()
            .zip(&self.efficiencies)
            .find(|(_, &e)| e > threshold)
            .map(|(&t, _)| t)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "mix_time_s,mix_time_over_half_J,efficiency")?;
        let half_j = if self.coupling_hz > 0.0 {
            0.5 / self.coupling_hz
        } else {
            f64::NAN
        };
        for (t, e) in self.mixing_times.iter().zip(&self.efficiencies) {
            writeln!(out, "{:.9e},{:.6},{:.9}", t, t / half_j, e)?;
        }
        Ok(())
    }
}

/// Transfer efficiency after `n = 0..=n_max` repetitions of `w_super`.
/// The cycle propagator is computed once and raised to successive powers.
pub fn mixing_buildup(sys: &SpinSystem, w_super: &PulseWaveform, n_max: usize) -> MixingCurve {
    let cycle = two_spin_propagate(w_super, sys);
    let mut u = Mat4::identity();
    let mut mixing_times = vec![0.0];
    let mut efficiencies = vec![0.0];
    for n in 1..=n_max {
        u = cycle.matrix * u;
        mixing_times.push(n as f64 * cycle.duration);
        // Without coupling the propagator is a tensor product and cannot
        // carry Iz into Sz; skip the rounding-level residue.
        efficiencies.push(if sys.coupling_hz == 0.0 {
            0.0
        } else {
            efficiency_of(&u)
        });
    }
    MixingCurve {
        coupling_hz: sys.coupling_hz,
        mixing_times,
        efficiencies,
    }
}

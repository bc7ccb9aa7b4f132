//! Operator algebra for a classical magnetization vector (3x3 rotation
//! generators) and a pair of spin-1/2 nuclei (4x4 product operators).
//!
//! Two-spin operators use the product basis |uu>, |ud>, |du>, |dd> with
//! `I_a = (sigma_a / 2) (x) 1` and `S_a = 1 (x) (sigma_a / 2)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Hermiticity tolerance accepted by [`expm_unitary`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Unitarity tolerance (Frobenius norm of `U^dag U - 1`).
pub const UNITARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// Generator of right-handed rotations about one Cartesian axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationGenerator {
    pub axis: Axis,
    pub matrix: Matrix3<f64>,
}

pub fn rotation_generator(axis: Axis) -> RotationGenerator {
    #[rustfmt::skip]
    let matrix = match axis {
        Axis::X => Matrix3::new(
            0.0, 0.0,  0.0,
            0.0, 0.0, -1.0,
            0.0, 1.0,  0.0,
        ),
        Axis::Y => Matrix3::new(
             0.0, 0.0, 1.0,
             0.0, 0.0, 0.0,
            -1.0, 0.0, 0.0,
        ),
        Axis::Z => Matrix3::new(
            0.0, -1.0, 0.0,
            1.0,  0.0, 0.0,
            0.0,  0.0, 0.0,
        ),
    };
    RotationGenerator { axis, matrix }
}

/// `exp(angle * Omega_axis)` in closed form.
pub fn rotation(axis: Axis, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    #[rustfmt::skip]
    let m = match axis {
        Axis::X => Matrix3::new(
            1.0, 0.0, 0.0,
            0.0,   c,  -s,
            0.0,   s,   c,
        ),
        Axis::Y => Matrix3::new(
              c, 0.0,   s,
            0.0, 1.0, 0.0,
             -s, 0.0,   c,
        ),
        Axis::Z => Matrix3::new(
              c,  -s, 0.0,
              s,   c, 0.0,
            0.0, 0.0, 1.0,
        ),
    };
    m
}

/// Exact rotation `exp(dt * (w_x Omega_x + w_y Omega_y + w_z Omega_z))` for a
/// constant angular-velocity vector, via the Rodrigues formula.
pub fn rodrigues(omega: &Vector3<f64>, dt: f64) -> Matrix3<f64> {
    let rate = omega.norm();
    let angle = rate * dt;
    if rate == 0.0 || angle == 0.0 {
        return Matrix3::identity();
    }
    let n = omega / rate;
    #[rustfmt::skip]
    let k = Matrix3::new(
        0.0, -n.z,  n.y,
        n.z,  0.0, -n.x,
       -n.y,  n.x,  0.0,
    );
    let (s, c) = angle.sin_cos();
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

/// Spin-1/2 angular momentum `sigma_axis / 2`.
pub fn spin_half(axis: Axis) -> Mat2 {
    let h = 0.5;
    match axis {
        Axis::X => Mat2::new(ZERO, C64::new(h, 0.0), C64::new(h, 0.0), ZERO),
        Axis::Y => Mat2::new(ZERO, C64::new(0.0, -h), C64::new(0.0, h), ZERO),
        Axis::Z => Mat2::new(C64::new(h, 0.0), ZERO, ZERO, C64::new(-h, 0.0)),
    }
}

/// Single-spin propagator `exp(-i dt (b . sigma / 2))` for a constant field
/// `b` given in rad/s.
pub fn su2_propagator(field: &Vector3<f64>, dt: f64) -> Mat2 {
    let rate = field.norm();
    if rate == 0.0 {
        return Mat2::identity();
    }
    let (s, c) = (0.5 * rate * dt).sin_cos();
    let n = field / rate;
    // cos - i sin (n . sigma)
    Mat2::new(
        C64::new(c, -s * n.z),
        C64::new(-s * n.y, -s * n.x),
        C64::new(s * n.y, -s * n.x),
        C64::new(c, s * n.z),
    )
}

pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

fn spin_i(axis: Axis) -> Mat4 {
    kron(&spin_half(axis), &Mat2::identity())
}

fn spin_s(axis: Axis) -> Mat4 {
    kron(&Mat2::identity(), &spin_half(axis))
}

/// Named two-spin product operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProductOperator {
    Identity,
    I(Axis),
    S(Axis),
    F(Axis),
    /// `I_a S_b`
    Bilinear(Axis, Axis),
    /// `I . S`
    Isotropic,
    /// `I_x S_x + I_y S_y`
    ZeroQuantumX,
    /// `I_x S_y - I_y S_x`
    ZeroQuantumY,
    /// `I_x S_x - I_y S_y`
    DoubleQuantumX,
    /// `I_x S_y + I_y S_x`
    DoubleQuantumY,
}

fn axis_char(a: Axis) -> char {
    match a {
        Axis::X => 'x',
        Axis::Y => 'y',
        Axis::Z => 'z',
    }
}

fn parse_axis(c: char) -> Option<Axis> {
    match c {
        'x' => Some(Axis::X),
        'y' => Some(Axis::Y),
        'z' => Some(Axis::Z),
        _ => None,
    }
}

impl fmt::Display for ProductOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ProductOperator::Identity => write!(f, "E"),
            ProductOperator::I(a) => write!(f, "I{}", axis_char(a)),
            ProductOperator::S(a) => write!(f, "S{}", axis_char(a)),
            ProductOperator::F(a) => write!(f, "F{}", axis_char(a)),
            ProductOperator::Bilinear(a, b) => write!(f, "I{}S{}", axis_char(a), axis_char(b)),
            ProductOperator::Isotropic => write!(f, "I.S"),
            ProductOperator::ZeroQuantumX => write!(f, "ZQx"),
            ProductOperator::ZeroQuantumY => write!(f, "ZQy"),
            ProductOperator::DoubleQuantumX => write!(f, "DQx"),
            ProductOperator::DoubleQuantumY => write!(f, "DQy"),
        }
    }
}

impl FromStr for ProductOperator {
    type Err = Error;

    /// Accepts `Ix`, `I_x`, `IxSy`, `I_xS_y`, `I.S`, `ZQx`, ... (underscores ignored).
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownOperator(s.to_string());
        let compact: String = s.chars().filter(|c| *c != '_' && *c != ' ').collect();
        let fixed = match compact.as_str() {
            "E" | "1" => Some(ProductOperator::Identity),
            "I.S" | "IS" => Some(ProductOperator::Isotropic),
            "ZQx" => Some(ProductOperator::ZeroQuantumX),
            "ZQy" => Some(ProductOperator::ZeroQuantumY),
            "DQx" => Some(ProductOperator::DoubleQuantumX),
            "DQy" => Some(ProductOperator::DoubleQuantumY),
            _ => None,
        };
        if let Some(op) = fixed {
            return Ok(op);
        }
        let chars: Vec<char> = compact.chars().collect();
        match chars.as_slice() {
            ['I', a] => parse_axis(*a).map(ProductOperator::I),
            ['S', a] => parse_axis(*a).map(ProductOperator::S),
            ['F', a] => parse_axis(*a).map(ProductOperator::F),
            ['I', a, 'S', b] => match (parse_axis(*a), parse_axis(*b)) {
                (Some(a), Some(b)) => Some(ProductOperator::Bilinear(a, b)),
                _ => None,
            },
            _ => None,
        }
        .ok_or_else(unknown)
    }
}

impl ProductOperator {
    pub fn matrix(&self) -> Mat4 {
        match *self {
            ProductOperator::Identity => Mat4::identity(),
            ProductOperator::I(a) => spin_i(a),
            ProductOperator::S(a) => spin_s(a),
            ProductOperator::F(a) => spin_i(a) + spin_s(a),
            ProductOperator::Bilinear(a, b) => spin_i(a) * spin_s(b),
            ProductOperator::Isotropic => Axis::ALL.iter().map(|&a| spin_i(a) * spin_s(a)).sum(),
            ProductOperator::ZeroQuantumX => {
                spin_i(Axis::X) * spin_s(Axis::X) + spin_i(Axis::Y) * spin_s(Axis::Y)
            }
            ProductOperator::ZeroQuantumY => {
                spin_i(Axis::X) * spin_s(Axis::Y) - spin_i(Axis::Y) * spin_s(Axis::X)
            }
            ProductOperator::DoubleQuantumX => {
                spin_i(Axis::X) * spin_s(Axis::X) - spin_i(Axis::Y) * spin_s(Axis::Y)
            }
            ProductOperator::DoubleQuantumY => {
                spin_i(Axis::X) * spin_s(Axis::Y) + spin_i(Axis::Y) * spin_s(Axis::X)
            }
        }
    }
}

/// A Hermitian operator on the two-spin space.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSpinOperator {
    pub label: String,
    pub matrix: Mat4,
}

impl TwoSpinOperator {
    pub fn new(label: impl Into<String>, matrix: Mat4) -> Self {
        Self {
            label: label.into(),
            matrix,
        }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Hilbert-Schmidt overlap `Tr(self^dag other)`.
    pub fn overlap(&self, other: &Mat4) -> C64 {
        (self.matrix.adjoint() * other).trace()
    }
}

pub fn two_spin_operator(label: &str) -> Result<TwoSpinOperator> {
    let op: ProductOperator = label.parse()?;
    Ok(TwoSpinOperator::new(op.to_string(), op.matrix()))
}

pub fn commutator(a: &Mat4, b: &Mat4) -> Mat4 {
    a * b - b * a
}

/// `pi (cos g (IxSx + IySy) + sin g (IxSy - IySx))`.
pub fn zero_quantum_hamiltonian(gamma: f64) -> TwoSpinOperator {
    let (s, c) = gamma.sin_cos();
    let m = (ProductOperator::ZeroQuantumX.matrix() * C64::from(c)
        + ProductOperator::ZeroQuantumY.matrix() * C64::from(s))
        * C64::from(std::f64::consts::PI);
    TwoSpinOperator::new(format!("ZQ(pi, {gamma:.4})"), m)
}

pub fn hermiticity_error(h: &Mat4) -> f64 {
    (h - h.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `exp(-i H t)` for Hermitian `H` without validation.
///
/// Scaling and squaring around a degree-12 Taylor polynomial; the scaled
/// argument has 1-norm at most 1/4, which puts the truncation error near
/// machine precision.
pub fn exp_hermitian(h: &Mat4, t: f64) -> Mat4 {
    let a = h * C64::new(0.0, -t);
    let norm = (0..4)
        .map(|c| a.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    if norm == 0.0 {
        return Mat4::identity();
    }
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let a = a * C64::from(0.5f64.powi(squarings));
    let mut e = Mat4::identity();
    for k in (1..=12).rev() {
        e = Mat4::identity() + (a * e) * C64::from(1.0 / k as f64);
    }
    for _ in 0..squarings {
        e = e * e;
    }
    e
}

/// A 4x4 unitary together with the time it spans.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryPropagator {
    pub matrix: Mat4,
    pub duration: f64,
}

impl UnitaryPropagator {
    pub fn identity() -> Self {
        Self {
            matrix: Mat4::identity(),
            duration: 0.0,
        }
    }

    pub fn new(matrix: Mat4, duration: f64) -> Self {
        Self { matrix, duration }
    }

    /// Propagator for `self` followed by `later`.
    pub fn then(&self, later: &UnitaryPropagator) -> UnitaryPropagator {
        UnitaryPropagator {
            matrix: later.matrix * self.matrix,
            duration: self.duration + later.duration,
        }
    }

    pub fn pow(&self, n: u32) -> UnitaryPropagator {
        let mut acc = Mat4::identity();
        for _ in 0..n {
            acc = self.matrix * acc;
        }
        UnitaryPropagator {
            matrix: acc,
            duration: self.duration * n as f64,
        }
    }

    /// `U op U^dag`.
    pub fn conjugate(&self, op: &Mat4) -> Mat4 {
        self.matrix * op * self.matrix.adjoint()
    }

    pub fn unitarity_error(&self) -> f64 {
        (self.matrix.adjoint() * self.matrix - Mat4::identity()).norm()
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() <= UNITARY_TOL
    }
}

/// Checked `exp(-i H t)`.
pub fn expm_unitary(h: &Mat4, t: f64) -> Result<UnitaryPropagator> {
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let deviation = hermiticity_error(h);
    if deviation > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(UnitaryPropagator::new(exp_hermitian(h, t), t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn op(label: &str) -> Mat4 {
        two_spin_operator(label).unwrap().matrix
    }

    fn close(a: &Mat4, b: &Mat4, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn generators_match_displayed_matrices() {
        let z = rotation_generator(Axis::Z).matrix;
        assert_eq!(
            z,
            Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        );
        for axis in Axis::ALL {
            let m = rotation_generator(axis).matrix;
            assert_eq!(m.transpose(), -m);
        }
    }

    #[test]
    fn so3_commutators_are_cyclic() {
        let [x, y, z] = Axis::ALL.map(|a| rotation_generator(a).matrix);
        assert_eq!(x * y - y * x, z);
        assert_eq!(y * z - z * y, x);
        assert_eq!(z * x - x * z, y);
    }

    #[test]
    fn pi_flip_about_x_inverts_z() {
        let v = rotation(Axis::X, PI) * Vector3::new(0.0, 0.0, 1.0);
        assert!((v - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn closed_form_rotation_matches_series() {
        for axis in Axis::ALL {
            let g = rotation_generator(axis).matrix * 0.83;
            let mut term = Matrix3::identity();
            let mut sum = Matrix3::identity();
            for k in 1..30 {
                term = term * g / k as f64;
                sum += term;
            }
            assert!((sum - rotation(axis, 0.83)).norm() < 1e-14);
            let mut w = Vector3::zeros();
            w[axis as usize] = 0.83;
            assert!((rodrigues(&w, 1.0) - sum).norm() < 1e-14);
        }
    }

    #[test]
    fn izsz_is_diagonal_quarter() {
        let m = op("IzSz");
        let expected = Mat4::from_diagonal(&nalgebra::Vector4::new(
            C64::from(0.25),
            C64::from(-0.25),
            C64::from(-0.25),
            C64::from(0.25),
        ));
        assert_eq!(m, expected);
        assert_eq!(op("Fz").trace(), ZERO);
        assert!((op("Iz") * op("Iz")).trace().re - 1.0 < 1e-15);
    }

    #[test]
    fn spin_commutators() {
        let i = C64::new(0.0, 1.0);
        assert_eq!(commutator(&op("Ix"), &op("Iy")), op("Iz") * i);
        assert_eq!(commutator(&op("Sy"), &op("Sz")), op("Sx") * i);
        assert_eq!(commutator(&op("Iz"), &op("Ix")), op("Iy") * i);
        for a in ["Ix", "Iy", "Iz"] {
            for b in ["Sx", "Sy", "Sz"] {
                assert_eq!(commutator(&op(a), &op(b)), Mat4::zeros());
            }
        }
        assert_eq!(op("I.S"), op("IxSx") + op("IySy") + op("IzSz"));
        assert_eq!(op("Fx"), op("Ix") + op("Sx"));
    }

    #[test]
    fn product_basis_is_traceless_and_orthogonal() {
        let labels = ["Ix", "Iy", "Iz", "Sx", "Sy", "Sz", "IxSx", "IySz", "IzSy"];
        for (k, a) in labels.iter().enumerate() {
            assert_eq!(op(a).trace(), ZERO);
            for b in &labels[k + 1..] {
                assert_eq!((op(a) * op(b)).trace(), ZERO, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn labels_parse_with_or_without_underscores() {
        assert_eq!(op("I_xS_y"), op("IxSy"));
        assert_eq!(op("F_z"), op("Fz"));
        assert!(matches!(
            two_spin_operator("Qz"),
            Err(Error::UnknownOperator(_))
        ));
        assert!(two_spin_operator("IxSq").is_err());
    }

    #[test]
    fn expm_at_zero_time_is_identity() {
        let h = op("I.S") * C64::from(3.0) + op("Fx");
        let u = expm_unitary(&h, 0.0).unwrap();
        assert_eq!(u.matrix, Mat4::identity());
    }

    #[test]
    fn global_pi_rotation_inverts_iz() {
        let h = op("Fy") * C64::from(PI);
        let u = expm_unitary(&h, 1.0).unwrap();
        assert!(close(&u.conjugate(&op("Iz")), &(-op("Iz")), 1e-12));
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let h = op("Ix") * C64::new(0.0, 1.0);
        assert!(matches!(
            expm_unitary(&h, 1.0),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn kron_of_su2_matches_two_spin_exponential() {
        let bi = Vector3::new(0.3, -1.1, 2.0);
        let bs = Vector3::new(-0.7, 0.4, 0.9);
        let h = op("Ix") * C64::from(bi.x)
            + op("Iy") * C64::from(bi.y)
            + op("Iz") * C64::from(bi.z)
            + op("Sx") * C64::from(bs.x)
            + op("Sy") * C64::from(bs.y)
            + op("Sz") * C64::from(bs.z);
        let direct = exp_hermitian(&h, 0.61);
        let split = kron(&su2_propagator(&bi, 0.61), &su2_propagator(&bs, 0.61));
        assert!(close(&direct, &split, 1e-13));
    }

    #[test]
    fn zero_quantum_pi_swaps_iz_and_sz() {
        let h = zero_quantum_hamiltonian(0.0).matrix;
        let u = expm_unitary(&h, 1.0).unwrap();
        assert!(close(&u.conjugate(&op("Iz")), &op("Sz"), 1e-12));
        for k in 0..16 {
            let gamma = k as f64 * PI / 8.0;
            let u = expm_unitary(&zero_quantum_hamiltonian(gamma).matrix, 1.0).unwrap();
            let diff = op("Iz") - op("Sz");
            assert!(close(&u.conjugate(&diff), &(-diff), 1e-9));
            assert!(close(&u.conjugate(&op("Fz")), &op("Fz"), 1e-12));
        }
    }

    #[test]
    fn propagator_pow_and_then_agree() {
        let h = op("I.S") * C64::from(2.0) + op("Iz") * C64::from(0.4);
        let u = expm_unitary(&h, 0.1).unwrap();
        let by_then = u.then(&u).then(&u);
        assert!(close(&by_then.matrix, &u.pow(3).matrix, 1e-14));
        assert!((by_then.duration - 0.3).abs() < 1e-15);
        assert!(u.pow(0).matrix == Mat4::identity());
    }
}

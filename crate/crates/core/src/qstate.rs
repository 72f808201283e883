//! Exact two-qubit state algebra.
//!
//! States live in the ordered basis `|ee⟩, |eℓ⟩, |ℓe⟩, |ℓℓ⟩` (Alice's qubit is
//! the major index). On the Bloch sphere `|e⟩` is the +z pole and `|ℓ⟩` the
//! -z pole; the equatorial basis `(|e⟩ ± e^{iφ}|ℓ⟩)/√2` sits at azimuth `φ`
//! measured from +x.
//!
//! Everything here is a pure function of immutable values and serves as the
//! reference against which Monte Carlo estimates are checked.

use std::f64::consts::SQRT_2;
use std::fmt;

use nalgebra::{Matrix2, Matrix3, Matrix4, Rotation3, Vector3, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Amplitude of a basis state.
pub type ComplexAmp = Complex64;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const UNIT_TOL: f64 = 1e-12;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Pauli matrices `[σx, σy, σz]`.
pub fn pauli() -> [Matrix2<Complex64>; 3] {
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        Matrix2::new(o, l, l, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(l, o, o, -l),
    ]
}

/// Outcome label of a projective measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+",
            Outcome::Minus => "-",
        })
    }
}

/// A projective qubit measurement named by the Bloch vector of its `+` outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochSetting(Vector3<f64>);

impl BlochSetting {
    pub const X: BlochSetting = BlochSetting(Vector3::new(1.0, 0.0, 0.0));
    pub const Y: BlochSetting = BlochSetting(Vector3::new(0.0, 1.0, 0.0));
    pub const Z: BlochSetting = BlochSetting(Vector3::new(0.0, 0.0, 1.0));

    /// Accepts an already-unit vector; anything off the sphere is rejected.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::domain("Bloch vector must be finite"));
        }
        let norm = v.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::domain(format!(
                "Bloch vector must have unit length (|n| = {norm})"
            )));
        }
        Ok(BlochSetting(v))
    }

    /// Normalizes `v`; a zero (or non-finite) direction is a degenerate setting.
    pub fn normalized(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::DegenerateSettings(format!(
                "cannot normalize direction {:?}",
                v.as_slice()
            )));
        }
        Ok(BlochSetting(v / norm))
    }

    /// Polar angle from +z and azimuth from +x.
    pub fn from_angles(polar: f64, azimuth: f64) -> Self {
        BlochSetting(Vector3::new(
            polar.sin() * azimuth.cos(),
            polar.sin() * azimuth.sin(),
            polar.cos(),
        ))
    }

    /// Equatorial basis `(|e⟩ ± e^{iφ}|ℓ⟩)/√2`.
    pub fn equatorial(phi: f64) -> Self {
        BlochSetting(Vector3::new(phi.cos(), phi.sin(), 0.0))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn rotated(&self, rot: &Rotation3<f64>) -> Self {
        let v = rot * self.0;
        BlochSetting(v / v.norm())
    }

    /// Rotation about the z axis, the action of an interferometer phase.
    pub fn rotated_z(&self, angle: f64) -> Self {
        self.rotated(&Rotation3::from_axis_angle(&Vector3::z_axis(), angle))
    }

    pub fn flipped(&self) -> Self {
        BlochSetting(-self.0)
    }

    /// `n·σ`
    pub fn observable(&self) -> Matrix2<Complex64> {
        let [sx, sy, sz] = pauli();
        sx * c(self.0.x, 0.0) + sy * c(self.0.y, 0.0) + sz * c(self.0.z, 0.0)
    }

    /// `(I ± n·σ)/2`
    pub fn projector(&self, outcome: Outcome) -> Matrix2<Complex64> {
        (Matrix2::identity() + self.observable() * c(outcome.sign(), 0.0)) * c(0.5, 0.0)
    }

    /// Normalized state vector `cos(θ/2)|e⟩ + e^{iϕ} sin(θ/2)|ℓ⟩` of the `+` outcome.
    pub fn ket(&self) -> [Complex64; 2] {
        let z = self.0.z.clamp(-1.0, 1.0);
        let half = z.acos() / 2.0;
        let azimuth = self.0.y.atan2(self.0.x);
        [c(half.cos(), 0.0), Complex64::from_polar(half.sin(), azimuth)]
    }
}

/// Entanglement visibility, `0 ≤ V ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Visibility(f64);

impl Visibility {
    pub fn new(v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("visibility {v} outside [0, 1]")));
        }
        Ok(Visibility(v))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Density matrix of a time-bin qubit pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix4<Complex64>,
}

impl TwoQubitState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(rho: Matrix4<Complex64>) -> Result<Self> {
        if !rho.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::domain("density matrix has non-finite entries"));
        }
        let herm_err = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_err > HERMITIAN_TOL {
            return Err(Error::domain(format!(
                "density matrix not Hermitian (deviation {herm_err:.3e})"
            )));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::domain(format!("density matrix trace is {tr}")));
        }
        let state = TwoQubitState { rho };
        let min_eig = state.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::domain(format!(
                "density matrix not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(state)
    }

    /// Rank-one state from a (not necessarily normalized) ket.
    pub fn from_pure(psi: Vector4<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if !norm.is_finite() || norm < 1e-15 {
            return Err(Error::domain("state vector has zero norm"));
        }
        let psi = psi / c(norm, 0.0);
        Ok(TwoQubitState {
            rho: psi * psi.adjoint(),
        })
    }

    pub fn maximally_mixed() -> Self {
        TwoQubitState {
            rho: Matrix4::identity() * c(0.25, 0.0),
        }
    }

    pub fn rho(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Reduced state of Alice's qubit.
    pub fn reduced_alice(&self) -> Matrix2<Complex64> {
        Matrix2::from_fn(|i, j| self.rho[(2 * i, 2 * j)] + self.rho[(2 * i + 1, 2 * j + 1)])
    }

    /// Reduced state of Bob's qubit.
    pub fn reduced_bob(&self) -> Matrix2<Complex64> {
        Matrix2::from_fn(|i, j| self.rho[(i, j)] + self.rho[(2 + i, 2 + j)])
    }

    /// Populations of `|ee⟩, |eℓ⟩, |ℓe⟩, |ℓℓ⟩`.
    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.rho[(k, k)].re)
    }

    /// Expectation of `A ⊗ B`.
    pub fn expectation(&self, a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> f64 {
        (self.rho * a.kronecker(b)).trace().re
    }

    /// Local Bloch vectors and correlation tensor of the state.
    pub fn pauli_decomposition(&self) -> PauliDecomposition {
        let sig = pauli();
        let id = Matrix2::identity();
        let alice = Vector3::from_fn(|i, _| self.expectation(&sig[i], &id));
        let bob = Vector3::from_fn(|i, _| self.expectation(&id, &sig[i]));
        let tensor = Matrix3::from_fn(|i, j| self.expectation(&sig[i], &sig[j]));
        PauliDecomposition { alice, bob, tensor }
    }
}

/// `ρ = (I⊗I + r_A·σ⊗I + I⊗r_B·σ + Σ T_ij σi⊗σj)/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliDecomposition {
    pub alice: Vector3<f64>,
    pub bob: Vector3<f64>,
    pub tensor: Matrix3<f64>,
}

impl PauliDecomposition {
    /// Born-rule joint probability evaluated from the expansion coefficients.
    pub fn joint_probability(&self, a: &BlochSetting, b: &BlochSetting, outcome_a: Outcome, outcome_b: Outcome) -> f64 {
        let (sa, sb) = (outcome_a.sign(), outcome_b.sign());
        let (a, b) = (a.vector(), b.vector());
        let p = 1.0 + sa * a.dot(&self.alice) + sb * b.dot(&self.bob) + sa * sb * a.dot(&(self.tensor * b));
        (p / 4.0).clamp(0.0, 1.0)
    }
}

/// `(|ee⟩ + |ℓℓ⟩)/√2`
pub fn phi_plus() -> TwoQubitState {
    let h = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let zero = c(0.0, 0.0);
    TwoQubitState::from_pure(Vector4::new(h, zero, zero, h)).expect("nonzero ket")
}

/// Werner mixture `V·ρ + (1−V)·I/4`.
pub fn white_noise_mix(state: &TwoQubitState, visibility: Visibility) -> TwoQubitState {
    let v = visibility.value();
    TwoQubitState {
        rho: state.rho * c(v, 0.0) + Matrix4::identity() * c((1.0 - v) / 4.0, 0.0),
    }
}

/// Average over a Gaussian random phase `δ ~ N(0, σ²)` applied to Alice's
/// `|ℓ⟩` amplitude. Coherences between Alice's early and late components are
/// damped by `exp(−σ²/2)`.
pub fn local_phase_average(state: &TwoQubitState, sigma_rad: f64) -> TwoQubitState {
    let damp = (-sigma_rad * sigma_rad / 2.0).exp();
    let rho = Matrix4::from_fn(|i, j| {
        if (i >> 1) != (j >> 1) {
            state.rho[(i, j)] * damp
        } else {
            state.rho[(i, j)]
        }
    });
    TwoQubitState { rho }
}

/// `Tr[ρ (P_a ⊗ P_b)]`
pub fn joint_probability(
    state: &TwoQubitState,
    a: &BlochSetting,
    b: &BlochSetting,
    outcome_a: Outcome,
    outcome_b: Outcome,
) -> Result<f64> {
    check_unit(a)?;
    check_unit(b)?;
    let p = state.expectation(&a.projector(outcome_a), &b.projector(outcome_b));
    Ok(p.clamp(0.0, 1.0))
}

/// `E(a, b) = Σ o_a·o_b·P(o_a, o_b)`
pub fn correlation(state: &TwoQubitState, a: &BlochSetting, b: &BlochSetting) -> Result<f64> {
    let mut e = 0.0;
    for oa in Outcome::BOTH {
        for ob in Outcome::BOTH {
            e += oa.sign() * ob.sign() * joint_probability(state, a, b, oa, ob)?;
        }
    }
    Ok(e.clamp(-1.0, 1.0))
}

fn check_unit(s: &BlochSetting) -> Result<()> {
    let n = s.vector().norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::domain(format!("non-unit Bloch vector (|n| = {n})")));
    }
    Ok(())
}

/// Correlation tensor `T_ij = ⟨σi ⊗ σj⟩`, so that `E(a, b) = aᵀ T b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationTensor(Matrix3<f64>);

impl CorrelationTensor {
    pub fn new(t: Matrix3<f64>) -> Result<Self> {
        let t = CorrelationTensor(t);
        let s_max = t.singular_values()[0];
        if !s_max.is_finite() || s_max > 1.0 + 1e-10 {
            return Err(Error::domain(format!(
                "correlation tensor singular value {s_max} exceeds 1"
            )));
        }
        Ok(t)
    }

    pub fn ideal() -> Self {
        CorrelationTensor(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0)))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn correlation(&self, a: &BlochSetting, b: &BlochSetting) -> f64 {
        a.vector().dot(&(self.0 * b.vector()))
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> [f64; 3] {
        let sv = self.0.singular_values();
        let mut s = [sv[0], sv[1], sv[2]];
        s.sort_by(|x, y| y.total_cmp(x));
        s
    }
}

pub fn correlation_tensor(state: &TwoQubitState) -> CorrelationTensor {
    let sig = pauli();
    CorrelationTensor(Matrix3::from_fn(|i, j| state.expectation(&sig[i], &sig[j])))
}

/// `S = |E(a1,b1) + E(a1,b2) + E(a2,b1) − E(a2,b2)|`
pub fn chsh_value(
    state: &TwoQubitState,
    a1: &BlochSetting,
    a2: &BlochSetting,
    b1: &BlochSetting,
    b2: &BlochSetting,
) -> Result<f64> {
    let s = correlation(state, a1, b1)? + correlation(state, a1, b2)? + correlation(state, a2, b1)?
        - correlation(state, a2, b2)?;
    Ok(s.abs())
}

/// Bob's settings maximizing `S` for fixed Alice settings:
/// `b1 ∝ Tᵀ(a1 + a2)`, `b2 ∝ Tᵀ(a1 − a2)`.
pub fn optimal_partner_settings(
    tensor: &CorrelationTensor,
    a1: &BlochSetting,
    a2: &BlochSetting,
) -> Result<(BlochSetting, BlochSetting)> {
    check_unit(a1)?;
    check_unit(a2)?;
    let tt = tensor.0.transpose();
    let b1 = BlochSetting::normalized(tt * (a1.vector() + a2.vector()))?;
    let b2 = BlochSetting::normalized(tt * (a1.vector() - a2.vector()))?;
    Ok((b1, b2))
}

/// The largest CHSH value reachable with `tensor`, maximized over all settings:
/// `2·sqrt(s1² + s2²)` for the two largest singular values.
pub fn horodecki_max(tensor: &CorrelationTensor) -> f64 {
    let [s1, s2, _] = tensor.singular_values();
    2.0 * (s1 * s1 + s2 * s2).sqrt()
}

/// Quantum bound `2√2·V` for a white-noise-degraded maximally entangled pair.
pub fn s_quantum(visibility: Visibility) -> f64 {
    2.0 * SQRT_2 * visibility.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn phi_plus_matrix_elements() {
        let rho = phi_plus().rho;
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i == 0 || i == 3) && (j == 0 || j == 3) {
                    0.5
                } else {
                    0.0
                };
                assert!((rho[(i, j)] - c(expected, 0.0)).norm() < 1e-15, "rho[{i}][{j}]");
            }
        }
    }

    #[test]
    fn phi_plus_is_maximally_entangled() {
        let s = phi_plus();
        let half = Matrix2::identity() * c(0.5, 0.0);
        assert!((s.reduced_alice() - half).norm() < 1e-15);
        assert!((s.reduced_bob() - half).norm() < 1e-15);
    }

    #[test]
    fn white_noise_endpoints() {
        let s = phi_plus();
        let same = white_noise_mix(&s, Visibility::new(1.0).unwrap());
        assert!((same.rho - s.rho).norm() < 1e-15);
        let mixed = white_noise_mix(&s, Visibility::new(0.0).unwrap());
        assert!((mixed.rho - TwoQubitState::maximally_mixed().rho).norm() < 1e-15);
        assert!(Visibility::new(1.2).is_err());
        assert!(Visibility::new(-0.1).is_err());
    }

    #[test]
    fn white_noise_state_passes_validation() {
        let s = white_noise_mix(&phi_plus(), Visibility::new(0.3).unwrap());
        assert!(TwoQubitState::new(*s.rho()).is_ok());
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let mut rho = *phi_plus().rho();
        rho[(0, 1)] = c(0.1, 0.0);
        assert!(TwoQubitState::new(rho).is_err());

        let rho = Matrix4::identity() * c(0.3, 0.0);
        assert!(TwoQubitState::new(rho).is_err());

        // trace one but a negative eigenvalue
        let rho = Matrix4::from_diagonal(&Vector4::new(c(0.6, 0.0), c(0.6, 0.0), c(0.1, 0.0), c(-0.3, 0.0)));
        assert!(TwoQubitState::new(rho).is_err());
    }

    #[test]
    fn phi_plus_pole_probabilities() {
        let s = phi_plus();
        let z = BlochSetting::Z;
        let pp = joint_probability(&s, &z, &z, Outcome::Plus, Outcome::Plus).unwrap();
        let pm = joint_probability(&s, &z, &z, Outcome::Plus, Outcome::Minus).unwrap();
        assert!(close(pp, 0.5, 1e-15));
        assert!(close(pm, 0.0, 1e-15));
        assert!(close(correlation(&s, &z, &z).unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn equatorial_fringe_form() {
        let s = phi_plus();
        for &(alpha, beta) in &[(0.0, 0.0), (0.3, 1.1), (2.0, -0.7), (PI, PI / 3.0)] {
            let a = BlochSetting::equatorial(alpha);
            let b = BlochSetting::equatorial(beta);
            let p = joint_probability(&s, &a, &b, Outcome::Plus, Outcome::Plus).unwrap();
            assert!(close(p, 0.25 * (1.0 + (alpha + beta).cos()), 1e-12));
            assert!(close(correlation(&s, &a, &b).unwrap(), (alpha + beta).cos(), 1e-12));
        }
    }

    #[test]
    fn lab_visibility_correlation() {
        let s = white_noise_mix(&phi_plus(), Visibility::new(0.854).unwrap());
        let z = BlochSetting::Z;
        assert!(close(correlation(&s, &z, &z).unwrap(), 0.854, 1e-12));
    }

    #[test]
    fn non_unit_settings_are_rejected() {
        assert!(BlochSetting::new(1.0, 1.0, 0.0).is_err());
        let bad = BlochSetting(Vector3::new(0.5, 0.0, 0.0));
        let s = phi_plus();
        assert!(joint_probability(&s, &bad, &BlochSetting::Z, Outcome::Plus, Outcome::Plus).is_err());
    }

    /// Brute-force tensor from the Born-rule probabilities at the Cartesian axes.
    fn tensor_by_enumeration(state: &TwoQubitState) -> Matrix3<f64> {
        let axes = [BlochSetting::X, BlochSetting::Y, BlochSetting::Z];
        Matrix3::from_fn(|i, j| {
            let mut e = 0.0;
            for oa in Outcome::BOTH {
                for ob in Outcome::BOTH {
                    e += oa.sign() * ob.sign() * joint_probability(state, &axes[i], &axes[j], oa, ob).unwrap();
                }
            }
            e
        })
    }

    #[test]
    fn phi_plus_tensor() {
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert!((tensor_by_enumeration(&phi_plus()) - expected).norm() < 1e-12);
        assert!((correlation_tensor(&phi_plus()).0 - expected).norm() < 1e-12);
        assert!(correlation_tensor(&TwoQubitState::maximally_mixed()).0.norm() < 1e-15);
        let v = 0.91;
        let noisy = white_noise_mix(&phi_plus(), Visibility::new(v).unwrap());
        assert!((correlation_tensor(&noisy).0 - expected * v).norm() < 1e-12);
    }

    #[test]
    fn chsh_values() {
        let s = phi_plus();
        let a1 = BlochSetting::X;
        let a2 = BlochSetting::Y;
        let (b1, b2) = optimal_partner_settings(&correlation_tensor(&s), &a1, &a2).unwrap();
        assert!(close(chsh_value(&s, &a1, &a2, &b1, &b2).unwrap(), 2.0 * SQRT_2, 1e-12));

        let mixed = TwoQubitState::maximally_mixed();
        assert!(chsh_value(&mixed, &a1, &a2, &b1, &b2).unwrap() < 1e-15);

        let noisy = white_noise_mix(&s, Visibility::new(0.91).unwrap());
        let value = chsh_value(&noisy, &a1, &a2, &b1, &b2).unwrap();
        assert!(close(value, 2.0 * SQRT_2 * 0.91, 1e-12));
        assert!(close(value, 2.574, 5e-4));
    }

    #[test]
    fn optimal_partner_for_x_and_z() {
        let t = CorrelationTensor::ideal();
        let (b1, b2) = optimal_partner_settings(&t, &BlochSetting::X, &BlochSetting::Z).unwrap();
        let d = FRAC_1_SQRT_2;
        assert!((b1.vector() - Vector3::new(d, 0.0, d)).norm() < 1e-15);
        assert!((b2.vector() - Vector3::new(d, 0.0, -d)).norm() < 1e-15);
    }

    #[test]
    fn optimal_partner_degenerate() {
        let zero = CorrelationTensor::new(Matrix3::zeros()).unwrap();
        let err = optimal_partner_settings(&zero, &BlochSetting::X, &BlochSetting::Z).unwrap_err();
        assert!(matches!(err, Error::DegenerateSettings(_)));
    }

    #[test]
    fn horodecki_examples() {
        assert!(close(horodecki_max(&CorrelationTensor::ideal()), 2.0 * SQRT_2, 1e-12));
        let v = 0.7;
        let t = CorrelationTensor::new(CorrelationTensor::ideal().0 * v).unwrap();
        assert!(close(horodecki_max(&t), 2.0 * SQRT_2 * v, 1e-12));
        assert_eq!(horodecki_max(&CorrelationTensor::new(Matrix3::zeros()).unwrap()), 0.0);
    }

    #[test]
    fn pauli_decomposition_matches_born_rule() {
        let s = white_noise_mix(&phi_plus(), Visibility::new(0.8).unwrap());
        let s = local_phase_average(&s, 0.4);
        let dec = s.pauli_decomposition();
        let a = BlochSetting::from_angles(0.7, 1.9);
        let b = BlochSetting::from_angles(2.1, -0.4);
        for oa in Outcome::BOTH {
            for ob in Outcome::BOTH {
                let born = joint_probability(&s, &a, &b, oa, ob).unwrap();
                assert!(close(dec.joint_probability(&a, &b, oa, ob), born, 1e-12));
            }
        }
    }

    #[test]
    fn phase_average_damps_equatorial_correlations() {
        let sigma = 0.3_f64;
        let s = local_phase_average(&phi_plus(), sigma);
        let t = correlation_tensor(&s);
        let damp = (-sigma * sigma / 2.0).exp();
        let expected = Matrix3::from_diagonal(&Vector3::new(damp, -damp, 1.0));
        assert!((t.0 - expected).norm() < 1e-12);
    }

    #[test]
    fn ket_matches_bloch_vector() {
        for &(th, ph) in &[(0.0, 0.0), (PI, 0.0), (PI / 2.0, 0.4), (1.2, -2.5)] {
            let n = BlochSetting::from_angles(th, ph);
            let [a, b] = n.ket();
            let r = Vector3::new(
                2.0 * (a.conj() * b).re,
                2.0 * (a.conj() * b).im,
                a.norm_sqr() - b.norm_sqr(),
            );
            assert!((r - n.vector()).norm() < 1e-12);
        }
    }
}

//! Reconfigurable-surface algebra: impedance/scattering maps, the
//! half-vectorization permutation machinery, the Neumann-series
//! linearization, Takagi factorization and the randomized feasibility mapper.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{mix_seed, ChannelRealization};
use crate::config::RectifierParams;
use crate::error::{Error, Result};
use crate::rectenna::{idc, CascadeChannel, Waveform};

/// Default reference impedance in ohms.
pub const Z0_DEFAULT: f64 = 50.0;

/// Multiport reactance network of a lossless reciprocal surface.
#[derive(Debug, Clone)]
pub struct ImpedanceMatrix {
    pub z: DMatrix<Complex64>,
    /// Reference impedance in ohms.
    pub z0: f64,
}

impl ImpedanceMatrix {
    /// Validates symmetry and pure reactance (zero real part).
    pub fn new(z: DMatrix<Complex64>, z0: f64) -> Result<Self> {
        if !z.is_square() {
            return Err(Error::Contract("impedance matrix must be square".into()));
        }
        if z0 <= 0.0 {
            return Err(Error::Domain(format!("reference impedance must be positive, got {z0}")));
        }
        let scale = z.norm().max(z0);
        let sym = (&z - z.transpose()).norm();
        if sym > 1e-9 * scale {
            return Err(Error::Contract(format!("impedance matrix is not symmetric: residual {sym:.3e}")));
        }
        let re: f64 = z.iter().map(|v| v.re * v.re).sum::<f64>().sqrt();
        if re > 1e-9 * scale {
            return Err(Error::Contract(format!("impedance matrix is not purely reactive: |Re| {re:.3e}")));
        }
        Ok(Self { z, z0 })
    }

    /// Reference network `Z = j Z0 I`, the optimizer starting point.
    pub fn reference(m: usize, z0: f64) -> Self {
        Self { z: DMatrix::from_diagonal_element(m, m, Complex64::new(0.0, z0)), z0 }
    }

    pub fn m(&self) -> usize {
        self.z.nrows()
    }

    /// `(Z + Z0 I)^-1`, shared by the scattering map and the linearization.
    pub fn shifted_inverse(&self) -> Result<DMatrix<Complex64>> {
        let m = self.m();
        let a = &self.z + DMatrix::from_diagonal_element(m, m, Complex64::new(self.z0, 0.0));
        let a_norm = a.norm();
        match a.clone().try_inverse() {
            Some(inv) => {
                let cond = a_norm * inv.norm();
                if !cond.is_finite() || cond > 1e13 {
                    return Err(Error::Numerical(format!(
                        "(Z + Z0 I) is ill-conditioned: condition estimate {cond:.3e}"
                    )));
                }
                Ok(inv)
            }
            None => Err(Error::Numerical("(Z + Z0 I) is singular".into())),
        }
    }
}

/// Scattering matrix of the surface; feasible when symmetric and unitary.
#[derive(Debug, Clone)]
pub struct ScatteringMatrix {
    pub theta: DMatrix<Complex64>,
}

impl ScatteringMatrix {
    pub fn new(theta: DMatrix<Complex64>) -> Self {
        Self { theta }
    }

    pub fn identity(m: usize) -> Self {
        Self { theta: DMatrix::identity(m, m) }
    }

    pub fn m(&self) -> usize {
        self.theta.nrows()
    }

    /// `||Theta - Theta^T||_F`.
    pub fn symmetry_residual(&self) -> f64 {
        (&self.theta - self.theta.transpose()).norm()
    }

    /// `||Theta^H Theta - I||_F`.
    pub fn unitarity_residual(&self) -> f64 {
        let m = self.m();
        (self.theta.adjoint() * &self.theta - DMatrix::<Complex64>::identity(m, m)).norm()
    }

    /// Feasibility per the lossless reciprocal surface model.
    pub fn is_feasible(&self) -> bool {
        self.symmetry_residual() <= 1e-9 && self.unitarity_residual() <= 1e-8
    }
}

/// Scattering matrix of a reactive network:
/// `Theta = (Z + Z0 I)^-1 (Z - Z0 I)`; symmetric and unitary for any purely
/// imaginary symmetric Z.
pub fn scattering_from_impedance(z: &ImpedanceMatrix) -> Result<ScatteringMatrix> {
    let m = z.m();
    let inv = z.shifted_inverse()?;
    let b = &z.z - DMatrix::from_diagonal_element(m, m, Complex64::new(z.z0, 0.0));
    Ok(ScatteringMatrix::new(inv * b))
}

/// Sparse 0/1 permutation `P` with `P * halfvec(Theta) = Vec(Theta)` for
/// symmetric `Theta`. Half-vector slots enumerate the lower triangle row by
/// row: slot(i, j) with i <= j is j(j+1)/2 + i (0-based).
#[derive(Debug, Clone)]
pub struct PermutationP {
    m: usize,
    /// For each column-major Vec position, its half-vector slot.
    row_to_slot: Vec<usize>,
}

/// Half-vector slot of matrix entry (i, j), 0-based.
pub fn half_slot(i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

/// Builds the permutation for an M-port surface.
pub fn permutation_matrix(m: usize) -> PermutationP {
    let mut row_to_slot = Vec::with_capacity(m * m);
    for col in 0..m {
        for row in 0..m {
            row_to_slot.push(half_slot(row, col));
        }
    }
    PermutationP { m, row_to_slot }
}

impl PermutationP {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Half-vector length M(M+1)/2.
    pub fn dim_half(&self) -> usize {
        self.m * (self.m + 1) / 2
    }

    /// Full vectorization length M^2.
    pub fn dim_vec(&self) -> usize {
        self.m * self.m
    }

    /// Expands a half-vector into the symmetric matrix it represents.
    pub fn expand(&self, theta_half: &DVector<Complex64>) -> DMatrix<Complex64> {
        debug_assert_eq!(theta_half.len(), self.dim_half());
        let mut out = DMatrix::zeros(self.m, self.m);
        for (pos, &slot) in self.row_to_slot.iter().enumerate() {
            out[(pos % self.m, pos / self.m)] = theta_half[slot];
        }
        out
    }

    /// Half-vector of a symmetric matrix (representative entries).
    pub fn halfvec(&self, mat: &DMatrix<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.dim_half());
        for j in 0..self.m {
            for i in 0..=j {
                out[half_slot(i, j)] = mat[(i, j)];
            }
        }
        out
    }

    /// `P^T Vec(mat)` for an arbitrary matrix: off-diagonal slots accumulate
    /// both mirror entries.
    pub fn p_transpose_vec(&self, mat: &DMatrix<Complex64>) -> DVector<Complex64> {
        debug_assert_eq!(mat.nrows(), self.m);
        let mut out = DVector::zeros(self.dim_half());
        for j in 0..self.m {
            for i in 0..self.m {
                out[half_slot(i, j)] += mat[(i, j)];
            }
        }
        out
    }

    /// Constraint matrix `Pbar_(i,j) = P_i^T P_j`, where `P_i` extracts row i
    /// of the symmetric matrix from its half-vector. For X = theta theta^H,
    /// `Tr(X Pbar_(i,j)) = (Theta Theta^H)_(j,i)`.
    pub fn pbar(&self, i: usize, j: usize) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim_half(), self.dim_half());
        for t in 0..self.m {
            out[(half_slot(i, t), half_slot(j, t))] += Complex64::ONE;
        }
        out
    }
}

/// Connection topology: half-vector slots forced to zero by missing links.
#[derive(Debug, Clone)]
pub struct Topology {
    m: usize,
    zero_slots: Vec<bool>,
}

impl Topology {
    /// Every port pair connected; no zero slots.
    pub fn fully_connected(m: usize) -> Self {
        Self { m, zero_slots: vec![false; m * (m + 1) / 2] }
    }

    /// Independent per-port reactances: all off-diagonal slots zeroed.
    pub fn diagonal(m: usize) -> Self {
        let mut zero_slots = vec![true; m * (m + 1) / 2];
        for i in 0..m {
            zero_slots[half_slot(i, i)] = false;
        }
        Self { m, zero_slots }
    }

    /// Ports partitioned into consecutive groups of `group` elements,
    /// connected only within a group.
    pub fn group_connected(m: usize, group: usize) -> Result<Self> {
        if group == 0 || m % group != 0 {
            return Err(Error::Contract(format!(
                "group size {group} must divide the port count {m}"
            )));
        }
        let mut zero_slots = vec![true; m * (m + 1) / 2];
        for j in 0..m {
            for i in 0..=j {
                if i / group == j / group {
                    zero_slots[half_slot(i, j)] = false;
                }
            }
        }
        Ok(Self { m, zero_slots })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_zero_slot(&self, slot: usize) -> bool {
        self.zero_slots[slot]
    }

    pub fn free_slots(&self) -> usize {
        self.zero_slots.iter().filter(|z| !**z).count()
    }
}

/// Cascade gain `h_R^T Theta h_I` for one subcarrier.
pub fn cascade_channel(
    theta: &ScatteringMatrix,
    h_r: &DVector<Complex64>,
    h_i: &DVector<Complex64>,
) -> Complex64 {
    h_r.dot(&(&theta.theta * h_i))
}

/// Vectorized cascade coefficients `a_n = P^T Vec(h_I h_R^T)` so that
/// `h_n = a_n^T halfvec(Theta)` for symmetric Theta.
pub fn a_vector(
    perm: &PermutationP,
    h_r: &DVector<Complex64>,
    h_i: &DVector<Complex64>,
) -> DVector<Complex64> {
    perm.p_transpose_vec(&(h_i * h_r.transpose()))
}

/// End-to-end per-subcarrier gains for a channel realization, including the
/// direct link when present.
pub fn cascade_all(theta: &ScatteringMatrix, ch: &ChannelRealization) -> CascadeChannel {
    let mut h: Vec<Complex64> = ch
        .h_r
        .iter()
        .zip(&ch.h_i)
        .map(|(hr, hi)| cascade_channel(theta, hr, hi))
        .collect();
    if let Some(hd) = &ch.h_d {
        for (v, d) in h.iter_mut().zip(hd) {
            *v += d;
        }
    }
    CascadeChannel::new(h)
}

/// Entrywise magnitude bound of a perturbation.
fn entrywise_max(mat: &DMatrix<Complex64>) -> f64 {
    mat.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Matrix infinity norm (maximum absolute row sum).
pub fn inf_norm(mat: &DMatrix<Complex64>) -> f64 {
    (0..mat.nrows())
        .map(|i| (0..mat.ncols()).map(|j| mat[(i, j)].norm()).sum())
        .fold(0.0, f64::max)
}

/// Checks the perturbation sizing `delta * ||(Z + Z0 I)^-1||_inf << 1` and
/// returns the shifted inverse on success.
fn checked_shifted_inverse(
    z: &ImpedanceMatrix,
    omega: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if omega.nrows() != z.m() || omega.ncols() != z.m() {
        return Err(Error::Contract("perturbation dimension mismatch".into()));
    }
    let inv = z.shifted_inverse()?;
    let ratio = entrywise_max(omega) * inf_norm(&inv);
    if ratio > 0.5 {
        return Err(Error::Contract(format!(
            "perturbation too large for the first-order expansion: delta * ||(Z+Z0 I)^-1||_inf = {ratio:.3e}"
        )));
    }
    Ok(inv)
}

/// First-order Neumann expansion of `(Z + Z0 I + Omega)^-1`:
/// returns `A^-1 - A^-1 Omega A^-1` with `A = Z + Z0 I`.
pub fn neumann_approx_inverse(
    z: &ImpedanceMatrix,
    omega: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    let inv = checked_shifted_inverse(z, omega)?;
    Ok(&inv - &inv * omega * &inv)
}

/// Linearization of the cascade gain around Z: coefficients such that
/// `h_n(Z + Omega) ~= offset - f^T halfvec(Omega)`, first-order exact in
/// Omega.
#[derive(Debug, Clone)]
pub struct LinearizedGain {
    /// Gain at Omega = 0, i.e. `a_n^T b_n`.
    pub offset: Complex64,
    /// Sensitivity vector over half-vector slots.
    pub f: DVector<Complex64>,
}

impl LinearizedGain {
    pub fn evaluate(&self, omega_half: &DVector<Complex64>) -> Complex64 {
        self.offset - self.f.dot(omega_half)
    }
}

/// Computes the linearized cascade gain for one subcarrier:
/// `a_n = A^T h_R`, `b_n = (Z - Z0 I) h_I`, `f_n = P^T Vec((A b_n - h_I) a_n^T)`
/// with `A = (Z + Z0 I)^-1`. The `- h_I` correction keeps the expansion
/// first-order exact in the perturbed numerator as well, so the error against
/// the exact gain at `Z + Omega` is second order in the perturbation.
pub fn linearized_cascade(
    z: &ImpedanceMatrix,
    perm: &PermutationP,
    h_r: &DVector<Complex64>,
    h_i: &DVector<Complex64>,
) -> Result<LinearizedGain> {
    let m = z.m();
    let a_inv = z.shifted_inverse()?;
    let b_mat = &z.z - DMatrix::from_diagonal_element(m, m, Complex64::new(z.z0, 0.0));
    let a_n = a_inv.transpose() * h_r;
    let b_n = b_mat * h_i;
    let offset = a_n.dot(&b_n);
    let inner = &a_inv * &b_n - h_i;
    let f = perm.p_transpose_vec(&(inner * a_n.transpose()));
    Ok(LinearizedGain { offset, f })
}

/// Matrix-path evaluation of the same first-order model:
/// `h_R^T (Theta_0 + 2 Z0 A Omega A) h_I`; agrees with
/// [`LinearizedGain::evaluate`] to machine precision.
pub fn linearized_cascade_matrix(
    z: &ImpedanceMatrix,
    omega: &DMatrix<Complex64>,
    h_r: &DVector<Complex64>,
    h_i: &DVector<Complex64>,
) -> Result<Complex64> {
    let inv = checked_shifted_inverse(z, omega)?;
    let theta0 = scattering_from_impedance(z)?.theta;
    let lin = theta0 + &inv * omega * &inv * Complex64::new(2.0 * z.z0, 0.0);
    Ok(h_r.dot(&(lin * h_i)))
}

/// Takagi factorization `Theta = Q Sigma Q^T` of a complex symmetric matrix,
/// with unitary Q and nonnegative diagonal Sigma (descending).
///
/// Computed through the real symmetric embedding `[[B, C], [C, -B]]` of
/// `Theta = B + jC`, whose eigenpairs `(sigma, [x; y])` give the Takagi
/// vectors `q = x + jy`.
pub fn takagi(theta: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, DVector<f64>)> {
    let m = theta.nrows();
    let sym = (theta - theta.transpose()).norm();
    if sym > 1e-8 * theta.norm().max(1.0) {
        return Err(Error::Contract(format!(
            "Takagi factorization needs a symmetric matrix: residual {sym:.3e}"
        )));
    }
    let attempt = |mat: &DMatrix<Complex64>| -> (DMatrix<Complex64>, DVector<f64>) {
        let mut k = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                let v = (mat[(i, j)] + mat[(j, i)]) / 2.0;
                k[(i, j)] = v.re;
                k[(i, j + m)] = v.im;
                k[(i + m, j)] = v.im;
                k[(i + m, j + m)] = -v.re;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(k);
        let mut order: Vec<usize> = (0..2 * m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let mut q = DMatrix::<Complex64>::zeros(m, m);
        let mut sigma = DVector::<f64>::zeros(m);
        for (col, &idx) in order.iter().take(m).enumerate() {
            sigma[col] = eig.eigenvalues[idx].max(0.0);
            for row in 0..m {
                q[(row, col)] = Complex64::new(
                    eig.eigenvectors[(row, idx)],
                    eig.eigenvectors[(row + m, idx)],
                );
            }
        }
        (q, sigma)
    };

    let (q, sigma) = attempt(theta);
    let recon = &q * DMatrix::from_diagonal(&sigma.map(|v| Complex64::new(v, 0.0))) * q.transpose();
    if (&recon - theta).norm() <= 1e-8 * theta.norm().max(1.0) {
        return Ok((q, sigma));
    }

    // Degenerate spectra can pair eigenvectors inconsistently; a tiny
    // symmetric jitter splits the ties without moving the answer beyond the
    // validation tolerance.
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a4a61);
    let mut jittered = theta.clone();
    for i in 0..m {
        for j in i..m {
            let eps = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2e-10;
            jittered[(i, j)] += eps;
            jittered[(j, i)] = jittered[(i, j)];
        }
    }
    let (q, sigma) = attempt(&jittered);
    let recon = &q * DMatrix::from_diagonal(&sigma.map(|v| Complex64::new(v, 0.0))) * q.transpose();
    let resid = (&recon - theta).norm();
    if resid <= 1e-8 * theta.norm().max(1.0) {
        Ok((q, sigma))
    } else {
        Err(Error::Numerical(format!("Takagi factorization failed: residual {resid:.3e}")))
    }
}

/// Builds `Q diag(e^(j phi)) Q^T` from Takagi vectors and phases.
pub fn takagi_unitary(q: &DMatrix<Complex64>, phases: &[f64]) -> ScatteringMatrix {
    let d = DVector::from_iterator(phases.len(), phases.iter().map(|&p| Complex64::from_polar(1.0, p)));
    ScatteringMatrix::new(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// Randomization-based feasibility mapping: factors the (possibly
/// infeasible) candidate as `Q Sigma Q^T`, replaces Sigma by unit-modulus
/// diagonals — `K` random draws plus the deterministic all-zero phase — and
/// returns the feasible matrix with the highest DC current under the fixed
/// waveform.
pub fn feasibility_map(
    candidate: &DMatrix<Complex64>,
    ch: &ChannelRealization,
    s: &Waveform,
    params: &RectifierParams,
    k_draws: usize,
    seed: u64,
) -> Result<ScatteringMatrix> {
    if k_draws == 0 {
        return Err(Error::Contract("at least one randomization draw is required".into()));
    }
    let (q, _) = takagi(candidate)?;
    let m = candidate.nrows();
    let n = ch.n();
    // h_n(phi) = sum_m e^(j phi_m) (Q^T h_R)_m (Q^T h_I)_m, precomputed per
    // subcarrier so each draw costs O(M N).
    let qt = q.transpose();
    let weights: Vec<DVector<Complex64>> = (0..n)
        .map(|i| {
            let alpha = &qt * &ch.h_r[i];
            let beta = &qt * &ch.h_i[i];
            DVector::from_iterator(m, alpha.iter().zip(beta.iter()).map(|(a, b)| a * b))
        })
        .collect();
    let h_d = ch.h_d.clone().unwrap_or_else(|| vec![Complex64::ZERO; n]);

    let eval_phases = |phases: &[f64]| -> Result<f64> {
        let phasors: Vec<Complex64> =
            phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        let h: Vec<Complex64> = (0..n)
            .map(|i| {
                weights[i]
                    .iter()
                    .zip(&phasors)
                    .map(|(w, p)| w * p)
                    .sum::<Complex64>()
                    + h_d[i]
            })
            .collect();
        idc(s, &CascadeChannel::new(h), params)
    };

    let mut best_phases = vec![0.0; m];
    let mut best_value = eval_phases(&best_phases)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0xfea51b]));
    for _ in 0..k_draws {
        let phases: Vec<f64> =
            (0..m).map(|_| rng.random::<f64>() * 2.0 * std::f64::consts::PI).collect();
        let value = eval_phases(&phases)?;
        if value > best_value {
            best_value = value;
            best_phases = phases;
        }
    }
    Ok(takagi_unitary(&q, &best_phases))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_imag_symmetric(m: usize, rng: &mut impl Rng) -> ImpedanceMatrix {
        let mut z = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let x = (rng.random::<f64>() - 0.5) * 2.0 * Z0_DEFAULT;
                z[(i, j)] = Complex64::new(0.0, x);
                z[(j, i)] = z[(i, j)];
            }
        }
        ImpedanceMatrix::new(z, Z0_DEFAULT).unwrap()
    }

    fn random_cvec(m: usize, rng: &mut impl Rng) -> DVector<Complex64> {
        DVector::from_fn(m, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0
        })
    }

    fn random_symmetric_complex(m: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
        let mut a = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                a[(i, j)] = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                a[(j, i)] = a[(i, j)];
            }
        }
        a
    }

    #[test]
    fn reference_network_maps_to_j_identity() {
        let z = ImpedanceMatrix::reference(4, Z0_DEFAULT);
        let theta = scattering_from_impedance(&z).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { Complex64::new(0.0, 1.0) } else { Complex64::ZERO };
                assert_relative_eq!((theta.theta[(i, j)] - expect).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_impedance_gives_diagonal_unit_modulus() {
        let reactances = [-120.0, -3.0, 0.0, 42.0, 500.0];
        let z = ImpedanceMatrix::new(
            DMatrix::from_diagonal(&DVector::from_iterator(
                5,
                reactances.iter().map(|&x| Complex64::new(0.0, x)),
            )),
            Z0_DEFAULT,
        )
        .unwrap();
        let theta = scattering_from_impedance(&z).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    assert_relative_eq!(theta.theta[(i, j)].norm(), 1.0, epsilon = 1e-12);
                } else {
                    assert_eq!(theta.theta[(i, j)], Complex64::ZERO);
                }
            }
        }
    }

    #[test]
    fn scattering_is_symmetric_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let z = random_imag_symmetric(6, &mut rng);
            let theta = scattering_from_impedance(&z).unwrap();
            assert!(theta.symmetry_residual() <= 1e-10, "{}", theta.symmetry_residual());
            assert!(theta.unitarity_residual() <= 1e-10, "{}", theta.unitarity_residual());
        }
    }

    #[test]
    fn invalid_impedance_rejected() {
        let mut z = DMatrix::<Complex64>::zeros(2, 2);
        z[(0, 1)] = Complex64::new(0.0, 3.0);
        assert!(ImpedanceMatrix::new(z.clone(), Z0_DEFAULT).is_err()); // not symmetric
        z[(1, 0)] = Complex64::new(0.0, 3.0);
        z[(0, 0)] = Complex64::new(5.0, 0.0);
        assert!(ImpedanceMatrix::new(z, Z0_DEFAULT).is_err()); // resistive
    }

    #[test]
    fn permutation_small_cases() {
        let p1 = permutation_matrix(1);
        assert_eq!(p1.dim_half(), 1);
        assert_eq!(p1.row_to_slot, vec![0]);

        // M=2, column-major Vec positions (1,1),(2,1),(1,2),(2,2) -> slots 1,2,2,3 (1-based).
        let p2 = permutation_matrix(2);
        assert_eq!(p2.row_to_slot, vec![0, 1, 1, 2]);
    }

    #[test]
    fn permutation_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 5;
        let p = permutation_matrix(m);
        let theta = random_symmetric_complex(m, &mut rng);
        let half = p.halfvec(&theta);
        let back = p.expand(&half);
        assert_relative_eq!((&back - &theta).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pbar_encodes_gram_of_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let m = 4;
        let p = permutation_matrix(m);
        let theta = random_symmetric_complex(m, &mut rng);
        let half = p.halfvec(&theta);
        let gram = &theta * theta.adjoint();
        for i in 0..m {
            for j in 0..m {
                let pbar = p.pbar(i, j);
                // theta^H Pbar theta = (Theta Theta^H)_(j,i)
                let quad: Complex64 = (0..p.dim_half())
                    .map(|k| {
                        (0..p.dim_half())
                            .map(|l| half[k].conj() * pbar[(k, l)] * half[l])
                            .sum::<Complex64>()
                    })
                    .sum();
                assert_relative_eq!((quad - gram[(j, i)]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cascade_identity_and_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h_r = random_cvec(4, &mut rng);
        let h_i = random_cvec(4, &mut rng);
        let got = cascade_channel(&ScatteringMatrix::identity(4), &h_r, &h_i);
        let expect: Complex64 = h_r.iter().zip(h_i.iter()).map(|(a, b)| a * b).sum();
        assert_relative_eq!((got - expect).norm(), 0.0, epsilon = 1e-12);

        let theta = ScatteringMatrix::new(DMatrix::from_element(1, 1, Complex64::new(0.3, -0.8)));
        let hr = random_cvec(1, &mut rng);
        let hi = random_cvec(1, &mut rng);
        let got = cascade_channel(&theta, &hr, &hi);
        assert_relative_eq!(
            (got - theta.theta[(0, 0)] * hr[0] * hi[0]).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn cascade_dual_path_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let m = rng.random_range(1..=10usize);
            let p = permutation_matrix(m);
            let theta = random_symmetric_complex(m, &mut rng);
            let h_r = random_cvec(m, &mut rng);
            let h_i = random_cvec(m, &mut rng);
            let direct = cascade_channel(&ScatteringMatrix::new(theta.clone()), &h_r, &h_i);
            let a = a_vector(&p, &h_r, &h_i);
            let vectorized = a.dot(&p.halfvec(&theta));
            assert!((direct - vectorized).norm() <= 1e-12 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn neumann_zero_perturbation_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = random_imag_symmetric(5, &mut rng);
        let approx = neumann_approx_inverse(&z, &DMatrix::zeros(5, 5)).unwrap();
        let exact = z.shifted_inverse().unwrap();
        assert_relative_eq!((&approx - &exact).norm(), 0.0, epsilon = 1e-15);
    }

    fn random_omega(m: usize, delta: f64, rng: &mut impl Rng) -> DMatrix<Complex64> {
        let mut w = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                w[(i, j)] = Complex64::new(0.0, (rng.random::<f64>() - 0.5) * 2.0 * delta);
                w[(j, i)] = w[(i, j)];
            }
        }
        w
    }

    fn neumann_error(z: &ImpedanceMatrix, omega: &DMatrix<Complex64>) -> f64 {
        let m = z.m();
        let approx = neumann_approx_inverse(z, omega).unwrap();
        let exact = (&z.z
            + omega
            + DMatrix::from_diagonal_element(m, m, Complex64::new(z.z0, 0.0)))
        .try_inverse()
        .unwrap();
        (&approx - &exact).norm() / exact.norm()
    }

    #[test]
    fn neumann_error_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = random_imag_symmetric(6, &mut rng);
        let inv_norm = inf_norm(&z.shifted_inverse().unwrap());
        let delta = 0.05 / inv_norm;
        let omega = random_omega(6, 1.0, &mut rng);
        let e1 = neumann_error(&z, &(omega.clone() * Complex64::from(delta)));
        let e2 = neumann_error(&z, &(omega * Complex64::from(delta / 10.0)));
        let ratio = e1 / e2;
        assert!((60.0..170.0).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn neumann_gamma_sizing_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let z = random_imag_symmetric(8, &mut rng);
            let tau = 0.01 / inf_norm(&z.shifted_inverse().unwrap());
            let omega = random_omega(8, tau, &mut rng);
            assert!(neumann_error(&z, &omega) <= 1e-3);
        }
    }

    #[test]
    fn neumann_rejects_oversized_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = random_imag_symmetric(4, &mut rng);
        let big = 2.0 / inf_norm(&z.shifted_inverse().unwrap());
        let omega = random_omega(4, big, &mut rng) * Complex64::from(10.0);
        assert!(matches!(neumann_approx_inverse(&z, &omega), Err(Error::Contract(_))));
    }

    #[test]
    fn linearized_cascade_zero_omega_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = 6;
        let z = random_imag_symmetric(m, &mut rng);
        let p = permutation_matrix(m);
        let h_r = random_cvec(m, &mut rng);
        let h_i = random_cvec(m, &mut rng);
        let lin = linearized_cascade(&z, &p, &h_r, &h_i).unwrap();
        let at_zero = lin.evaluate(&DVector::zeros(p.dim_half()));
        let theta = scattering_from_impedance(&z).unwrap();
        let exact = cascade_channel(&theta, &h_r, &h_i);
        assert!((at_zero - exact).norm() <= 1e-12 * exact.norm().max(1.0));
    }

    #[test]
    fn linearized_cascade_dual_path_and_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..25 {
            let m = 6;
            let z = random_imag_symmetric(m, &mut rng);
            let p = permutation_matrix(m);
            let h_r = random_cvec(m, &mut rng);
            let h_i = random_cvec(m, &mut rng);
            let tau = 0.01 / inf_norm(&z.shifted_inverse().unwrap());
            let omega = random_omega(m, tau, &mut rng);
            let lin = linearized_cascade(&z, &p, &h_r, &h_i).unwrap();
            let vec_path = lin.evaluate(&p.halfvec(&omega));
            let mat_path = linearized_cascade_matrix(&z, &omega, &h_r, &h_i).unwrap();
            assert!((vec_path - mat_path).norm() <= 1e-12 * mat_path.norm().max(1.0));

            let z_new = ImpedanceMatrix::new(&z.z + &omega, z.z0).unwrap();
            let exact =
                cascade_channel(&scattering_from_impedance(&z_new).unwrap(), &h_r, &h_i);
            assert!(
                (vec_path - exact).norm() <= 1e-3 * exact.norm().max(1e-6),
                "linearization error {}",
                (vec_path - exact).norm() / exact.norm()
            );
        }
    }

    #[test]
    fn takagi_reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for m in [1usize, 2, 3, 6] {
            let a = random_symmetric_complex(m, &mut rng);
            let (q, sigma) = takagi(&a).unwrap();
            assert!(sigma.iter().all(|&v| v >= 0.0));
            let recon =
                &q * DMatrix::from_diagonal(&sigma.map(|v| Complex64::new(v, 0.0))) * q.transpose();
            assert!((&recon - &a).norm() <= 1e-8 * a.norm().max(1.0));
            let mi = DMatrix::<Complex64>::identity(m, m);
            assert!((q.adjoint() * &q - mi).norm() <= 1e-8);
        }
    }

    #[test]
    fn takagi_of_unitary_symmetric_has_unit_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let z = random_imag_symmetric(5, &mut rng);
        let theta = scattering_from_impedance(&z).unwrap();
        let (q, sigma) = takagi(&theta.theta).unwrap();
        for v in sigma.iter() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-8);
        }
        let recon =
            &q * DMatrix::from_diagonal(&sigma.map(|v| Complex64::new(v, 0.0))) * q.transpose();
        assert!((&recon - &theta.theta).norm() <= 1e-8);
    }

    fn toy_realization(m: usize, n: usize, rng: &mut impl Rng) -> ChannelRealization {
        ChannelRealization {
            h_i: (0..n).map(|_| random_cvec(m, rng)).collect(),
            h_r: (0..n).map(|_| random_cvec(m, rng)).collect(),
            h_d: None,
            seed: 0,
            kappa: 0.0,
        }
    }

    #[test]
    fn feasibility_map_output_is_feasible_and_not_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = RectifierParams { k2: 0.17, k4: 957.25 };
        let m = 4;
        let ch = toy_realization(m, 3, &mut rng);
        let s = Waveform::new((0..3).map(|_| random_cvec(1, &mut rng)[0]).collect());

        // Arbitrary (infeasible) candidate.
        let cand = random_symmetric_complex(m, &mut rng);
        let mapped = feasibility_map(&cand, &ch, &s, &params, 200, 7).unwrap();
        assert!(mapped.is_feasible());

        // Already-feasible input is never degraded (zero-phase candidate kept).
        let z = random_imag_symmetric(m, &mut rng);
        let theta = scattering_from_impedance(&z).unwrap();
        let before = idc(&s, &cascade_all(&theta, &ch), &params).unwrap();
        let mapped = feasibility_map(&theta.theta, &ch, &s, &params, 50, 3).unwrap();
        let after = idc(&s, &cascade_all(&mapped, &ch), &params).unwrap();
        assert!(after >= before - 1e-9 * before.abs());
    }

    #[test]
    fn feasibility_map_close_to_phase_grid_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let params = RectifierParams { k2: 0.17, k4: 957.25 };
        let m = 2;
        let ch = toy_realization(m, 2, &mut rng);
        let s = Waveform::new(vec![Complex64::new(1.0, 0.2), Complex64::new(-0.4, 0.9)]);
        let cand = random_symmetric_complex(m, &mut rng);
        let (q, _) = takagi(&cand).unwrap();

        // Exhaustive 64x64 grid over the two Takagi phases.
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..64 {
            for j in 0..64 {
                let phases = [
                    2.0 * std::f64::consts::PI * i as f64 / 64.0,
                    2.0 * std::f64::consts::PI * j as f64 / 64.0,
                ];
                let theta = takagi_unitary(&q, &phases);
                let v = idc(&s, &cascade_all(&theta, &ch), &params).unwrap();
                grid_best = grid_best.max(v);
            }
        }
        let mapped = feasibility_map(&cand, &ch, &s, &params, 10_000, 42).unwrap();
        let rand_best = idc(&s, &cascade_all(&mapped, &ch), &params).unwrap();
        assert!(
            rand_best >= 0.99 * grid_best,
            "randomized {rand_best} vs grid {grid_best}"
        );
    }

    #[test]
    fn topology_presets() {
        let full = Topology::fully_connected(4);
        assert_eq!(full.free_slots(), 10);
        let diag = Topology::diagonal(4);
        assert_eq!(diag.free_slots(), 4);
        for i in 0..4 {
            assert!(!diag.is_zero_slot(half_slot(i, i)));
        }
        assert!(diag.is_zero_slot(half_slot(0, 1)));
        let grp = Topology::group_connected(4, 2).unwrap();
        assert_eq!(grp.free_slots(), 6);
        assert!(!grp.is_zero_slot(half_slot(0, 1)));
        assert!(grp.is_zero_slot(half_slot(1, 2)));
        assert!(Topology::group_connected(4, 3).is_err());
    }
}

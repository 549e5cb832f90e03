//! Dense linear algebra for small open quantum systems.
//!
//! Density matrices are vectorized by column stacking: entry `(i, j)` of a
//! `d x d` operator sits at index `i + d * j`, and the sandwich `A ρ B` maps
//! to the superoperator `Bᵀ ⊗ A`. Units are `ħ = k_B = γ = 1`, so every time
//! is a dimensionless `γτ`.

pub mod expm;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{ensure_finite, Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
/// Hermiticity drift tolerated (and removed) after a propagation step.
pub const DRIFT_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub(crate) fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub(crate) fn check_square(m: &CMatrix, dim: usize) -> Result<()> {
    if m.nrows() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: m.nrows(),
        });
    }
    if m.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: m.ncols(),
        });
    }
    Ok(())
}

/// Column-stacking vectorization.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// `d x d` Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let d = entries.nrows();
        if d == 0 {
            return Err(Error::InvalidState("zero-dimensional state".into()));
        }
        check_square(&entries, d)?;
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix entry".into()));
        }
        let defect = hermitian_defect(&entries);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (defect {defect:.3e})"
            )));
        }
        let tr = trace(&entries);
        if (tr - c(1.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = hermitian_eigenvalues(&entries)[0];
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self { entries })
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) nonzero vector.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        let v = psi.unscale(norm);
        Self::new(&v * v.adjoint())
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(populations.len(), populations.iter().map(|&p| c(p)));
        Self::new(CMatrix::from_diagonal(&d))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            entries: CMatrix::from_diagonal_element(dim, dim, c(1.0 / dim as f64)),
        }
    }

    /// `|k⟩⟨k|` in the computational basis.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidArgument(format!("basis index {k} >= {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = c(1.0);
        Ok(Self { entries: m })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    /// Diagonal in the computational basis.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).collect()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            entries: self.entries.kronecker(&other.entries),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }
}

/// Hermitian Hamiltonian in units of γ.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    entries: CMatrix,
}

impl HamiltonianSpec {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let d = entries.nrows();
        check_square(&entries, d)?;
        let defect = hermitian_defect(&entries);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidOperator(format!(
                "Hamiltonian not Hermitian (defect {defect:.3e})"
            )));
        }
        Ok(Self { entries })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            entries: CMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperoperatorKind {
    Generator,
    Propagator,
}

/// Linear map on vectorized `d x d` operators, stored as a `d² x d²` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    entries: CMatrix,
    kind: SuperoperatorKind,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, entries: CMatrix, kind: SuperoperatorKind) -> Result<Self> {
        check_square(&entries, dim * dim)?;
        Ok(Self { dim, entries, kind })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: CMatrix::identity(dim * dim, dim * dim),
            kind: SuperoperatorKind::Propagator,
        }
    }

    /// `ρ ↦ A ρ B`.
    pub fn sandwich(a: &CMatrix, b: &CMatrix, kind: SuperoperatorKind) -> Result<Self> {
        let d = a.nrows();
        check_square(a, d)?;
        check_square(b, d)?;
        Ok(Self {
            dim: d,
            entries: b.transpose().kronecker(a),
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> SuperoperatorKind {
        self.kind
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// Raw action on an arbitrary `d x d` operator.
    pub fn act(&self, m: &CMatrix) -> Result<CMatrix> {
        check_square(m, self.dim)?;
        Ok(unvectorize(&(&self.entries * vectorize(m)), self.dim))
    }

    /// Applies a propagator to a state. Roundoff asymmetry below
    /// [`DRIFT_TOL`] is removed; anything larger is an error.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if self.kind != SuperoperatorKind::Propagator {
            return Err(Error::InvalidOperator(
                "generators cannot be applied to states; propagate first".into(),
            ));
        }
        let out = self.act(rho.entries())?;
        let drift = hermitian_defect(&out);
        if drift >= DRIFT_TOL {
            return Err(Error::HermiticityDrift(drift));
        }
        let sym = hermitian_part(&out);
        let tr = trace(&sym);
        if (tr - c(1.0)).norm() > DRIFT_TOL {
            return Err(Error::InvalidOperator(format!(
                "propagator is not trace preserving (trace {tr})"
            )));
        }
        DensityMatrix::new(sym / c(tr.re))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Superoperator) -> Result<Superoperator> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let kind = if self.kind == SuperoperatorKind::Propagator
            && other.kind == SuperoperatorKind::Propagator
        {
            SuperoperatorKind::Propagator
        } else {
            SuperoperatorKind::Generator
        };
        Ok(Superoperator {
            dim: self.dim,
            entries: &self.entries * &other.entries,
            kind,
        })
    }

    fn add_scaled(&mut self, other: &Superoperator, scale: f64) {
        self.entries += &other.entries * c(scale);
    }
}

/// `D[L]ρ = LρL† − ½{L†L, ρ}` as a generator.
pub fn dissipator(l: &CMatrix) -> Result<Superoperator> {
    let d = l.nrows();
    check_square(l, d)?;
    let ident = CMatrix::identity(d, d);
    let ldl = l.adjoint() * l;
    let jump = l.conjugate().kronecker(l);
    let anti = ident.kronecker(&ldl) + ldl.transpose().kronecker(&ident);
    Ok(Superoperator {
        dim: d,
        entries: jump - anti * c(0.5),
        kind: SuperoperatorKind::Generator,
    })
}

/// `𝕃ρ = −i[H, ρ] + Σ_j γ_j D[L_j]ρ`.
pub fn liouvillian(h: &HamiltonianSpec, jumps: &[(f64, CMatrix)]) -> Result<Superoperator> {
    let d = h.dim();
    let ident = CMatrix::identity(d, d);
    let hm = h.entries();
    let minus_i = C64::new(0.0, -1.0);
    let commutator = (ident.kronecker(hm) - hm.transpose().kronecker(&ident)) * minus_i;
    let mut gen = Superoperator {
        dim: d,
        entries: commutator,
        kind: SuperoperatorKind::Generator,
    };
    for (rate, op) in jumps {
        ensure_finite(*rate, "jump rate")?;
        if *rate < 0.0 {
            return Err(Error::NegativeRate(*rate));
        }
        check_square(op, d)?;
        if *rate > 0.0 {
            gen.add_scaled(&dissipator(op)?, *rate);
        }
    }
    Ok(gen)
}

/// `exp(𝕃τ)` for a generator and `τ ≥ 0` (in units of 1/γ).
pub fn propagate(gen: &Superoperator, tau: f64) -> Result<Superoperator> {
    ensure_finite(tau, "tau")?;
    if tau < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time {tau}")));
    }
    if gen.kind != SuperoperatorKind::Generator {
        return Err(Error::InvalidOperator("expected a generator".into()));
    }
    if tau == 0.0 {
        return Ok(Superoperator::identity(gen.dim));
    }
    let entries = expm::expm(&(&gen.entries * c(tau)))?;
    Ok(Superoperator {
        dim: gen.dim,
        entries,
        kind: SuperoperatorKind::Propagator,
    })
}

/// Same as [`propagate`] but through the eigendecomposition of the generator.
pub fn propagate_eig(gen: &Superoperator, tau: f64) -> Result<Superoperator> {
    ensure_finite(tau, "tau")?;
    if tau < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time {tau}")));
    }
    let entries = expm::expm_eig(&(&gen.entries * c(tau)))?;
    Ok(Superoperator {
        dim: gen.dim,
        entries,
        kind: SuperoperatorKind::Propagator,
    })
}

/// All `d²` eigenvalues, by real part descending then imaginary part ascending.
pub fn spectrum(op: &Superoperator) -> Result<Vec<C64>> {
    let mut vals = expm::eigenvalues(&op.entries)?;
    vals.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    Ok(vals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    System,
    Auxiliary,
}

/// Reduced state of a bipartite `d_s · d_c` state (system index major).
pub fn partial_trace(
    joint: &DensityMatrix,
    d_s: usize,
    d_c: usize,
    keep: Subsystem,
) -> Result<DensityMatrix> {
    if d_s == 0 || d_c == 0 || d_s * d_c != joint.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension {} does not factor as {d_s} x {d_c}",
            joint.dim()
        )));
    }
    let m = joint.entries();
    let out = match keep {
        Subsystem::System => CMatrix::from_fn(d_s, d_s, |i, j| {
            (0..d_c).map(|k| m[(i * d_c + k, j * d_c + k)]).sum()
        }),
        Subsystem::Auxiliary => CMatrix::from_fn(d_c, d_c, |i, j| {
            (0..d_s).map(|k| m[(k * d_c + i, k * d_c + j)]).sum()
        }),
    };
    DensityMatrix::new(hermitian_part(&out))
}

/// Pauli and ladder operators for a qubit with `|0⟩` the ground state.
pub mod qubit {
    use super::{c, CMatrix, C64};

    pub fn sigma_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
    }

    pub fn sigma_y() -> CMatrix {
        let i = C64::new(0.0, 1.0);
        CMatrix::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)])
    }

    pub fn sigma_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
    }

    /// `σ₋ = |0⟩⟨1|`.
    pub fn sigma_minus() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)])
    }
}

/// Seeded random states and unitaries for property tests and verification.
pub mod random {
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr_free::standard_normal;

    use super::{c, CMatrix, CVector, DensityMatrix, C64};

    mod rand_distr_free {
        use rand::Rng;

        /// Box-Muller standard normal.
        pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        }
    }

    fn ginibre<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> CMatrix {
        DMatrix::from_fn(n, m, |_, _| C64::new(standard_normal(rng), standard_normal(rng)))
    }

    /// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
    pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
        let qr = ginibre(n, n, rng).qr();
        let q = qr.q();
        let r = qr.r();
        let phases = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                let d = r[(i, i)];
                if d.norm() > 0.0 {
                    d / d.norm()
                } else {
                    c(1.0)
                }
            } else {
                c(0.0)
            }
        });
        q * phases
    }

    /// Full-rank mixed state `G G† / Tr(G G†)`.
    pub fn density_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
        let g = ginibre(n, n, rng);
        let m = &g * g.adjoint();
        let tr: f64 = (0..n).map(|i| m[(i, i)].re).sum();
        let m = super::hermitian_part(&(m / c(tr)));
        DensityMatrix::new(m).expect("Ginibre state is valid")
    }

    pub fn pure_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
        let v: CVector = ginibre(n, 1, rng).column(0).into_owned();
        DensityMatrix::pure(&v).expect("nonzero vector")
    }

    /// Random Hermitian matrix with entries of order `scale`.
    pub fn hermitian<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> CMatrix {
        let g = ginibre(n, n, rng);
        (&g + g.adjoint()) * c(0.5 * scale)
    }

    pub fn operator<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> CMatrix {
        ginibre(n, n, rng) * c(scale)
    }
}

//! Measurements and the measure-then-evolve step.
//!
//! One round of the protocol collapses the probe with the outcome-`ω`
//! measurement operator and then evolves it with the propagator attached to
//! `ω`. Attaching a propagator per outcome is how outcome-conditioned
//! waiting times (feedback) are expressed.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::qcore::{
    c, check_square, hermitian_defect, hermitian_eigenvalues, hermitian_part, propagate, CMatrix,
    CVector, DensityMatrix, Superoperator, SuperoperatorKind, C64,
};

/// Outcomes with probability at or below this are treated as impossible.
pub const EPS_P: f64 = 1e-12;
const ORTHONORMAL_TOL: f64 = 1e-12;
const COMPLETENESS_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-10;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Orthonormal basis `{|k⟩}`; outcome `k` is the `k`-th vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveBasis {
    vectors: Vec<CVector>,
}

impl ProjectiveBasis {
    pub fn new(vectors: Vec<CVector>) -> Result<Self> {
        let d = vectors.len();
        if d == 0 {
            return Err(Error::InvalidArgument("empty basis".into()));
        }
        for v in &vectors {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
        }
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = a.dotc(b);
                if (got - c(want)).norm() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "basis not orthonormal: ⟨{i}|{j}⟩ = {got}"
                    )));
                }
            }
        }
        Ok(Self { vectors })
    }

    pub fn computational(dim: usize) -> Self {
        let vectors = (0..dim)
            .map(|k| {
                let mut v = CVector::zeros(dim);
                v[k] = c(1.0);
                v
            })
            .collect();
        Self { vectors }
    }

    /// Columns of a unitary matrix.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        Self::new(u.column_iter().map(|col| col.into_owned()).collect())
    }

    /// Qubit basis along the Bloch direction `(polar, azimuth)`; outcome 0 is
    /// the `+1` eigenstate of `n·σ`. `(0, 0)` is the computational basis,
    /// `(π/2, 0)` the σ_x basis and `(π/2, π/2)` the σ_y basis.
    pub fn bloch(polar: f64, azimuth: f64) -> Result<Self> {
        if !polar.is_finite() || !azimuth.is_finite() {
            return Err(Error::NonFinite("Bloch angle".into()));
        }
        let (s, co) = (polar / 2.0).sin_cos();
        let phase = C64::from_polar(1.0, azimuth);
        let up = CVector::from_vec(vec![c(co), phase * s]);
        let down = CVector::from_vec(vec![c(s), -phase * co]);
        Self::new(vec![up, down])
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector(&self, k: usize) -> &CVector {
        &self.vectors[k]
    }

    pub fn projector(&self, k: usize) -> CMatrix {
        let v = &self.vectors[k];
        v * v.adjoint()
    }
}

/// Positive operator-valued measure with its canonical measurement operators
/// `L_ω = √M_ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    effects: Vec<CMatrix>,
    kraus: Vec<CMatrix>,
}

fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let roots = eig.eigenvalues.map(|x| c(x.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    v * CMatrix::from_diagonal(&roots) * v.adjoint()
}

impl Povm {
    pub fn new(effects: Vec<CMatrix>) -> Result<Self> {
        let d = effects
            .first()
            .ok_or_else(|| Error::InvalidArgument("POVM without effects".into()))?
            .nrows();
        let mut total = CMatrix::zeros(d, d);
        for (i, e) in effects.iter().enumerate() {
            check_square(e, d)?;
            if hermitian_defect(e) > COMPLETENESS_TOL {
                return Err(Error::InvalidOperator(format!("effect {i} not Hermitian")));
            }
            let min = hermitian_eigenvalues(e)[0];
            if min < -COMPLETENESS_TOL {
                return Err(Error::InvalidOperator(format!(
                    "effect {i} has negative eigenvalue {min:.3e}"
                )));
            }
            total += e;
        }
        let defect = max_abs(&(total - CMatrix::identity(d, d)));
        if defect > COMPLETENESS_TOL {
            return Err(Error::InvalidOperator(format!(
                "effects sum to identity only within {defect:.3e}"
            )));
        }
        let kraus = effects.iter().map(psd_sqrt).collect();
        Ok(Self { effects, kraus })
    }

    /// Projectors onto unions of computational basis states: outcome `g`
    /// resolves the states in `groups[g]`.
    pub fn coarse_grained(dim: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut effects = Vec::with_capacity(groups.len());
        for group in groups {
            let mut e = CMatrix::zeros(dim, dim);
            for &k in group {
                if k >= dim {
                    return Err(Error::InvalidArgument(format!("level {k} >= {dim}")));
                }
                e[(k, k)] += c(1.0);
            }
            effects.push(e);
        }
        Self::new(effects)
    }

    pub fn dim(&self) -> usize {
        self.effects[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn effect(&self, omega: usize) -> &CMatrix {
        &self.effects[omega]
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }

    pub fn kraus(&self, omega: usize) -> &CMatrix {
        &self.kraus[omega]
    }

    /// True when every effect is a projector and distinct effects are
    /// orthogonal, i.e. the POVM only resolves mutually orthogonal subspaces.
    pub fn is_subspace_orthogonal(&self) -> bool {
        for (i, a) in self.effects.iter().enumerate() {
            if max_abs(&(a * a - a)) > COMPLETENESS_TOL {
                return false;
            }
            for b in &self.effects[i + 1..] {
                if max_abs(&(a * b)) > COMPLETENESS_TOL {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    Projective(ProjectiveBasis),
    Povm(Povm),
}

impl Measurement {
    pub fn dim(&self) -> usize {
        match self {
            Measurement::Projective(b) => b.dim(),
            Measurement::Povm(p) => p.dim(),
        }
    }

    pub fn n_outcomes(&self) -> usize {
        match self {
            Measurement::Projective(b) => b.dim(),
            Measurement::Povm(p) => p.len(),
        }
    }

    pub fn effect(&self, omega: usize) -> CMatrix {
        match self {
            Measurement::Projective(b) => b.projector(omega),
            Measurement::Povm(p) => p.effect(omega).clone(),
        }
    }
}

impl From<ProjectiveBasis> for Measurement {
    fn from(b: ProjectiveBasis) -> Self {
        Measurement::Projective(b)
    }
}

impl From<Povm> for Measurement {
    fn from(p: Povm) -> Self {
        Measurement::Povm(p)
    }
}

fn check_dims(rho: &DensityMatrix, m: &Measurement) -> Result<()> {
    if rho.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: rho.dim(),
        });
    }
    Ok(())
}

fn check_outcome(m: &Measurement, omega: usize) -> Result<()> {
    if omega >= m.n_outcomes() {
        return Err(Error::InvalidArgument(format!(
            "outcome {omega} out of range for {} outcomes",
            m.n_outcomes()
        )));
    }
    Ok(())
}

/// `p(ω|ρ) = Tr(ρ M_ω)`, with roundoff negatives above `-EPS_P` clamped to zero.
pub fn outcome_probabilities(rho: &DensityMatrix, m: &Measurement) -> Result<Vec<f64>> {
    check_dims(rho, m)?;
    let r = rho.entries();
    let raw: Vec<f64> = match m {
        Measurement::Projective(b) => (0..b.dim())
            .map(|k| {
                let v = b.vector(k);
                v.dotc(&(r * v)).re
            })
            .collect(),
        Measurement::Povm(p) => p
            .effects()
            .iter()
            .map(|e| (r * e).trace().re)
            .collect(),
    };
    let mut probs = Vec::with_capacity(raw.len());
    for (omega, p) in raw.into_iter().enumerate() {
        if p < -EPS_P {
            return Err(Error::InvalidState(format!(
                "outcome {omega} has negative probability {p:.3e}"
            )));
        }
        probs.push(p.max(0.0));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > COMPLETENESS_TOL {
        return Err(Error::InvalidState(format!(
            "outcome probabilities sum to {total}"
        )));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Post-measurement state `L_ω ρ L_ω† / p(ω|ρ)`.
pub fn collapse(rho: &DensityMatrix, m: &Measurement, omega: usize) -> Result<DensityMatrix> {
    check_outcome(m, omega)?;
    let probability = outcome_probabilities(rho, m)?[omega];
    if probability <= EPS_P {
        return Err(Error::ZeroProbability {
            outcome: omega,
            probability,
        });
    }
    match m {
        Measurement::Projective(b) => DensityMatrix::pure(b.vector(omega)),
        Measurement::Povm(p) => {
            let l = p.kraus(omega);
            let out = l * rho.entries() * l.adjoint() / c(probability);
            DensityMatrix::new(hermitian_part(&out))
        }
    }
}

/// One measure-then-evolve round with outcome-dependent propagators.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureEvolveStep {
    measurement: Measurement,
    propagators: Vec<Superoperator>,
    waiting: Vec<f64>,
}

impl MeasureEvolveStep {
    pub fn new(
        measurement: Measurement,
        propagators: Vec<Superoperator>,
        waiting: Vec<f64>,
    ) -> Result<Self> {
        let n = measurement.n_outcomes();
        if propagators.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: propagators.len(),
            });
        }
        if waiting.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: waiting.len(),
            });
        }
        for p in &propagators {
            if p.dim() != measurement.dim() {
                return Err(Error::DimensionMismatch {
                    expected: measurement.dim(),
                    found: p.dim(),
                });
            }
            if p.kind() != SuperoperatorKind::Propagator {
                return Err(Error::InvalidOperator("step needs propagators".into()));
            }
        }
        for &t in &waiting {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidArgument(format!("invalid waiting time {t}")));
            }
        }
        Ok(Self {
            measurement,
            propagators,
            waiting,
        })
    }

    /// Propagators `exp(𝕃 τ(ω))` built from one generator and a waiting time
    /// per outcome. Equal waiting times share one exponential.
    pub fn from_generator(
        measurement: Measurement,
        generator: &Superoperator,
        waiting: Vec<f64>,
    ) -> Result<Self> {
        let mut cache: Vec<(f64, Superoperator)> = Vec::new();
        let mut propagators = Vec::with_capacity(waiting.len());
        for &t in &waiting {
            let prop = match cache.iter().find(|(tau, _)| *tau == t) {
                Some((_, p)) => p.clone(),
                None => {
                    let p = propagate(generator, t)?;
                    cache.push((t, p.clone()));
                    p
                }
            };
            propagators.push(prop);
        }
        Self::new(measurement, propagators, waiting)
    }

    pub fn uniform(measurement: Measurement, generator: &Superoperator, tau: f64) -> Result<Self> {
        let n = measurement.n_outcomes();
        Self::from_generator(measurement, generator, vec![tau; n])
    }

    pub fn measurement(&self) -> &Measurement {
        &self.measurement
    }

    pub fn propagator(&self, omega: usize) -> &Superoperator {
        &self.propagators[omega]
    }

    pub fn waiting_times(&self) -> &[f64] {
        &self.waiting
    }
}

/// `Φ_ω(ρ)`: collapse on `ω`, then evolve with the propagator for `ω`.
pub fn step(rho: &DensityMatrix, s: &MeasureEvolveStep, omega: usize) -> Result<DensityMatrix> {
    let collapsed = collapse(rho, &s.measurement, omega)?;
    s.propagators[omega].apply(&collapsed)
}

/// Probe-side POVM induced by a unitary collision with an auxiliary unit in
/// state `rho_c`, followed by a projective measurement of the auxiliary unit.
///
/// The joint space is ordered system-major (`system ⊗ auxiliary`). With
/// `ρ_C = Σ_j λ_j |p_j⟩⟨p_j|` the effects are `E_i = Σ_j F_ij† F_ij` where
/// `F_ij = √λ_j ⟨i|U|p_j⟩` acts on the system.
pub fn collision_povm(
    u: &CMatrix,
    rho_c: &DensityMatrix,
    aux_basis: &ProjectiveBasis,
) -> Result<Povm> {
    let d_c = rho_c.dim();
    if aux_basis.dim() != d_c {
        return Err(Error::DimensionMismatch {
            expected: d_c,
            found: aux_basis.dim(),
        });
    }
    let n = u.nrows();
    if n % d_c != 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "unitary dimension {n} is not a multiple of {d_c}"
        )));
    }
    check_square(u, n)?;
    let defect = max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)));
    if defect > UNITARY_TOL {
        return Err(Error::InvalidOperator(format!(
            "collision operator not unitary (defect {defect:.3e})"
        )));
    }
    let d_s = n / d_c;
    let eig = SymmetricEigen::new(rho_c.entries().clone());
    let mut effects = Vec::with_capacity(d_c);
    for i in 0..d_c {
        let aux = aux_basis.vector(i);
        let mut e = CMatrix::zeros(d_s, d_s);
        for j in 0..d_c {
            let weight = eig.eigenvalues[j].max(0.0);
            if weight == 0.0 {
                continue;
            }
            let p = eig.eigenvectors.column(j);
            let f = CMatrix::from_fn(d_s, d_s, |s, t| {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..d_c {
                    for b in 0..d_c {
                        acc += aux[a].conj() * u[(s * d_c + a, t * d_c + b)] * p[b];
                    }
                }
                acc * weight.sqrt()
            });
            e += f.adjoint() * f;
        }
        effects.push(hermitian_part(&e));
    }
    Povm::new(effects)
}

/// `Tr[U(ρ_S ⊗ ρ_C)U† (I ⊗ |i⟩⟨i|)]` computed on the joint space.
pub fn joint_outcome_probabilities(
    u: &CMatrix,
    rho_s: &DensityMatrix,
    rho_c: &DensityMatrix,
    aux_basis: &ProjectiveBasis,
) -> Result<Vec<f64>> {
    let joint = rho_s.tensor(rho_c);
    check_square(u, joint.dim())?;
    let evolved = u * joint.entries() * u.adjoint();
    let id_s = CMatrix::identity(rho_s.dim(), rho_s.dim());
    Ok((0..aux_basis.dim())
        .map(|i| {
            let proj = id_s.kronecker(&aux_basis.projector(i));
            (&evolved * proj).trace().re
        })
        .collect())
}

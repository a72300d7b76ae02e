//! Brute-force steady state of the driven, damped Tavis-Cummings model on a
//! truncated Fock space. Used to check the analytic spectrum and to handle
//! per-atom detunings that the closed form cannot.
//!
//! Basis index: `n · 2^N + bits`, where `n` is the photon number and bit `k` of
//! `bits` is set when atom `k` is excited. Density matrices are vectorised
//! column-major, so `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

use std::collections::HashMap;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::qed::SpectrumScan;

pub const DEFAULT_DIMENSION_CAP: usize = 4096;
pub const DEFAULT_PHOTON_CUTOFF: usize = 3;

type Entries = Vec<(usize, usize, Complex64)>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Parameters of one steady-state problem. Rates and detunings in MHz.
///
/// `per_atom_delta_ca[k]` is the cavity-atom detuning of atom `k`, so its
/// probe-atom detuning is `delta_pc + per_atom_delta_ca[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub per_atom_g: Vec<f64>,
    pub per_atom_delta_ca: Vec<f64>,
    pub photon_cutoff: usize,
    pub delta_pc: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub eta: f64,
    pub dimension_cap: usize,
}

impl SystemSpec {
    /// `n` identical atoms with coupling `g` and cavity-atom detuning `delta_ca`.
    pub fn uniform(n: usize, g: f64, delta_ca: f64, kappa: f64, gamma: f64, eta: f64) -> Self {
        Self {
            per_atom_g: vec![g; n],
            per_atom_delta_ca: vec![delta_ca; n],
            photon_cutoff: DEFAULT_PHOTON_CUTOFF,
            delta_pc: 0.0,
            kappa,
            gamma,
            eta,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.photon_cutoff = cutoff;
        self
    }

    pub fn n_atoms(&self) -> usize {
        self.per_atom_g.len()
    }

    /// Hilbert-space dimension, saturating on overflow.
    pub fn dimension(&self) -> usize {
        let atoms = u32::try_from(self.n_atoms())
            .ok()
            .and_then(|n| 1usize.checked_shl(n))
            .unwrap_or(usize::MAX);
        atoms.saturating_mul(self.photon_cutoff.saturating_add(1))
    }

    /// Mean cavity-atom detuning, the reference for probe-atom scans.
    pub fn mean_delta_ca(&self) -> f64 {
        if self.per_atom_delta_ca.is_empty() {
            0.0
        } else {
            self.per_atom_delta_ca.iter().sum::<f64>() / self.per_atom_delta_ca.len() as f64
        }
    }

    /// Copy with the probe set to `delta_pa` relative to the mean atom.
    pub fn at_probe(&self, delta_pa: f64) -> Self {
        Self {
            delta_pc: delta_pa - self.mean_delta_ca(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_atom_delta_ca.len() != self.n_atoms() {
            return Err(domain(format!(
                "{} couplings but {} detunings",
                self.n_atoms(),
                self.per_atom_delta_ca.len()
            )));
        }
        let d = self.dimension();
        if d > self.dimension_cap {
            return Err(Error::Resource {
                what: "Hilbert-space dimension",
                requested: d,
                cap: self.dimension_cap,
            });
        }
        let finite = self
            .per_atom_g
            .iter()
            .chain(&self.per_atom_delta_ca)
            .chain([&self.delta_pc, &self.kappa, &self.gamma, &self.eta])
            .all(|v| v.is_finite());
        if !finite {
            return Err(domain("system parameters must be finite"));
        }
        if self.kappa < 0.0 || self.gamma < 0.0 || self.eta < 0.0 {
            return Err(domain("kappa, gamma and eta must be non-negative"));
        }
        Ok(())
    }
}

/// What an operator represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorRole {
    Annihilation,
    Creation,
    Raising(usize),
    Lowering(usize),
    ZProjection(usize),
    CollectiveRaising,
    CollectiveLowering,
    CollectiveZ,
    Hamiltonian,
    Identity,
    Derived,
}

/// Sparse complex operator on the composite space, stored as sorted triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub role: OperatorRole,
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl OperatorMatrix {
    fn from_map(role: OperatorRole, dim: usize, map: HashMap<(usize, usize), Complex64>) -> Self {
        let mut entries: Vec<_> = map
            .into_iter()
            .filter(|(_, v)| *v != ZERO)
            .map(|((r, c), v)| (r, c, v))
            .collect();
        entries.sort_by_key(|&(r, c, _)| (c, r));
        Self { role, dim, entries }
    }

    fn from_entries(
        role: OperatorRole,
        dim: usize,
        entries: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Self {
        let mut map = HashMap::new();
        for (r, c, v) in entries {
            *map.entry((r, c)).or_insert(ZERO) += v;
        }
        Self::from_map(role, dim, map)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_entries(OperatorRole::Identity, dim, (0..dim).map(|i| (i, i, ONE)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    pub fn adjoint(&self) -> Self {
        let role = match self.role {
            OperatorRole::Annihilation => OperatorRole::Creation,
            OperatorRole::Creation => OperatorRole::Annihilation,
            OperatorRole::Raising(k) => OperatorRole::Lowering(k),
            OperatorRole::Lowering(k) => OperatorRole::Raising(k),
            OperatorRole::CollectiveRaising => OperatorRole::CollectiveLowering,
            OperatorRole::CollectiveLowering => OperatorRole::CollectiveRaising,
            r => r,
        };
        Self::from_entries(
            role,
            self.dim,
            self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())),
        )
    }

    pub fn transpose(&self) -> Self {
        Self::from_entries(
            OperatorRole::Derived,
            self.dim,
            self.entries.iter().map(|&(r, c, v)| (c, r, v)),
        )
    }

    pub fn conj(&self) -> Self {
        Self::from_entries(
            OperatorRole::Derived,
            self.dim,
            self.entries.iter().map(|&(r, c, v)| (r, c, v.conj())),
        )
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_entries(
            OperatorRole::Derived,
            self.dim,
            self.entries.iter().map(|&(r, c, v)| (r, c, s * v)),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_entries(
            OperatorRole::Derived,
            self.dim,
            self.entries.iter().chain(&other.entries).copied(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-ONE))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut by_row: HashMap<usize, Vec<(usize, Complex64)>> = HashMap::new();
        for &(r, c, v) in &other.entries {
            by_row.entry(r).or_default().push((c, v));
        }
        let mut map = HashMap::new();
        for &(r, k, a) in &self.entries {
            if let Some(row) = by_row.get(&k) {
                for &(c, b) in row {
                    *map.entry((r, c)).or_insert(ZERO) += a * b;
                }
            }
        }
        Self::from_map(OperatorRole::Derived, self.dim, map)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.sub(&self.adjoint()).max_abs() <= tol
    }
}

/// Builders for the elementary operators of a given atom number and cutoff.
#[derive(Debug, Clone, Copy)]
pub struct Basis {
    pub n_atoms: usize,
    pub cutoff: usize,
}

impl Basis {
    pub fn of(s: &SystemSpec) -> Self {
        Self {
            n_atoms: s.n_atoms(),
            cutoff: s.photon_cutoff,
        }
    }

    pub fn dim(&self) -> usize {
        (self.cutoff + 1) << self.n_atoms
    }

    fn atom_states(&self) -> usize {
        1 << self.n_atoms
    }

    pub fn index(&self, photons: usize, bits: usize) -> usize {
        photons * self.atom_states() + bits
    }

    /// Cavity annihilation operator, truncated at the cutoff.
    pub fn annihilation(&self) -> OperatorMatrix {
        let m = self.atom_states();
        let entries = (1..=self.cutoff).flat_map(|n| {
            (0..m).map(move |b| {
                (
                    self.index(n - 1, b),
                    self.index(n, b),
                    Complex64::from((n as f64).sqrt()),
                )
            })
        });
        OperatorMatrix::from_entries(OperatorRole::Annihilation, self.dim(), entries)
    }

    pub fn lowering(&self, k: usize) -> OperatorMatrix {
        let m = self.atom_states();
        let entries = (0..=self.cutoff).flat_map(|n| {
            (0..m)
                .filter(move |b| b & (1 << k) != 0)
                .map(move |b| (self.index(n, b & !(1 << k)), self.index(n, b), ONE))
        });
        OperatorMatrix::from_entries(OperatorRole::Lowering(k), self.dim(), entries)
    }

    pub fn raising(&self, k: usize) -> OperatorMatrix {
        let mut op = self.lowering(k).adjoint();
        op.role = OperatorRole::Raising(k);
        op
    }

    /// σᶻ with eigenvalues +½ (excited) and −½ (ground).
    pub fn sigma_z(&self, k: usize) -> OperatorMatrix {
        let entries = (0..self.dim()).map(|i| {
            let excited = (i % self.atom_states()) & (1 << k) != 0;
            (i, i, Complex64::from(if excited { 0.5 } else { -0.5 }))
        });
        OperatorMatrix::from_entries(OperatorRole::ZProjection(k), self.dim(), entries)
    }

    /// J⁻ = Σ g_k σ_k⁻ / √(Σ g_k²).
    pub fn collective_lowering(&self, g: &[f64]) -> Result<OperatorMatrix> {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if g.len() != self.n_atoms || norm == 0.0 {
            return Err(domain(
                "collective operators need one non-zero coupling per atom",
            ));
        }
        let mut op = OperatorMatrix::from_entries(OperatorRole::Derived, self.dim(), []);
        for (k, gk) in g.iter().enumerate() {
            op = op.add(&self.lowering(k).scale(Complex64::from(gk / norm)));
        }
        op.role = OperatorRole::CollectiveLowering;
        Ok(op)
    }

    pub fn collective_raising(&self, g: &[f64]) -> Result<OperatorMatrix> {
        Ok(self.collective_lowering(g)?.adjoint())
    }

    pub fn collective_z(&self) -> OperatorMatrix {
        let mut op = OperatorMatrix::from_entries(OperatorRole::Derived, self.dim(), []);
        for k in 0..self.n_atoms {
            op = op.add(&self.sigma_z(k));
        }
        op.role = OperatorRole::CollectiveZ;
        op
    }

    /// Total excitation number a†a + Σ σ_k⁺σ_k⁻.
    pub fn excitation_number(&self) -> OperatorMatrix {
        let entries = (0..self.dim()).map(|i| {
            let n = i / self.atom_states();
            let bits = (i % self.atom_states()).count_ones() as usize;
            (i, i, Complex64::from((n + bits) as f64))
        });
        OperatorMatrix::from_entries(OperatorRole::Derived, self.dim(), entries)
    }
}

/// Rotating-frame Hamiltonian
/// H = −Δpc a†a − Σ_k Δpa,k σ_k⁺σ_k⁻ + Σ_k g_k (a†σ_k⁻ + σ_k⁺a) + η(a + a†).
pub fn build_hamiltonian(s: &SystemSpec) -> Result<OperatorMatrix> {
    s.validate()?;
    let b = Basis::of(s);
    let d = b.dim();
    let a = b.annihilation();
    let ad = a.adjoint();
    let m = 1usize << b.n_atoms;
    let mut diag = HashMap::new();
    for i in 0..d {
        let (n, bits) = (i / m, i % m);
        let mut e = -s.delta_pc * n as f64;
        for k in 0..b.n_atoms {
            if bits & (1 << k) != 0 {
                e -= s.delta_pc + s.per_atom_delta_ca[k];
            }
        }
        diag.insert((i, i), Complex64::from(e));
    }
    let mut h = OperatorMatrix::from_map(OperatorRole::Derived, d, diag);
    for (k, &g) in s.per_atom_g.iter().enumerate() {
        let lower = b.lowering(k);
        let exchange = ad.mul(&lower);
        h = h.add(&exchange.add(&exchange.adjoint()).scale(Complex64::from(g)));
    }
    h = h.add(&a.add(&ad).scale(Complex64::from(s.eta)));
    h.role = OperatorRole::Hamiltonian;
    Ok(h)
}

/// Which physical process a block of the Liouvillian describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiouvillianTerm {
    Commutator,
    CavityDecay,
    AtomicDecay(usize),
}

/// Superoperator on column-major vectorised density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    terms: Vec<(LiouvillianTerm, Entries)>,
}

/// Triplets of `X ⊗ Y` for operators of dimension `d`.
fn kron(x: &OperatorMatrix, y: &OperatorMatrix, out: &mut Entries, scale: Complex64) {
    let d = y.dim();
    for &(xr, xc, xv) in x.entries() {
        for &(yr, yc, yv) in y.entries() {
            out.push((xr * d + yr, xc * d + yc, scale * xv * yv));
        }
    }
}

/// r(2LρL† − L†Lρ − ρL†L)
fn dissipator(l: &OperatorMatrix, rate: f64, id: &OperatorMatrix) -> Entries {
    let mut out = Vec::new();
    if rate == 0.0 {
        return out;
    }
    let r = Complex64::from(rate);
    let ldl = l.adjoint().mul(l);
    kron(&l.conj(), l, &mut out, 2.0 * r);
    kron(id, &ldl, &mut out, -r);
    kron(&ldl.transpose(), id, &mut out, -r);
    out
}

impl Liouvillian {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = LiouvillianTerm> + '_ {
        self.terms.iter().map(|t| t.0)
    }

    /// All entries, duplicates not merged.
    pub fn triplets(&self) -> impl Iterator<Item = &(usize, usize, Complex64)> {
        self.terms.iter().flat_map(|t| t.1.iter())
    }

    /// vec(𝓛ρ).
    pub fn apply(&self, rho: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; rho.len()];
        for &(r, c, v) in self.triplets() {
            out[r] += v * rho[c];
        }
        out
    }

    /// Largest |Tr 𝓛(E_ij)|, zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut cols = vec![ZERO; d * d];
        for &(r, c, v) in self.triplets() {
            if r % (d + 1) == 0 {
                cols[c] += v;
            }
        }
        cols.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// 𝓛ρ = −i[H,ρ] + κ𝒟[a]ρ + γ Σ_k 𝒟[σ_k⁻]ρ.
pub fn build_liouvillian(s: &SystemSpec) -> Result<Liouvillian> {
    let h = build_hamiltonian(s)?;
    let b = Basis::of(s);
    let d = b.dim();
    let id = OperatorMatrix::identity(d);
    let mut commutator = Vec::new();
    kron(&id, &h, &mut commutator, -I);
    kron(&h.transpose(), &id, &mut commutator, I);
    let mut terms = vec![
        (LiouvillianTerm::Commutator, commutator),
        (
            LiouvillianTerm::CavityDecay,
            dissipator(&b.annihilation(), s.kappa, &id),
        ),
    ];
    for k in 0..b.n_atoms {
        terms.push((
            LiouvillianTerm::AtomicDecay(k),
            dissipator(&b.lowering(k), s.gamma, &id),
        ));
    }
    let l = Liouvillian { dim: d, terms };
    let defect = l.trace_defect();
    if defect > 1e-10 * (1.0 + h.max_abs() + s.kappa + s.gamma) {
        return Err(domain(format!(
            "Liouvillian is not trace preserving (defect {defect:e})"
        )));
    }
    Ok(l)
}

/// A steady-state density matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub rho: DMatrix<Complex64>,
}

impl DensityMatrix {
    fn from_vec(d: usize, v: &[Complex64]) -> Self {
        Self {
            rho: DMatrix::from_column_slice(d, d, v),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// Tr(ρA).
    pub fn expectation(&self, a: &OperatorMatrix) -> Complex64 {
        a.entries()
            .iter()
            .map(|&(r, c, v)| v * self.rho[(c, r)])
            .sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint())
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::from(0.5);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solves 𝓛ρ = 0 with the ρ₀₀ equation replaced by Tr ρ = 1.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let d = l.dim;
    let n = d * d;
    let mut triplets: Vec<Triplet<usize, usize, c64>> = l
        .triplets()
        .filter(|e| e.0 != 0)
        .map(|&(r, c, v)| Triplet::new(r, c, c64::new(v.re, v.im)))
        .collect();
    triplets.extend((0..d).map(|i| Triplet::new(0, i * (d + 1), c64::new(1.0, 0.0))));
    let m = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| domain(format!("cannot assemble Liouvillian: {e:?}")))?;
    let lu = m
        .sp_lu()
        .map_err(|e| Error::Ambiguous(format!("singular steady-state system: {e:?}")))?;
    let mut rhs = Col::<c64>::zeros(n);
    rhs[0] = c64::new(1.0, 0.0);
    let x = lu.solve(&rhs);
    let v: Vec<Complex64> = (0..n).map(|i| Complex64::new(x[i].re, x[i].im)).collect();
    if v.iter().any(|z| !z.is_finite()) {
        return Err(Error::Ambiguous("steady-state system is singular".into()));
    }
    let scale = l.triplets().map(|e| e.2.norm()).fold(1.0, f64::max);
    let residual = l.apply(&v).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if residual > 1e-8 * scale {
        return Err(Error::Ambiguous(format!(
            "kernel is not one-dimensional (residual {residual:e})"
        )));
    }
    let rho = DensityMatrix::from_vec(d, &v);
    check_density(&rho)?;
    Ok(rho)
}

fn check_density(rho: &DensityMatrix) -> Result<()> {
    let tr = rho.trace();
    if (tr - ONE).norm() > 1e-10 {
        return Err(domain(format!("steady state has trace {tr}")));
    }
    let herm = rho.hermiticity_defect();
    if herm > 1e-9 {
        return Err(domain(format!(
            "steady state is not Hermitian (defect {herm:e})"
        )));
    }
    let min = rho.min_eigenvalue();
    if min < -1e-9 {
        return Err(domain(format!(
            "steady state has negative eigenvalue {min:e}"
        )));
    }
    Ok(())
}

/// Options for the time-propagation cross-check.
#[derive(Debug, Clone, Copy)]
pub struct PropagationOptions {
    pub dt: f64,
    pub max_time: f64,
    pub tol: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_time: 200.0,
            tol: 1e-10,
        }
    }
}

/// Integrates dρ/dt = 𝓛ρ from the vacuum with RK4 until ‖𝓛ρ‖ < tol.
pub fn steady_state_by_propagation(
    l: &Liouvillian,
    opts: PropagationOptions,
) -> Result<DensityMatrix> {
    let d = l.dim;
    let mut rho = vec![ZERO; d * d];
    rho[0] = ONE;
    let steps = (opts.max_time / opts.dt).ceil() as usize;
    let h = Complex64::from(opts.dt);
    let axpy = |x: &[Complex64], k: &[Complex64], s: Complex64| {
        x.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>()
    };
    for step in 0..steps {
        let k1 = l.apply(&rho);
        let rate = k1.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !rate.is_finite() || rho.iter().any(|z| !z.is_finite()) {
            return Err(Error::Convergence(format!(
                "propagation diverged after {step} steps"
            )));
        }
        if rate < opts.tol {
            let out = DensityMatrix::from_vec(d, &rho);
            check_density(&out)?;
            return Ok(out);
        }
        let k2 = l.apply(&axpy(&rho, &k1, 0.5 * h));
        let k3 = l.apply(&axpy(&rho, &k2, 0.5 * h));
        let k4 = l.apply(&axpy(&rho, &k3, h));
        for i in 0..rho.len() {
            rho[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Err(Error::Convergence(format!(
        "no steady state within t = {}",
        opts.max_time
    )))
}

/// Steady-state ⟨a⟩.
pub fn steady_field(s: &SystemSpec) -> Result<Complex64> {
    let rho = steady_state(&build_liouvillian(s)?)?;
    Ok(rho.expectation(&Basis::of(s).annihilation()))
}

/// T = |κ⟨a⟩/η|² at each probe-atom detuning (relative to the mean atom).
pub fn oracle_transmission(s: &SystemSpec, delta_pa_grid: &[f64]) -> Result<SpectrumScan> {
    s.validate()?;
    if !(s.eta > 0.0 && s.kappa > 0.0) {
        return Err(domain("transmission needs eta > 0 and kappa > 0"));
    }
    let points = delta_pa_grid
        .par_iter()
        .map(|&dpa| {
            let field = steady_field(&s.at_probe(dpa))?;
            Ok((dpa, (s.kappa * field / s.eta).norm_sqr()))
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumScan::new(points)
}

/// Dense reference used to cross-check [`Liouvillian::apply`].
pub fn liouvillian_dense(l: &Liouvillian) -> DMatrix<Complex64> {
    let n = l.dim * l.dim;
    let mut m = DMatrix::zeros(n, n);
    for &(r, c, v) in l.triplets() {
        m[(r, c)] += v;
    }
    m
}

/// Applies the master equation directly in operator form.
pub fn master_equation_rhs(s: &SystemSpec, rho: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let h = build_hamiltonian(s)?.to_dense();
    let b = Basis::of(s);
    let mut out = (&h * rho - rho * &h) * (-I);
    let mut add = |l: DMatrix<Complex64>, rate: f64| {
        let ld = l.adjoint();
        let ldl = &ld * &l;
        out += (&l * rho * &ld * Complex64::from(2.0) - &ldl * rho - rho * &ldl)
            * Complex64::from(rate);
    };
    add(b.annihilation().to_dense(), s.kappa);
    for k in 0..b.n_atoms {
        add(b.lowering(k).to_dense(), s.gamma);
    }
    Ok(out)
}

#[doc(hidden)]
pub fn vectorise(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    DVector::from_column_slice(m.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qed::{steady_state_field, transmission, transmission_peaks, Detunings, Linewidths};
    use proptest::prelude::*;

    const LW: Linewidths = Linewidths {
        kappa: 1.0,
        gamma: 2.6,
    };

    fn spec(n: usize, g: f64) -> SystemSpec {
        SystemSpec::uniform(n, g, 0.0, 1.0, 2.6, 0.01)
    }

    #[test]
    fn empty_cavity_hamiltonian() {
        let mut s = spec(0, 0.0);
        s.delta_pc = 0.7;
        let h = build_hamiltonian(&s).unwrap();
        let b = Basis::of(&s);
        let a = b.annihilation();
        let expected = a
            .adjoint()
            .mul(&a)
            .scale(Complex64::from(-0.7))
            .add(&a.add(&a.adjoint()).scale(Complex64::from(0.01)));
        assert!(h.sub(&expected).max_abs() < 1e-15);
        assert_eq!(h.role, OperatorRole::Hamiltonian);
    }

    #[test]
    fn jaynes_cummings_vacuum_splitting() {
        let s = SystemSpec::uniform(1, 1.0, 0.0, 0.0, 0.0, 0.0).with_cutoff(1);
        let h = build_hamiltonian(&s).unwrap().to_dense();
        let b = Basis::of(&s);
        let single = [b.index(1, 0), b.index(0, 1)];
        let block = DMatrix::from_fn(2, 2, |i, j| h[(single[i], single[j])]);
        let mut ev: Vec<f64> = block.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
        assert!(h[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn excitation_number_conserved_without_drive() {
        let s = SystemSpec::uniform(2, 1.3, 0.4, 1.0, 2.6, 0.0);
        let h = build_hamiltonian(&s).unwrap();
        let n = Basis::of(&s).excitation_number();
        assert!(h.commutator(&n).max_abs() < 1e-12);
    }

    #[test]
    fn ladder_algebra() {
        let b = Basis {
            n_atoms: 2,
            cutoff: 3,
        };
        let a = b.annihilation();
        let comm = a.commutator(&a.adjoint()).to_dense();
        for i in 0..b.dim() {
            let below_cutoff = i / 4 < b.cutoff;
            if below_cutoff {
                assert!((comm[(i, i)] - ONE).norm() < 1e-12);
            }
        }
        for k in 0..2 {
            assert_eq!(b.lowering(k).mul(&b.lowering(k)).max_abs(), 0.0);
            let pz = b.raising(k).mul(&b.lowering(k)).sub(&b.sigma_z(k));
            assert!(
                pz.sub(&OperatorMatrix::identity(b.dim()).scale(Complex64::from(0.5)))
                    .max_abs()
                    < 1e-15
            );
        }
        let jm = b.collective_lowering(&[2.0, 2.0]).unwrap();
        let direct = b
            .lowering(0)
            .add(&b.lowering(1))
            .scale(Complex64::from(1.0 / 2f64.sqrt()));
        assert!(jm.sub(&direct).max_abs() < 1e-15);
        assert_eq!(
            b.collective_raising(&[1.0, 1.0]).unwrap().role,
            OperatorRole::CollectiveRaising
        );
        assert!(b.collective_z().is_hermitian(0.0));
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let mut s = spec(3, 2.74);
        s.per_atom_g = vec![2.5, 2.74, 2.9];
        s.per_atom_delta_ca = vec![0.0, -0.2, -0.4];
        s.delta_pc = 1.1;
        assert!(build_hamiltonian(&s).unwrap().is_hermitian(1e-12));
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let s = SystemSpec::uniform(10, 1.0, 0.0, 1.0, 1.0, 0.1);
        assert!(s.validate().is_ok());
        let s = s.with_cutoff(4);
        assert!(matches!(
            build_hamiltonian(&s),
            Err(Error::Resource {
                requested: 5120,
                cap: 4096,
                ..
            })
        ));
        let mut bad = spec(2, 1.0);
        bad.per_atom_delta_ca.pop();
        assert!(build_hamiltonian(&bad).is_err());
    }

    #[test]
    fn liouvillian_matches_operator_form() {
        let mut s = spec(2, 1.7);
        s.per_atom_delta_ca = vec![0.3, -0.2];
        s.delta_pc = 0.4;
        s.eta = 0.3;
        s.photon_cutoff = 2;
        let l = build_liouvillian(&s).unwrap();
        let d = l.dim();
        let rho = DMatrix::from_fn(d, d, |i, j| {
            Complex64::new((i * 7 + j) as f64 % 5.0, (i + 3 * j) as f64 % 4.0)
        });
        let direct = vectorise(&master_equation_rhs(&s, &rho).unwrap());
        let via = DVector::from_vec(l.apply(vectorise(&rho).as_slice()));
        assert!((direct - via).camax() < 1e-12);
        assert!(l.trace_defect() < 1e-10);
        assert_eq!(liouvillian_dense(&l).nrows(), d * d);
        assert!(l.terms().any(|t| t == LiouvillianTerm::AtomicDecay(1)));
    }

    #[test]
    fn vacuum_is_dark_without_drive() {
        let s = SystemSpec::uniform(2, 2.74, 0.0, 1.0, 2.6, 0.0);
        let l = build_liouvillian(&s).unwrap();
        let mut vac = vec![ZERO; l.dim() * l.dim()];
        vac[0] = ONE;
        assert!(l.apply(&vac).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn empty_cavity_coherent_limit() {
        let field = steady_field(&spec(0, 0.0)).unwrap();
        assert!((field - Complex64::new(0.0, -0.01)).norm() < 1e-9);
        let scan = oracle_transmission(&spec(0, 0.0).with_cutoff(3), &[-2.0, -1.0, 0.0, 1.0, 2.0])
            .unwrap();
        assert!((scan.points()[2].1 - 1.0).abs() < 1e-6);
        assert!((scan.points()[1].1 - 0.5).abs() < 1e-3);
        assert!((scan.points()[0].1 - 0.2).abs() < 1e-3);
    }

    #[test]
    fn single_atom_field_matches_closed_form() {
        for dpa in [-4.0, -2.7, -0.5, 0.0, 1.3, 2.7] {
            let field = steady_field(&spec(1, 2.74).at_probe(dpa)).unwrap();
            let analytic =
                steady_state_field(Detunings::from_pa_ca(dpa, 0.0), 2.74, LW, 0.01).unwrap();
            assert!(
                (field - analytic).norm() < 1e-3 * 0.01,
                "{dpa}: {field} vs {analytic}"
            );
        }
    }

    #[test]
    fn single_atom_spectrum_matches_closed_form() {
        let grid: Vec<f64> = (0..=60).map(|i| -15.0 + 0.5 * i as f64).collect();
        let scan = oracle_transmission(&spec(1, 2.74), &grid).unwrap();
        let worst = scan
            .points()
            .iter()
            .map(|&(x, t)| (t - transmission(Detunings::from_pa_ca(x, 0.0), 2.74, LW)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn three_atom_splitting_follows_collective_coupling() {
        let omega = 2.74 * 3f64.sqrt();
        let s = spec(3, 2.74);
        let analytic = transmission_peaks(omega, 0.0, LW, 15.0);
        assert_eq!(analytic.len(), 2);
        let (lo, hi) = (analytic[0].delta_pa, analytic[1].delta_pa);
        let t = |x: f64| oracle_transmission(&s, &[x]).unwrap().points()[0].1;
        let peak = |c: f64| crate::optimize::golden_section_max(&t, c - 0.3, c + 0.3, 1e-4).0;
        let split = peak(hi) - peak(lo);
        assert!((split - (hi - lo)).abs() / (hi - lo) < 0.01, "{split}");
    }

    #[test]
    fn cutoff_convergence() {
        for dpa in [-4.7, 0.0, 2.0] {
            let t = |c: usize| {
                oracle_transmission(&spec(2, 2.74).with_cutoff(c), &[dpa])
                    .unwrap()
                    .points()[0]
                    .1
            };
            assert!((t(2) - t(3)).abs() < 1e-4);
        }
    }

    #[test]
    fn collective_equivalence_for_unequal_couplings() {
        let g = [2.2, 2.74, 3.1];
        let matched = (g.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        let mut inhom = spec(3, 0.0);
        inhom.per_atom_g = g.to_vec();
        let grid = [-5.0, -4.8, -1.0, 0.0, 3.3, 4.8];
        let a = oracle_transmission(&inhom, &grid).unwrap();
        let b = oracle_transmission(&spec(3, matched), &grid).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!((p.1 - q.1).abs() < 1e-3);
        }
    }

    #[test]
    fn detuned_pair_has_unequal_peaks() {
        let mut s = spec(2, 2.74);
        s.per_atom_delta_ca = vec![0.0, -0.4];
        let grid: Vec<f64> = (0..=300).map(|i| -6.0 + 0.04 * i as f64).collect();
        let scan = oracle_transmission(&s, &grid).unwrap();
        let (neg, pos): (Vec<_>, Vec<_>) = scan.points().iter().partition(|p| p.0 < 0.0);
        let hmax = |v: &[&(f64, f64)]| v.iter().map(|p| p.1).fold(0.0, f64::max);
        assert!((hmax(&neg) - hmax(&pos)).abs() > 1e-3);
    }

    #[test]
    fn degenerate_kernel_is_reported() {
        let s = SystemSpec::uniform(1, 1.0, 0.0, 0.0, 0.0, 0.0).with_cutoff(1);
        let l = build_liouvillian(&s).unwrap();
        assert!(matches!(steady_state(&l), Err(Error::Ambiguous(_))));
    }

    #[test]
    fn propagation_cross_check() {
        let mut s = spec(1, 2.74).at_probe(1.0);
        s.photon_cutoff = 2;
        let l = build_liouvillian(&s).unwrap();
        let direct = steady_state(&l).unwrap();
        let prop = steady_state_by_propagation(&l, PropagationOptions::default()).unwrap();
        assert!(
            (&direct.rho - &prop.rho)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
                < 1e-8
        );
        let short = PropagationOptions {
            max_time: 0.05,
            ..Default::default()
        };
        assert!(matches!(
            steady_state_by_propagation(&l, short),
            Err(Error::Convergence(_))
        ));
        let blowup = PropagationOptions {
            dt: 5.0,
            max_time: 5000.0,
            tol: 1e-12,
        };
        assert!(matches!(
            steady_state_by_propagation(&l, blowup),
            Err(Error::Convergence(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn steady_states_are_physical(
            n in 0usize..3,
            g in 0.1f64..4.0,
            dca in -1.0f64..1.0,
            dpc in -6.0f64..6.0,
            kappa in 0.2f64..3.0,
            gamma in 0.2f64..3.0,
            eta in 0.01f64..1.0,
        ) {
            let mut s = SystemSpec::uniform(n, g, dca, kappa, gamma, eta).with_cutoff(3);
            s.delta_pc = dpc;
            let rho = steady_state(&build_liouvillian(&s).unwrap()).unwrap();
            prop_assert!((rho.trace() - ONE).norm() < 1e-10);
            prop_assert!(rho.purity() <= 1.0 + 1e-10);
            prop_assert!(rho.min_eigenvalue() >= -1e-9);
            prop_assert!(rho.hermiticity_defect() < 1e-9);
        }
    }
}

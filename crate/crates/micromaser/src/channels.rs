//! Quantum channels and generators acting on the cavity: two-photon Kraus maps,
//! loss, mixed and thermal atoms, decay during flight and beam spread.
//!
//! Superoperators act on column-stacked density matrices, so `vec(AρB) = (Bᵀ⊗A)vec(ρ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, parity_op, FockDim};
use crate::linalg::{self, c, c64, r, CMat, I, ONE, ZERO};

/// Normalized atom state `c_g|g⟩ + c_e|e⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AtomState {
    pub c_g: c64,
    pub c_e: c64,
}

impl AtomState {
    pub fn new(c_g: c64, c_e: c64) -> Result<Self> {
        let norm = c_g.norm_sqr() + c_e.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "atom state not normalized: |c_g|^2+|c_e|^2 = {norm}"
            )));
        }
        Ok(AtomState { c_g, c_e })
    }

    /// Real amplitudes with `c_g = √(1 − c_e²)`.
    pub fn from_excited(c_e: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c_e.abs()) {
            return Err(Error::InvalidArgument(format!("|c_e| = {c_e} exceeds 1")));
        }
        Ok(AtomState {
            c_g: r((1.0 - c_e * c_e).max(0.0).sqrt()),
            c_e: r(c_e),
        })
    }

    pub fn ground() -> Self {
        AtomState { c_g: ONE, c_e: ZERO }
    }

    pub fn excited() -> Self {
        AtomState { c_g: ZERO, c_e: ONE }
    }

    /// The orthogonal state `c_e*|g⟩ − c_g*|e⟩`.
    pub fn orthogonal(&self) -> Self {
        AtomState {
            c_g: self.c_e.conj(),
            c_e: -self.c_g.conj(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingSpec {
    pub phi: f64,
    pub nu: f64,
    pub tau: f64,
}

impl CouplingSpec {
    pub fn new(phi: f64, nu: f64, tau: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument(format!("nu must be > 0, got {nu}")));
        }
        if !(tau >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
        }
        Ok(CouplingSpec { phi, nu, tau })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct NoiseSpec {
    pub kappa: f64,
    pub n_th: f64,
}

impl NoiseSpec {
    pub fn new(kappa: f64, n_th: f64) -> Result<Self> {
        if kappa < 0.0 || n_th < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise rates must be non-negative (kappa={kappa}, n_th={n_th})"
            )));
        }
        Ok(NoiseSpec { kappa, n_th })
    }
}

fn c64_pairs(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Labeled Kraus operators.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub ops: Vec<CMat>,
    pub labels: Vec<String>,
}

impl KrausSet {
    pub fn new(ops: Vec<CMat>, labels: Vec<String>) -> Self {
        assert_eq!(ops.len(), labels.len());
        KrausSet { ops, labels }
    }

    pub fn dim(&self) -> usize {
        self.ops[0].nrows()
    }

    pub fn get(&self, label: &str) -> Option<&CMat> {
        self.labels.iter().position(|l| l == label).map(|i| &self.ops[i])
    }

    /// `max |Σ M†M − I|`.
    pub fn completeness_residual(&self) -> f64 {
        let n = self.dim();
        let mut s = linalg::zeros(n, n);
        for m in &self.ops {
            s += m.adjoint() * m;
        }
        s -= linalg::identity(n);
        linalg::norm_max(&s)
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let n = self.dim();
        let mut out = linalg::zeros(n, n);
        for m in &self.ops {
            out += m * rho * m.adjoint();
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let ops: Vec<_> = self
            .labels
            .iter()
            .zip(&self.ops)
            .map(|(l, m)| serde_json::json!({ "label": l, "entries": c64_pairs(m) }))
            .collect();
        serde_json::json!({ "dim": self.dim(), "operators": ops })
    }
}

/// Linear map on column-stacked `n×n` matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    pub matrix: CMat,
    pub n: usize,
}

impl Superoperator {
    pub fn new(matrix: CMat) -> Self {
        let n = (matrix.nrows() as f64).sqrt().round() as usize;
        assert_eq!(n * n, matrix.nrows());
        Superoperator { matrix, n }
    }

    pub fn identity(n: usize) -> Self {
        Superoperator { matrix: linalg::identity(n * n), n }
    }

    pub fn zero(n: usize) -> Self {
        Superoperator { matrix: linalg::zeros(n * n, n * n), n }
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        linalg::apply_super(&self.matrix, rho)
    }

    pub fn add(&self, other: &Superoperator) -> Superoperator {
        Superoperator { matrix: &self.matrix + &other.matrix, n: self.n }
    }

    pub fn sub(&self, other: &Superoperator) -> Superoperator {
        Superoperator { matrix: &self.matrix - &other.matrix, n: self.n }
    }

    pub fn scaled(&self, s: f64) -> Superoperator {
        Superoperator { matrix: linalg::scale(r(s), &self.matrix), n: self.n }
    }

    /// Trace functional composed with the map, minus `target` times the trace:
    /// zero for a trace-preserving map (`target = 1`) or generator (`target = 0`).
    pub fn trace_residual(&self, target: f64) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for col in 0..n * n {
            let mut s = ZERO;
            for i in 0..n {
                s += self.matrix[(i + n * i, col)];
            }
            let expected = if col % (n + 1) == 0 { target } else { 0.0 };
            worst = worst.max((s - r(expected)).norm());
        }
        worst
    }

    /// Adjoint action on an observable: `Tr(X·S(ρ)) = Tr(S†(X)·ρ)`.
    pub fn adjoint_apply(&self, x: &CMat) -> CMat {
        let xd = linalg::dagger(x);
        linalg::dagger(&linalg::apply_super(&self.matrix.adjoint().to_owned(), &xd))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "n": self.n, "entries": c64_pairs(&self.matrix) })
    }
}

/// `sin(φ√((n+1)(n+2)))`.
pub fn sin_n(phi: f64, n: usize) -> f64 {
    (phi * (((n + 1) * (n + 2)) as f64).sqrt()).sin()
}

/// `cos(φ√((n+1)(n+2)))`.
pub fn cos_n(phi: f64, n: usize) -> f64 {
    (phi * (((n + 1) * (n + 2)) as f64).sqrt()).cos()
}

/// Two-photon Kraus pair for the atom state `(cg, ce)`. The pair `|n⟩ ↔ |n+2⟩` is
/// only kept while `n+2` lies inside the truncation; above it the dynamics is
/// frozen as if by a wall with `cos = +1`, which keeps the set exactly complete.
fn two_photon_pair(cg: c64, ce: c64, phi: f64, n: usize) -> (CMat, CMat) {
    let mut mg = linalg::zeros(n, n);
    let mut me = linalg::zeros(n, n);
    for k in 0..n {
        let cg_k = if k >= 2 { cos_n(phi, k - 2) } else { 1.0 };
        mg[(k, k)] = cg * cg_k;
        let ce_k = if k + 2 < n { cos_n(phi, k) } else { 1.0 };
        me[(k, k)] = ce * ce_k;
        if k + 2 < n {
            let s = sin_n(phi, k);
            mg[(k + 2, k)] = -I * ce * s;
            me[(k, k + 2)] = -I * cg * s;
        }
    }
    (mg, me)
}

/// Kraus operators `M_g`, `M_e` of one atom passage with integrated coupling `phi`.
pub fn kraus_two_photon(atom: AtomState, phi: f64, dim: FockDim) -> KrausSet {
    let (mg, me) = two_photon_pair(atom.c_g, atom.c_e, phi, dim.n());
    KrausSet::new(vec![mg, me], vec!["g".into(), "e".into()])
}

/// `M̃_g = M_g − c_g I`, `M̃_e = M_e + c_e I`.
pub fn shifted_kraus(kraus: &KrausSet, atom: AtomState) -> Result<KrausSet> {
    let (mg, me) = match (kraus.get("g"), kraus.get("e")) {
        (Some(g), Some(e)) => (g, e),
        _ => {
            return Err(Error::InvalidArgument(
                "shifted_kraus needs a two-photon set labeled g/e".into(),
            ))
        }
    };
    let id = linalg::identity(kraus.dim());
    let sg = mg - linalg::scale(atom.c_g, &id);
    let se = me + linalg::scale(atom.c_e, &id);
    Ok(KrausSet::new(vec![sg, se], vec!["g".into(), "e".into()]))
}

/// `ρ ↦ Σ M ρ M†`.
pub fn discrete_map(kraus: &KrausSet) -> Superoperator {
    let n = kraus.dim();
    let mut s = linalg::zeros(n * n, n * n);
    for m in &kraus.ops {
        s += linalg::conjugation(m);
    }
    Superoperator { matrix: s, n }
}

/// `L₀ = ν(M₀ − I)`.
pub fn generator_l0(kraus: &KrausSet, nu: f64) -> Superoperator {
    let n = kraus.dim();
    let mut m = discrete_map(kraus).matrix;
    m -= linalg::identity(n * n);
    Superoperator { matrix: linalg::scale(r(nu), &m), n }
}

/// `rate · Σ D[M]` for the given jump operators.
pub fn lindblad_from_jumps(jumps: &KrausSet, rate: f64) -> Superoperator {
    let n = jumps.dim();
    let mut s = linalg::zeros(n * n, n * n);
    for m in &jumps.ops {
        s += linalg::dissipator(m);
    }
    Superoperator { matrix: linalg::scale(r(rate), &s), n }
}

/// `κ(n_th+1) D[a] + κ n_th D[a†]`.
pub fn loss_dissipator(kappa: f64, n_th: f64, dim: FockDim) -> Superoperator {
    let a = annihilation_op(dim).mat;
    let mut s = linalg::scale(r(kappa * (n_th + 1.0)), &linalg::dissipator(&a));
    if n_th > 0.0 {
        s += linalg::scale(r(kappa * n_th), &linalg::dissipator(&linalg::dagger(&a)));
    }
    Superoperator { matrix: s, n: dim.n() }
}

/// `ρ ↦ PρP`.
pub fn parity_conjugation(dim: FockDim) -> Superoperator {
    Superoperator {
        matrix: linalg::conjugation(&parity_op(dim).mat),
        n: dim.n(),
    }
}

/// Atom prepared in the mixture `p_a|ψ_a⟩⟨ψ_a| + p_b|ψ_b⟩⟨ψ_b| + Σ p_j|j⟩⟨j|` over
/// the coupled pair, the uncoupled levels 0, 2, 4 and an auxiliary level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedAtomSpec {
    pub p_a: f64,
    pub p_b: f64,
    pub p_0: f64,
    pub p_2: f64,
    pub p_4: f64,
    pub p_aux: f64,
    pub atom: AtomState,
}

impl MixedAtomSpec {
    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_a, self.p_b, self.p_0, self.p_2, self.p_4, self.p_aux];
        if ps.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument("negative atom population".into()));
        }
        let total: f64 = ps.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "atom populations sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn pure(atom: AtomState) -> Self {
        MixedAtomSpec { p_a: 1.0, p_b: 0.0, p_0: 0.0, p_2: 0.0, p_4: 0.0, p_aux: 0.0, atom }
    }
}

/// Stark phases `(|g₂|²τ/Δ, |g₃|²τ/Δ)` picked up by atoms in the uncoupled levels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StarkPhases {
    pub theta2: f64,
    pub theta3: f64,
}

/// Diagonal phase operators `M₀`, `M₂`, `M₄` for atoms in levels 0, 2, 4.
fn stark_phase_ops(phases: StarkPhases, n: usize) -> [CMat; 3] {
    let d = |f: &dyn Fn(f64) -> f64| {
        let v: Vec<c64> = (0..n).map(|k| c64::from_polar(1.0, f(k as f64))).collect();
        linalg::diag(&v)
    };
    let (t2, t3) = (phases.theta2, phases.theta3);
    [
        d(&|k| t2 * k),
        d(&|k| -(t2 + t3) * (k + 1.0)),
        d(&|k| t3 * (k + 1.0)),
    ]
}

fn push_weighted(ops: &mut Vec<CMat>, labels: &mut Vec<String>, p: f64, m: CMat, label: &str) {
    if p > 0.0 {
        ops.push(linalg::scale(r(p.sqrt()), &m));
        labels.push(label.to_string());
    }
}

/// Kraus set of a mixed atom. Operators with zero weight are dropped.
pub fn kraus_mixed_atom(
    spec: &MixedAtomSpec,
    phi: f64,
    phases: StarkPhases,
    dim: FockDim,
) -> Result<KrausSet> {
    spec.validate()?;
    let n = dim.n();
    let a = spec.atom;
    let b = a.orthogonal();
    let (mga, mea) = two_photon_pair(a.c_g, a.c_e, phi, n);
    let (mgb, meb) = two_photon_pair(b.c_g, b.c_e, phi, n);
    let [m0, m2, m4] = stark_phase_ops(phases, n);
    let mut ops = Vec::new();
    let mut labels = Vec::new();
    push_weighted(&mut ops, &mut labels, spec.p_a, mga, "ga");
    push_weighted(&mut ops, &mut labels, spec.p_a, mea, "ea");
    push_weighted(&mut ops, &mut labels, spec.p_b, mgb, "gb");
    push_weighted(&mut ops, &mut labels, spec.p_b, meb, "eb");
    push_weighted(&mut ops, &mut labels, spec.p_0, m0, "0");
    push_weighted(&mut ops, &mut labels, spec.p_2, m2, "2");
    push_weighted(&mut ops, &mut labels, spec.p_4, m4, "4");
    push_weighted(&mut ops, &mut labels, spec.p_aux, linalg::identity(n), "a");
    Ok(KrausSet::new(ops, labels))
}

/// Incoherent atom populations over levels `0, 1, 2, 3, 4, a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalAtomSpec {
    pub p: [f64; 6],
}

impl ThermalAtomSpec {
    pub fn new(p: [f64; 6]) -> Result<Self> {
        if p.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidArgument("negative atom population".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "atom populations sum to {total}, expected 1"
            )));
        }
        Ok(ThermalAtomSpec { p })
    }

    /// Boltzmann populations `∝ exp(−E_j / kT)`.
    pub fn from_temperature(energies: [f64; 6], kt: f64) -> Result<Self> {
        if !(kt > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {kt}")));
        }
        let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = energies.iter().map(|e| (-(e - e0) / kt).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut p = [0.0; 6];
        for (pj, wj) in p.iter_mut().zip(&w) {
            *pj = wj / z;
        }
        Ok(ThermalAtomSpec { p })
    }

    pub fn p1(&self) -> f64 {
        self.p[1]
    }

    pub fn p3(&self) -> f64 {
        self.p[3]
    }
}

/// Kraus set for an incoherent atom: `M_gg, M_eg` weighted by `√p₁`, `M_ge, M_ee`
/// by `√p₃`, and the phase operators of the uncoupled levels.
pub fn kraus_thermal_atom(
    spec: &ThermalAtomSpec,
    phi: f64,
    phases: StarkPhases,
    dim: FockDim,
) -> KrausSet {
    let n = dim.n();
    let (mgg, meg) = two_photon_pair(ONE, ZERO, phi, n);
    let (mge, mee) = two_photon_pair(ZERO, ONE, phi, n);
    let [m0, m2, m4] = stark_phase_ops(phases, n);
    let p = spec.p;
    let mut ops = Vec::new();
    let mut labels = Vec::new();
    push_weighted(&mut ops, &mut labels, p[1], mgg, "gg");
    push_weighted(&mut ops, &mut labels, p[1], meg, "eg");
    push_weighted(&mut ops, &mut labels, p[3], mge, "ge");
    push_weighted(&mut ops, &mut labels, p[3], mee, "ee");
    push_weighted(&mut ops, &mut labels, p[0], m0, "0");
    push_weighted(&mut ops, &mut labels, p[2], m2, "2");
    push_weighted(&mut ops, &mut labels, p[4], m4, "4");
    push_weighted(&mut ops, &mut labels, p[5], linalg::identity(n), "a");
    KrausSet::new(ops, labels)
}

/// Rates of the weak-coupling master equation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WeakCouplingRates {
    /// Two-photon drive `g₂ph`.
    pub drive: c64,
    /// Two-photon loss `κ₂ph`.
    pub loss: f64,
    /// Two-photon injection `γ₂ph`.
    pub gain: f64,
    /// Photon-number Hamiltonian `ω₀`.
    pub omega0: f64,
    /// Number dephasing `γ₀`.
    pub dephasing: f64,
}

impl WeakCouplingRates {
    pub fn pure(atom: AtomState, phi: f64, nu: f64) -> Self {
        WeakCouplingRates {
            drive: atom.c_g.conj() * atom.c_e * (nu * phi),
            loss: nu * atom.c_g.norm_sqr() * phi * phi,
            ..Default::default()
        }
    }

    pub fn mixed(spec: &MixedAtomSpec, phi: f64, phases: StarkPhases, nu: f64) -> Self {
        let a = spec.atom;
        let (f2, f3) = (phases.theta2, phases.theta3);
        WeakCouplingRates {
            drive: a.c_g.conj() * a.c_e * (nu * (spec.p_a - spec.p_b) * phi),
            loss: nu * spec.p_a * a.c_g.norm_sqr() * phi * phi,
            gain: nu * spec.p_b * a.c_g.norm_sqr() * phi * phi,
            omega0: nu * (f2 * (spec.p_0 - spec.p_2) + f3 * (spec.p_4 - spec.p_2)),
            dephasing: nu
                * (spec.p_0 * f2 * f2 + spec.p_2 * (f2 + f3).powi(2) + spec.p_4 * f3 * f3),
        }
    }

    /// `−i[g* a² + g a†² + ω₀ n, ·] + κ D[a²] + γ D[a†²] + γ₀ D[n]`.
    pub fn generator(&self, dim: FockDim) -> Superoperator {
        let a = annihilation_op(dim).mat;
        let ad = linalg::dagger(&a);
        let a2 = &a * &a;
        let ad2 = &ad * &ad;
        let num = &ad * &a;
        let h = linalg::scale(self.drive.conj(), &a2)
            + linalg::scale(self.drive, &ad2)
            + linalg::scale(r(self.omega0), &num);
        let mut s = linalg::hamiltonian_super(&h);
        if self.loss != 0.0 {
            s += linalg::scale(r(self.loss), &linalg::dissipator(&a2));
        }
        if self.gain != 0.0 {
            s += linalg::scale(r(self.gain), &linalg::dissipator(&ad2));
        }
        if self.dephasing != 0.0 {
            s += linalg::scale(r(self.dephasing), &linalg::dissipator(&num));
        }
        Superoperator { matrix: s, n: dim.n() }
    }
}

/// Two-photon drive and two-photon loss generator of the weak-coupling limit.
pub fn weak_coupling_generator(atom: AtomState, phi: f64, nu: f64, dim: FockDim) -> Superoperator {
    if phi.abs() * dim.n() as f64 > 1.0 {
        log::warn!(
            "weak-coupling generator used outside its regime (|phi|*n_max = {:.3})",
            phi.abs() * dim.n() as f64
        );
    }
    WeakCouplingRates::pure(atom, phi, nu).generator(dim)
}

/// Weak-coupling generator for a mixed atom, including two-photon gain and
/// photon-number dephasing.
pub fn weak_coupling_generator_mixed(
    spec: &MixedAtomSpec,
    phi: f64,
    phases: StarkPhases,
    nu: f64,
    dim: FockDim,
) -> Result<Superoperator> {
    spec.validate()?;
    Ok(WeakCouplingRates::mixed(spec, phi, phases, nu).generator(dim))
}

/// Nodes and weights of Gauss–Hermite quadrature for `∫ e^{−x²} f(x) dx`.
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let jac = CMat::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            r((i.max(j) as f64 / 2.0).sqrt())
        } else {
            ZERO
        }
    });
    let (x, v) = linalg::eigh(&jac)?;
    let w = (0..order)
        .map(|k| std::f64::consts::PI.sqrt() * v[(0, k)].norm_sqr())
        .collect();
    Ok((x, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BeamScheme {
    GaussQuadrature { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for BeamScheme {
    fn default() -> Self {
        BeamScheme::GaussQuadrature { order: 21 }
    }
}

fn gauss_beam_map(atom: AtomState, phi_mean: f64, sigma: f64, order: usize, dim: FockDim) -> Result<CMat> {
    let (x, w) = gauss_hermite(order)?;
    let n = dim.n();
    let mut acc = linalg::zeros(n * n, n * n);
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let phi = phi_mean + std::f64::consts::SQRT_2 * sigma * xi;
        if phi <= 0.0 {
            continue;
        }
        total += wi;
        acc += linalg::scale(r(*wi), &discrete_map(&kraus_two_photon(atom, phi, dim)).matrix);
    }
    if total <= 0.0 {
        return Err(Error::Convergence("no quadrature node with phi > 0".into()));
    }
    Ok(linalg::scale(r(1.0 / total), &acc))
}

/// Draws `φ ~ N(φ̄, σ)` conditioned on `φ > 0`.
pub struct BeamSampler {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl BeamSampler {
    pub fn new(phi_mean: f64, sigma: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(phi_mean, sigma)
            .map_err(|e| Error::InvalidArgument(format!("beam distribution: {e}")))?;
        if phi_mean <= 0.0 && sigma == 0.0 {
            return Err(Error::InvalidArgument("beam mean must be > 0".into()));
        }
        Ok(BeamSampler { rng: ChaCha8Rng::seed_from_u64(seed), normal })
    }

    pub fn sample(&mut self) -> f64 {
        loop {
            let phi = self.normal.sample(&mut self.rng);
            if phi > 0.0 {
                return phi;
            }
        }
    }
}

/// Single-atom map averaged over a Gaussian spread of couplings truncated to `φ > 0`.
pub fn beam_averaged_map(
    atom: AtomState,
    phi_mean: f64,
    phi_sigma: f64,
    dim: FockDim,
    scheme: BeamScheme,
) -> Result<Superoperator> {
    if phi_sigma < 0.0 {
        return Err(Error::InvalidArgument(format!("phi_sigma must be >= 0, got {phi_sigma}")));
    }
    let n = dim.n();
    if phi_sigma == 0.0 {
        return Ok(discrete_map(&kraus_two_photon(atom, phi_mean, dim)));
    }
    let matrix = match scheme {
        BeamScheme::GaussQuadrature { order } => {
            let m1 = gauss_beam_map(atom, phi_mean, phi_sigma, order, dim)?;
            let m2 = gauss_beam_map(atom, phi_mean, phi_sigma, 2 * order, dim)?;
            let diff = linalg::norm_max(&(&m1 - &m2));
            if diff > 1e-8 {
                return Err(Error::Convergence(format!(
                    "beam quadrature of order {order} changes by {diff:.3e} when doubled"
                )));
            }
            m2
        }
        BeamScheme::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidArgument("monte-carlo needs samples > 0".into()));
            }
            let mut sampler = BeamSampler::new(phi_mean, phi_sigma, seed)?;
            let mut acc = linalg::zeros(n * n, n * n);
            for _ in 0..samples {
                let phi = sampler.sample();
                acc += discrete_map(&kraus_two_photon(atom, phi, dim)).matrix;
            }
            linalg::scale(r(1.0 / samples as f64), &acc)
        }
    };
    Ok(Superoperator { matrix, n })
}

/// Decay rates of the coupled levels towards levels that no longer couple to the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DecayRates {
    pub gamma1: f64,
    pub gamma3: f64,
}

#[derive(Debug, Clone)]
pub struct DecayMap {
    pub map: Superoperator,
    /// `ν̄/ν`, the fraction of atoms still in the coupled levels on arrival.
    pub rate_factor: f64,
    /// Atom state conditioned on no decay before the cavity.
    pub effective_atom: AtomState,
}

/// Damped Kraus kernels `M̄_g(t)`, `M̄_e(t)` of the non-Hermitian effective evolution.
pub fn damped_kraus(atom: AtomState, lambda: f64, t: f64, decay: DecayRates, dim: FockDim) -> (CMat, CMat) {
    let n = dim.n();
    let (g1, g3) = (decay.gamma1, decay.gamma3);
    let mut mg = linalg::zeros(n, n);
    let mut me = linalg::zeros(n, n);
    let dg = (-g1 * t / 2.0).exp();
    let de = (-g3 * t / 2.0).exp();
    for k in 0..n.min(2) {
        mg[(k, k)] = atom.c_g * dg;
    }
    for m in 0..n {
        if m + 2 >= n {
            me[(m, m)] = atom.c_e * de;
            continue;
        }
        // basis (|g, m+2⟩, |e, m⟩)
        let s = lambda * (((m + 1) * (m + 2)) as f64).sqrt();
        let h = CMat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(0.0, -g1 / 2.0),
            (1, 1) => c(0.0, -g3 / 2.0),
            _ => r(s),
        });
        let u = linalg::expm(&linalg::scale(c(0.0, -t), &h));
        mg[(m + 2, m + 2)] = atom.c_g * u[(0, 0)];
        mg[(m + 2, m)] = atom.c_e * u[(0, 1)];
        me[(m, m + 2)] = atom.c_g * u[(1, 0)];
        me[(m, m)] = atom.c_e * u[(1, 1)];
    }
    (mg, me)
}

/// Adaptive Simpson integration of a matrix-valued function, error measured in max-norm.
pub fn adaptive_simpson<F: Fn(f64) -> CMat>(f: &F, a: f64, b: f64, tol: f64) -> Result<CMat> {
    fn recurse<F: Fn(f64) -> CMat>(
        f: &F,
        a: f64,
        b: f64,
        fa: &CMat,
        fm: &CMat,
        fb: &CMat,
        whole: &CMat,
        tol: f64,
        depth: u32,
    ) -> Result<CMat> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let flm = f(lm);
        let frm = f(rm);
        let h = (b - a) / 12.0;
        let left = linalg::scale(r(h), &(fa + linalg::scale(r(4.0), &flm) + fm));
        let right = linalg::scale(r(h), &(fm + linalg::scale(r(4.0), &frm) + fb));
        let sum = &left + &right;
        let err = linalg::norm_max(&(&sum - whole));
        if err <= 15.0 * tol {
            return Ok(&sum + linalg::scale(r(1.0 / 15.0), &(&sum - whole)));
        }
        if depth == 0 {
            return Err(Error::Convergence(format!(
                "adaptive Simpson did not reach {tol:.1e} on [{a}, {b}]"
            )));
        }
        let l = recurse(f, a, m, fa, &flm, fm, &left, tol / 2.0, depth - 1)?;
        let rr = recurse(f, m, b, fm, &frm, fb, &right, tol / 2.0, depth - 1)?;
        Ok(l + rr)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = linalg::scale(r((b - a) / 6.0), &(&fa + linalg::scale(r(4.0), &fm) + &fb));
    recurse(f, a, b, &fa, &fm, &fb, &whole, tol, 40)
}

/// Single-atom map when the coupled levels decay, during preparation time `t_prep`
/// and during the interaction, to levels that do not couple to the cavity.
pub fn decay_modified_map(
    atom: AtomState,
    lambda: f64,
    tau: f64,
    decay: DecayRates,
    t_prep: f64,
    dim: FockDim,
) -> Result<DecayMap> {
    if decay.gamma1 < 0.0 || decay.gamma3 < 0.0 || tau < 0.0 || t_prep < 0.0 {
        return Err(Error::InvalidArgument("decay rates and times must be >= 0".into()));
    }
    let wg = (-decay.gamma1 * t_prep).exp() * atom.c_g.norm_sqr();
    let we = (-decay.gamma3 * t_prep).exp() * atom.c_e.norm_sqr();
    let rate_factor = wg + we;
    if rate_factor <= 0.0 {
        return Err(Error::Degenerate("no atom survives preparation".into()));
    }
    let norm = rate_factor.sqrt();
    let eff = AtomState {
        c_g: atom.c_g * ((-decay.gamma1 * t_prep / 2.0).exp() / norm),
        c_e: atom.c_e * ((-decay.gamma3 * t_prep / 2.0).exp() / norm),
    };
    let n = dim.n();
    let (mg, me) = damped_kraus(eff, lambda, tau, decay, dim);
    let mut s = linalg::conjugation(&mg) + linalg::conjugation(&me);
    if (decay.gamma1 > 0.0 || decay.gamma3 > 0.0) && tau > 0.0 {
        let integrand = |t: f64| {
            let (g, e) = damped_kraus(eff, lambda, t, decay, dim);
            linalg::scale(r(decay.gamma1), &linalg::conjugation(&g))
                + linalg::scale(r(decay.gamma3), &linalg::conjugation(&e))
        };
        s += adaptive_simpson(&integrand, 0.0, tau, 1e-10)?;
    }
    Ok(DecayMap {
        map: Superoperator { matrix: s, n },
        rate_factor,
        effective_atom: eff,
    })
}

//! Stationary states: pure recurrence states, the conserved coherence of the
//! decoherence-free subspace, trapping states, states between walls and the
//! thermal-atom steady state.

use serde::Serialize;

use crate::channels::{
    cos_n, generator_l0, kraus_two_photon, sin_n, AtomState, KrausSet, Superoperator,
    ThermalAtomSpec,
};
use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockDim, Ket, TAIL_TOL};
use crate::linalg::{self, c64, CMat, I, ONE, ZERO};
use crate::walls::hard_walls_below;

/// `|sin_n(φ)|` below this marks an exact wall.
pub const WALL_TOL: f64 = 1e-12;

/// Even and odd pure stationary states for one atom state and coupling.
#[derive(Debug, Clone)]
pub struct StationaryPair {
    pub psi_plus: Ket,
    pub psi_minus: Ket,
    pub atom: AtomState,
    pub phi: f64,
    /// Highest occupied index of each state (a wall position or `n_max − 1`).
    pub support_plus: usize,
    pub support_minus: usize,
}

impl StationaryPair {
    pub fn support_bound(&self) -> usize {
        self.support_plus.max(self.support_minus)
    }

    pub fn dim(&self) -> usize {
        self.psi_plus.dim()
    }

    /// `(|Ψ+⟩⟨Ψ+|, |Ψ−⟩⟨Ψ−|, |Ψ+⟩⟨Ψ−|, |Ψ−⟩⟨Ψ+|)`.
    pub fn dfs_basis(&self) -> [CMat; 4] {
        let p = &self.psi_plus.amps;
        let m = &self.psi_minus.amps;
        [
            linalg::outer(p, p),
            linalg::outer(m, m),
            linalg::outer(p, m),
            linalg::outer(m, p),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryEigenvalues {
    pub alpha: c64,
    pub beta: c64,
}

/// Coefficients of the recurrence started at index `start` with eigenvalue sign
/// `s = α/c_g`, stopped at the first exact wall or at `len`.
fn recurrence(atom: AtomState, phi: f64, start: usize, sign: f64, len: usize) -> Result<(Vec<c64>, usize)> {
    let ratio = atom.c_e / atom.c_g;
    let mut amps = vec![ZERO; len];
    amps[start] = ONE;
    let mut n = start;
    while n + 2 < len {
        let s = sin_n(phi, n);
        if s.abs() < WALL_TOL {
            return Ok((amps, n));
        }
        let den = sign - cos_n(phi, n);
        if den.abs() < 1e-13 {
            return Err(Error::Degenerate(format!(
                "recurrence denominator vanishes at n={n} without a wall"
            )));
        }
        amps[n + 2] = -I * ratio * (s / den) * amps[n];
        if !amps[n + 2].norm().is_finite() {
            return Err(Error::Numerical(format!("recurrence overflow at n={}", n + 2)));
        }
        n += 2;
    }
    Ok((amps, n))
}

fn first_nonzero_phase(amps: &mut [c64]) {
    if let Some(z) = amps.iter().find(|z| z.norm() > 0.0).copied() {
        let ph = z.conj() / z.norm();
        for a in amps.iter_mut() {
            *a *= ph;
        }
    }
}

/// Recurrence state supported on `[start, wall]` (or up to `n_max − 1`, with the
/// tail beyond the truncation checked by continuing the recurrence).
pub fn recurrence_state(atom: AtomState, phi: f64, start: usize, sign: f64, dim: FockDim) -> Result<(Ket, usize)> {
    if atom.c_g.norm() == 0.0 {
        return Err(Error::Degenerate("c_g = 0: use trapping_state".into()));
    }
    let n = dim.n();
    if start >= n {
        return Err(Error::InvalidArgument(format!("start index {start} outside n_max={n}")));
    }
    let ext = (2 * n).max(n + 200);
    let (mut amps, stop) = recurrence(atom, phi, start, sign, ext)?;
    let total: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    if !total.is_finite() {
        return Err(Error::Truncation { tail: f64::INFINITY, n_max: n });
    }
    let tail: f64 = amps[n..].iter().map(|z| z.norm_sqr()).sum::<f64>() / total;
    if tail > TAIL_TOL {
        return Err(Error::Truncation { tail, n_max: n });
    }
    amps.truncate(n);
    first_nonzero_phase(&mut amps);
    let ket = Ket::from_amps(&amps).normalized()?;
    Ok((ket, stop.min(n - 1)))
}

/// Pure stationary state of one parity (`0` even, `1` odd) connected to `|0⟩` or `|1⟩`,
/// with the index of its last occupied level.
pub fn parity_stationary(atom: AtomState, phi: f64, parity: usize, dim: FockDim) -> Result<(Ket, usize)> {
    let (ket, stop) = recurrence_state(atom, phi, parity % 2, 1.0, dim)?;
    // A first wall with cos = +1 admits no vacuum-connected pure state.
    if sin_n(phi, stop).abs() < WALL_TOL && cos_n(phi, stop) > 0.0 && atom.c_e.norm() > 0.0 {
        return Err(Error::NotStationary { residual: 2.0 * atom.c_e.norm() });
    }
    Ok((ket, stop))
}

/// Even and odd pure stationary states connected to `|0⟩` and `|1⟩`.
pub fn pure_stationary(atom: AtomState, phi: f64, dim: FockDim) -> Result<StationaryPair> {
    let (plus, sp) = parity_stationary(atom, phi, 0, dim)?;
    let (minus, sm) = parity_stationary(atom, phi, 1, dim)?;
    Ok(StationaryPair {
        psi_plus: plus,
        psi_minus: minus,
        atom,
        phi,
        support_plus: sp,
        support_minus: sm,
    })
}

/// Eigenvalues of `M_g` and `M_e` on a ket, with the eigen-residual checked.
pub fn verify_ket(psi: &Ket, kraus: &KrausSet) -> Result<BoundaryEigenvalues> {
    let (mg, me) = match (kraus.get("g"), kraus.get("e")) {
        (Some(g), Some(e)) => (g, e),
        _ => return Err(Error::InvalidArgument("expected a two-photon Kraus set".into())),
    };
    let v = &psi.amps;
    let mut out = [ZERO; 2];
    let mut worst = 0.0f64;
    for (i, m) in [mg, me].into_iter().enumerate() {
        let w = m * v;
        let ev = linalg::inner(v, &w);
        let res = (0..v.nrows())
            .map(|k| (w[k] - ev * v[k]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(res);
        out[i] = ev;
    }
    if worst > 1e-8 {
        return Err(Error::NotStationary { residual: worst });
    }
    Ok(BoundaryEigenvalues { alpha: out[0], beta: out[1] })
}

/// Eigenvalue pairs of both states of `pair`.
pub fn verify_eigenstate(pair: &StationaryPair, kraus: &KrausSet) -> Result<[BoundaryEigenvalues; 2]> {
    Ok([verify_ket(&pair.psi_plus, kraus)?, verify_ket(&pair.psi_minus, kraus)?])
}

/// Left conserved quantities dual to the decoherence-free basis: `Tr(X·ρ)` of each
/// field extracts the weight of the matching basis element.
#[derive(Debug, Clone)]
pub struct ConservedCoherence {
    pub one_plus: CMat,
    pub one_minus: CMat,
    pub l_pm: CMat,
    pub l_mp: CMat,
}

impl ConservedCoherence {
    pub fn functionals(&self) -> [&CMat; 4] {
        [&self.one_plus, &self.one_minus, &self.l_pm, &self.l_mp]
    }
}

/// Vector `u` with `uᵀ vec(ρ) = Tr(X ρ)`.
fn functional_vec(x: &CMat) -> Vec<c64> {
    let n = x.nrows();
    (0..n * n).map(|k| x[(k / n, k % n)]).collect()
}

fn functional_mat(u: &[c64], n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| u[j + n * i])
}

/// `max |Tr(X · L(E_ij))|`, the residual of `L†(X) = 0`.
pub fn left_residual(gen: &Superoperator, x: &CMat) -> f64 {
    let u = functional_vec(x);
    let m = &gen.matrix;
    let mut worst = 0.0f64;
    for col in 0..m.ncols() {
        let s: c64 = (0..m.nrows()).map(|k| u[k] * m[(k, col)]).sum();
        worst = worst.max(s.norm());
    }
    worst
}

/// Conserved quantities of `L₀` dual to the DFS basis, from the kernel of the
/// transposed generator.
pub fn conserved_coherence(l0: &Superoperator, pair: &StationaryPair) -> Result<ConservedCoherence> {
    let n = l0.n;
    let lt = linalg::transpose(&l0.matrix);
    let svd = lt
        .svd()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = svd.S();
    let v = svd.V();
    let nn = n * n;
    let smax = s[0].re.max(1e-300);
    let kernel: Vec<usize> = (0..nn).filter(|&j| s[j].re <= 1e-9 * smax).collect();
    if kernel.len() != 4 {
        return Err(Error::KernelDimension { expected: 4, found: kernel.len() });
    }
    let basis = pair.dfs_basis();
    let right: Vec<Vec<c64>> = basis.iter().map(|b| (0..nn).map(|k| b[(k % n, k / n)]).collect()).collect();
    let g = CMat::from_fn(4, 4, |a, b| (0..nn).map(|k| v[(k, kernel[a])] * right[b][k]).sum());
    let ginv = linalg::inverse(&g);
    let dual = |b: usize| -> CMat {
        let u: Vec<c64> = (0..nn)
            .map(|k| (0..4).map(|a| ginv[(b, a)] * v[(k, kernel[a])]).sum())
            .collect();
        functional_mat(&u, n)
    };
    Ok(ConservedCoherence {
        one_plus: dual(0),
        one_minus: dual(1),
        l_pm: dual(2),
        l_mp: dual(3),
    })
}

/// Projection onto the decoherence-free subspace using the conserved quantities.
pub fn dfs_project(rho: &CMat, pair: &StationaryPair, coh: &ConservedCoherence) -> CMat {
    let basis = pair.dfs_basis();
    let n = rho.nrows();
    let mut out = linalg::zeros(n, n);
    for (b, f) in basis.iter().zip(coh.functionals()) {
        out += linalg::scale(linalg::trace_prod(f, rho), b);
    }
    out
}

/// Coordinates `(p₊, p₋, c₊₋, c₋₊)` of `rho` in the DFS basis.
pub fn dfs_coordinates(rho: &CMat, coh: &ConservedCoherence) -> [c64; 4] {
    let f = coh.functionals();
    [0, 1, 2, 3].map(|i| linalg::trace_prod(f[i], rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrappingState {
    pub m: usize,
    pub k: i64,
    pub cos_sign: i8,
}

/// Fock states `|m⟩` at exact walls below `n_max`; stationary for excited atoms.
pub fn trapping_state(phi: f64, dim: FockDim) -> Vec<TrappingState> {
    hard_walls_below(phi, dim.n(), 1e-9)
        .into_iter()
        .map(|(m, k)| TrappingState { m, k, cos_sign: if k % 2 == 0 { 1 } else { -1 } })
        .collect()
}

/// Coherence `|m_a⟩⟨m_b|` between trapping states is stationary iff their cosines agree.
pub fn trapping_coherence_stationary(a: &TrappingState, b: &TrappingState) -> bool {
    a.cos_sign == b.cos_sign
}

#[derive(Debug, Clone)]
pub enum BetweenWalls {
    Pure(Ket),
    Mixed(DensityMatrix),
}

impl BetweenWalls {
    pub fn density(&self) -> DensityMatrix {
        match self {
            BetweenWalls::Pure(k) => k.to_density(),
            BetweenWalls::Mixed(d) => d.clone(),
        }
    }
}

/// Stationary state supported strictly between consecutive same-parity walls
/// `lower < upper` (`lower + 2 ..= upper`).
pub fn between_walls_stationary(
    atom: AtomState,
    phi: f64,
    walls: (usize, usize),
    dim: FockDim,
) -> Result<BetweenWalls> {
    let (lo, hi) = walls;
    let n = dim.n();
    if hi >= n || lo >= hi || (hi - lo) % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "walls ({lo}, {hi}) must share parity and lie below n_max={n}"
        )));
    }
    for w in [lo, hi] {
        if sin_n(phi, w).abs() > WALL_TOL {
            return Err(Error::InvalidArgument(format!("no hard wall at {w} for phi={phi}")));
        }
    }
    let start = lo + 2;
    if start == hi {
        let mut amps = vec![ZERO; n];
        amps[hi] = ONE;
        return Ok(BetweenWalls::Pure(Ket::from_amps(&amps)));
    }
    let c_lo = cos_n(phi, lo).signum();
    let c_hi = cos_n(phi, hi).signum();
    if c_lo != c_hi && atom.c_g.norm() > 0.0 {
        let (amps, stop) = recurrence(atom, phi, start, c_lo, hi + 3)?;
        if stop == hi {
            let mut full = vec![ZERO; n];
            full[..=hi].copy_from_slice(&amps[..=hi]);
            first_nonzero_phase(&mut full);
            return Ok(BetweenWalls::Pure(Ket::from_amps(&full).normalized()?));
        }
    }
    let idx: Vec<usize> = (start..=hi).step_by(2).collect();
    let k = idx.len();
    let kraus = kraus_two_photon(atom, phi, dim);
    let sub: Vec<CMat> = kraus
        .ops
        .iter()
        .map(|m| CMat::from_fn(k, k, |i, j| m[(idx[i], idx[j])]))
        .collect();
    let sub_set = KrausSet::new(sub, kraus.labels.clone());
    let l = generator_l0(&sub_set, 1.0);
    let ker = linalg::null_space(&l.matrix, 1e-10)?;
    if ker.ncols() != 1 {
        return Err(Error::KernelDimension { expected: 1, found: ker.ncols() });
    }
    let v = linalg::unvec(&ker.col(0).to_owned(), k);
    let t = linalg::trace(&v);
    let v = linalg::hermitize(&linalg::scale(ONE / t, &v));
    let mut full = linalg::zeros(n, n);
    for i in 0..k {
        for j in 0..k {
            full[(idx[i], idx[j])] = v[(i, j)];
        }
    }
    Ok(BetweenWalls::Mixed(DensityMatrix::new(full)?))
}

/// Diagonal steady state of thermal atoms: `h_{n+2}/h_n = p₃/p₁` on each parity,
/// weight `p` on the even sector.
pub fn thermal_steady(spec: &ThermalAtomSpec, p_even: f64, dim: FockDim) -> Result<DensityMatrix> {
    let (p1, p3) = (spec.p1(), spec.p3());
    if p3 >= p1 {
        return Err(Error::Divergence(format!("p3={p3} >= p1={p1}")));
    }
    if !(0.0..=1.0).contains(&p_even) {
        return Err(Error::InvalidArgument(format!("parity weight {p_even} outside [0,1]")));
    }
    let n = dim.n();
    let ratio = p3 / p1;
    let mut h = vec![0.0; n];
    for (start, weight) in [(0usize, p_even), (1usize, 1.0 - p_even)] {
        let mut x = 1.0;
        let mut norm = 0.0;
        let mut k = start;
        while k < n {
            h[k] = x;
            norm += x;
            x *= ratio;
            k += 2;
        }
        let mut k = start;
        while k < n {
            h[k] *= weight / norm;
            k += 2;
        }
    }
    DensityMatrix::new(linalg::diag_real(&h))
}

/// Number of local maxima in a photon-number distribution restricted to one parity.
pub fn parity_local_maxima(probs: &[f64], parity: usize, floor: f64) -> Vec<usize> {
    let idx: Vec<usize> = (parity..probs.len()).step_by(2).collect();
    let mut out = Vec::new();
    for (i, &n) in idx.iter().enumerate() {
        let left = if i > 0 { probs[idx[i - 1]] } else { 0.0 };
        let right = if i + 1 < idx.len() { probs[idx[i + 1]] } else { 0.0 };
        if probs[n] > left && probs[n] >= right && probs[n] > floor {
            out.push(n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{kraus_thermal_atom, StarkPhases};
    use crate::walls::phi_for_wall;

    fn dim(n: usize) -> FockDim {
        FockDim::new(n).unwrap()
    }

    #[test]
    fn no_pumping_gives_vacuum_and_one() {
        let pair = pure_stationary(AtomState::ground(), 0.7, dim(10)).unwrap();
        assert!((pair.psi_plus.amps[0] - ONE).norm() < 1e-15);
        assert!((pair.psi_minus.amps[1] - ONE).norm() < 1e-15);
    }

    #[test]
    fn wall_state_moments_and_eigenvalues() {
        let at = AtomState::from_excited(0.65).unwrap();
        let phi = phi_for_wall(20, 5);
        let d = dim(24);
        let (plus, stop) = parity_stationary(at, phi, 0, d).unwrap();
        assert_eq!(stop, 20);
        assert!((plus.mean_n() - 5.58).abs() < 0.01 * 5.58);
        assert!((plus.var_n() - 41.20).abs() < 0.01 * 41.2);
        let ev = verify_ket(&plus, &kraus_two_photon(at, phi, d)).unwrap();
        assert!((ev.alpha - at.c_g).norm() < 1e-8);
        assert!((ev.beta + at.c_e).norm() < 1e-8);
        for k in (1..24).step_by(2) {
            assert_eq!(plus.amps[k], ZERO);
        }
        assert!(matches!(pure_stationary(at, phi, d), Err(Error::Truncation { .. })));
    }

    #[test]
    fn thermal_state_ratio_and_stationarity() {
        let spec = ThermalAtomSpec::new([0.1, 0.4, 0.1, 0.2, 0.1, 0.1]).unwrap();
        let d = dim(14);
        let rho = thermal_steady(&spec, 0.3, d).unwrap();
        assert!((rho.mat[(2, 2)].re / rho.mat[(0, 0)].re - 0.5).abs() < 1e-12);
        for phi in [0.3, 1.1] {
            let k = kraus_thermal_atom(&spec, phi, StarkPhases { theta2: 0.4, theta3: 0.1 }, d);
            let l = generator_l0(&k, 1.0);
            assert!(linalg::norm_max(&l.apply(&rho.mat)) < 1e-8);
        }
        let bad = ThermalAtomSpec::new([0.0, 0.3, 0.0, 0.7, 0.0, 0.0]).unwrap();
        assert!(matches!(thermal_steady(&bad, 0.5, d), Err(Error::Divergence(_))));
    }

    #[test]
    fn trapping_wall_found() {
        let phi = phi_for_wall(11, 1);
        let t = trapping_state(phi, dim(16));
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].m, 11);
        assert_eq!(t[0].cos_sign, -1);
    }
}

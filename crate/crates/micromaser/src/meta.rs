//! Long-time dynamics inside the decoherence-free subspace of `|Ψ±⟩`.
//!
//! Generators act on coordinates `(p₊, p₋, c₊₋, c₋₊)` of
//! `(|Ψ+⟩⟨Ψ+|, |Ψ−⟩⟨Ψ−|, |Ψ+⟩⟨Ψ−|, |Ψ−⟩⟨Ψ+|)`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::channels::{AtomState, KrausSet, Superoperator};
use crate::error::{Error, Result};
use crate::evolve::ModelParams;
use crate::fock::{annihilation_op, DensityMatrix, FockDim, Ket};
use crate::linalg::{self, c, c64, r, CMat};
use crate::steady::{ConservedCoherence, StationaryPair};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Tolerance on `|η| − 1` for the classical metastability flag.
pub const ETA_CLASSICAL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DfsMeta {
    pub n_plus: f64,
    pub n_minus: f64,
    /// Modulus of the coherence-transfer coefficient.
    pub eta: f64,
    /// Rate (same units as the generator).
    pub omega: f64,
    /// Rate (same units as the generator).
    pub gamma_deph: f64,
    pub x_plus: f64,
    pub x_minus: f64,
}

#[derive(Debug, Clone)]
pub struct DfsGenerator {
    pub matrix: CMat,
    pub meta: DfsMeta,
}

impl DfsGenerator {
    pub fn zero() -> Self {
        DfsGenerator { matrix: linalg::zeros(4, 4), meta: DfsMeta::default() }
    }

    /// Sum of two generators; metadata fields that are rates are added, the
    /// photon-number and X fields are taken from whichever side sets them.
    pub fn add(&self, other: &DfsGenerator) -> DfsGenerator {
        let pick = |a: f64, b: f64| if a != 0.0 { a } else { b };
        let (m, o) = (&self.meta, &other.meta);
        DfsGenerator {
            matrix: &self.matrix + &other.matrix,
            meta: DfsMeta {
                n_plus: pick(m.n_plus, o.n_plus),
                n_minus: pick(m.n_minus, o.n_minus),
                eta: pick(m.eta, o.eta),
                omega: m.omega + o.omega,
                gamma_deph: m.gamma_deph + o.gamma_deph,
                x_plus: pick(m.x_plus, o.x_plus),
                x_minus: pick(m.x_minus, o.x_minus),
            },
        }
    }

    /// Largest entry coupling populations and coherences.
    pub fn block_leak(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 2..4 {
                worst = worst.max(self.matrix[(i, j)].norm()).max(self.matrix[(j, i)].norm());
            }
        }
        worst
    }

    /// Largest column sum of the population block.
    pub fn trace_leak(&self) -> f64 {
        (0..2)
            .map(|j| (self.matrix[(0, j)] + self.matrix[(1, j)]).norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues sorted by decreasing real part.
    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        let mut ev = linalg::eigvals(&self.matrix)?;
        ev.sort_by(|a, b| b.re.total_cmp(&a.re));
        Ok(ev)
    }

    /// Stationary weight on `|Ψ+⟩⟨Ψ+|` of the population block.
    pub fn stationary_p_plus(&self) -> Result<f64> {
        let up = self.matrix[(0, 1)].re;
        let down = self.matrix[(1, 0)].re;
        if up + down <= 0.0 {
            return Err(Error::Degenerate("population block has no transitions".into()));
        }
        Ok(up / (up + down))
    }
}

/// `G_ab = Tr(F_a · δ(B_b))` for the dual functionals `F` and DFS basis `B`.
pub fn project_first_order(delta: impl Fn(&CMat) -> CMat, pair: &StationaryPair, coh: &ConservedCoherence) -> CMat {
    let basis = pair.dfs_basis();
    let f = coh.functionals();
    let images: Vec<CMat> = basis.iter().map(&delta).collect();
    CMat::from_fn(4, 4, |a, b| linalg::trace_prod(f[a], &images[b]))
}

fn sandwich_sum(ops: &[&CMat], rho: &CMat) -> CMat {
    let mut out = linalg::zeros(rho.nrows(), rho.ncols());
    for m in ops {
        out += *m * rho * m.adjoint();
    }
    out
}

/// `Tr(L₊₋ a|Ψ−⟩⟨Ψ+|a†)/√(⟨n⟩₊⟨n⟩₋)`.
pub fn eta_loss(pair: &StationaryPair, coh: &ConservedCoherence) -> c64 {
    let dim = FockDim::new(pair.dim()).expect("pair dimension is positive");
    let a = annihilation_op(dim).mat;
    let [_, _, _, mp] = pair.dfs_basis();
    let num = linalg::trace_prod(&coh.l_pm, &(&a * mp * a.adjoint()));
    num / (pair.psi_plus.mean_n() * pair.psi_minus.mean_n()).sqrt()
}

/// Loss generator in the decoherence-free subspace.
pub fn eff_loss_generator(pair: &StationaryPair, coh: &ConservedCoherence, kappa: f64) -> DfsGenerator {
    let (np, nm) = (pair.psi_plus.mean_n(), pair.psi_minus.mean_n());
    let eta = eta_loss(pair, coh);
    let s = (np * nm).sqrt();
    let half = -0.5 * (np + nm);
    let mut m = linalg::zeros(4, 4);
    m[(0, 0)] = r(-np);
    m[(0, 1)] = r(nm);
    m[(1, 0)] = r(np);
    m[(1, 1)] = r(-nm);
    m[(2, 2)] = r(half);
    m[(3, 3)] = r(half);
    m[(2, 3)] = eta * s;
    m[(3, 2)] = eta.conj() * s;
    DfsGenerator {
        matrix: linalg::scale(r(kappa), &m),
        meta: DfsMeta { n_plus: np, n_minus: nm, eta: eta.norm(), ..Default::default() },
    }
}

/// `⟨Ψ|M₀†M₀ + M₂†M₂ + M₄†M₄|Ψ⟩` from the labeled six-operator set.
pub fn x_expectation(kraus: &KrausSet, psi: &Ket) -> Result<f64> {
    let mut x = 0.0;
    for label in ["0", "2", "4"] {
        let m = kraus
            .get(label)
            .ok_or_else(|| Error::InvalidArgument(format!("kraus set lacks label {label}")))?;
        let v = m * &psi.amps;
        x += linalg::col_norm(&v).powi(2);
    }
    Ok(x)
}

/// First-order generator of the corrections `full − base`, scaled by the atom rate.
pub fn eff_correction_generator(
    pair: &StationaryPair,
    coh: &ConservedCoherence,
    full: &KrausSet,
    base: &KrausSet,
    nu: f64,
) -> Result<DfsGenerator> {
    if full.dim() != pair.dim() || base.dim() != pair.dim() {
        return Err(Error::InvalidArgument("kraus and state dimensions differ".into()));
    }
    let full_ops: Vec<&CMat> = full.ops.iter().collect();
    let base_ops: Vec<&CMat> = base.ops.iter().collect();
    let delta = |x: &CMat| sandwich_sum(&full_ops, x) - sandwich_sum(&base_ops, x);
    let g = linalg::scale(r(nu), &project_first_order(delta, pair, coh));
    let xp = x_expectation(full, &pair.psi_plus)?;
    let xm = x_expectation(full, &pair.psi_minus)?;
    let swap: Vec<&CMat> = ["0", "2", "4"].iter().filter_map(|l| full.get(l)).collect();
    let [_, _, _, mp] = pair.dfs_basis();
    let eta = if xp > 0.0 && xm > 0.0 {
        linalg::trace_prod(&coh.l_pm, &sandwich_sum(&swap, &mp)).norm() / (xp * xm).sqrt()
    } else {
        0.0
    };
    let z = g[(2, 2)] + r(0.5 * nu * (xp + xm));
    Ok(DfsGenerator {
        meta: DfsMeta {
            n_plus: pair.psi_plus.mean_n(),
            n_minus: pair.psi_minus.mean_n(),
            eta,
            omega: -z.im,
            gamma_deph: -z.re,
            x_plus: xp,
            x_minus: xm,
        },
        matrix: g,
    })
}

/// Closed-form second-order `⟨X⟩` for a far-detuned model, as a cross-check of
/// [`x_expectation`].
pub fn x_closed_form(p: &ModelParams, atom: AtomState, psi: &Ket) -> f64 {
    let n = psi.dim();
    let dl = p.delta();
    let [_, g2, g3, _] = p.g;
    let (a2, a3) = (g2.norm_sqr(), g3.norm_sqr());
    let (d1, d4) = (p.detuning[0], p.detuning[3]);
    let tau = p.tau;
    let (cg2, ce2) = (atom.c_g.norm_sqr(), atom.c_e.norm_sqr());
    let probs = psi.probabilities();
    let mut x = 0.0;
    for (k, pk) in probs.iter().enumerate() {
        let m = k as f64;
        let t1 = 2.0 * cg2 * a2 / (dl * d1) * (m + 1.0) * (1.0 - (tau * d1 + tau * a2 / dl * (m + 2.0)).cos());
        let t2 = 2.0 * cg2 * a2 / (dl * dl) * m * (1.0 - (tau * dl + tau * (a2 + a3) / dl * (m - 1.0)).cos());
        let t3 = 2.0 * ce2 * a3 / (dl * dl) * (m + 1.0) * (1.0 + (tau * dl + tau * (a2 + a3) / dl * (m + 1.0)).cos());
        let t4 = -2.0 * ce2 * a3 / (dl * d4) * m * (1.0 + (tau * (d4 - a2 / dl - a3 / dl * m)).cos());
        x += pk * (t1 + t2 + t3 + t4);
    }
    // cross term between the two atomic amplitudes
    let w = atom.c_g.conj() * atom.c_e * g2.conj() * g3 / (dl * dl);
    let mut cross = ZERO;
    for k in 0..n.saturating_sub(2) {
        let m = k as f64;
        let s = (tau * dl + tau * (m + 1.0) * (a2 + a3) / dl).sin();
        let amp = ((m + 1.0) * (m + 2.0)).sqrt();
        // ⟨ψ|a†² sin(n)|ψ⟩ picks ψ*_{k+2} ψ_k
        cross += psi.amps[k + 2].conj() * psi.amps[k] * amp * s;
    }
    // the cross term enters with the opposite sign in this rotating frame
    x - 4.0 * (c(0.0, -1.0) * w * cross).re
}

/// `(Ω, γ_deph)` from `−iΩ − γ = ν Tr[L₊₋ δM(|Ψ+⟩⟨Ψ−|)]`.
pub fn eff_dephasing_rate(
    perturbed: &Superoperator,
    base: &Superoperator,
    pair: &StationaryPair,
    coh: &ConservedCoherence,
    nu: f64,
) -> Result<(f64, f64)> {
    if perturbed.n != base.n || base.n != pair.dim() {
        return Err(Error::InvalidArgument("map and state dimensions differ".into()));
    }
    let [_, _, pm, _] = pair.dfs_basis();
    let d = perturbed.apply(&pm) - base.apply(&pm);
    let z = linalg::trace_prod(&coh.l_pm, &d) * nu;
    Ok((-z.im, -z.re))
}

/// Decay rates `γ_jk` (from `k` to `j`) among the coupled levels, plus `γ_k` to
/// uncoupled levels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AtomDecay {
    pub gamma01: f64,
    pub gamma03: f64,
    pub gamma13: f64,
    pub gamma23: f64,
    pub gamma1: f64,
    pub gamma3: f64,
}

impl AtomDecay {
    pub fn total1(&self) -> f64 {
        self.gamma01 + self.gamma1
    }

    pub fn total3(&self) -> f64 {
        self.gamma03 + self.gamma13 + self.gamma23 + self.gamma3
    }

    fn validate(&self) -> Result<()> {
        let all = [self.gamma01, self.gamma03, self.gamma13, self.gamma23, self.gamma1, self.gamma3];
        if all.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidArgument("decay rates must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayBounds {
    pub gamma_deph_bound: f64,
    pub omega_bound: f64,
    pub nu_reduced: f64,
}

pub fn decay_bounds(atom: AtomState, decay: AtomDecay, t_prep: f64, tau: f64, nu: f64) -> Result<DecayBounds> {
    decay.validate()?;
    if t_prep < 0.0 || tau < 0.0 || nu < 0.0 {
        return Err(Error::InvalidArgument("times and rate must be >= 0".into()));
    }
    let (cg2, ce2) = (atom.c_g.norm_sqr(), atom.c_e.norm_sqr());
    let (big1, big3) = (decay.total1(), decay.total3());
    let deph = 2.0 * ((big1 - decay.gamma1) * cg2 + 2.0 * (big3 - decay.gamma3 - decay.gamma13 * cg2) * ce2) * t_prep
        + 2.0 * big1.max(big3) * tau;
    let omega = (decay.gamma01 * cg2 + (decay.gamma03 + decay.gamma23) * ce2) * t_prep
        + (decay.gamma01 + decay.gamma03 + decay.gamma23) * tau;
    let reduced = 1.0 - (decay.gamma1 * cg2 + decay.gamma3 * ce2) * t_prep;
    Ok(DecayBounds { gamma_deph_bound: nu * deph, omega_bound: nu * omega, nu_reduced: nu * reduced })
}

/// Dephasing bound for a spread of couplings with variance `var_phi`.
pub fn beam_dephasing_bound(pair: &StationaryPair, var_phi: f64, nu: f64) -> f64 {
    let dim = FockDim::new(pair.dim()).expect("pair dimension is positive");
    let a = annihilation_op(dim).mat;
    let a2 = &a * &a;
    let low = a2.adjoint() * &a2;
    let high = &a2 * a2.adjoint();
    let ev = |op: &CMat, k: &Ket| k.expect(op).re.max(0.0).sqrt();
    let (cg2, ce2) = (pair.atom.c_g.norm_sqr(), pair.atom.c_e.norm_sqr());
    let sl = ev(&low, &pair.psi_plus) + ev(&low, &pair.psi_minus);
    let sh = ev(&high, &pair.psi_plus) + ev(&high, &pair.psi_minus);
    nu * var_phi / 2.0 * (cg2 * sl * sl + ce2 * sh * sh)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassicalReport {
    pub eigenvalues: Vec<c64>,
    pub classical_flag: bool,
    /// Coefficients of `|Ψ₁⟩, |Ψ₂⟩` on `(|Ψ+⟩, |Ψ−⟩)`.
    pub metastable_states: [[f64; 2]; 2],
    pub gamma_loss: f64,
    /// Jump operator on `(|Ψ+⟩, |Ψ−⟩)`, row-major.
    pub jump: [[f64; 2]; 2],
}

/// `λ₁…λ₄` of the loss generator in closed form.
pub fn loss_eigenvalues(n_plus: f64, n_minus: f64, eta: f64, kappa: f64) -> [f64; 4] {
    let s = 2.0 * eta.abs() * (n_plus * n_minus).sqrt();
    [
        0.0,
        -kappa / 2.0 * (n_plus + n_minus - s),
        -kappa / 2.0 * (n_plus + n_minus + s),
        -kappa * (n_plus + n_minus),
    ]
}

/// Jump operator flipping parity, normalized so that `J†J` has unit trace-average.
pub fn parity_jump(n_plus: f64, n_minus: f64) -> Result<[[f64; 2]; 2]> {
    let s = (n_plus * n_minus).sqrt();
    let norm = (n_plus + n_minus).sqrt() * (n_plus.sqrt() + n_minus.sqrt());
    if norm <= 0.0 {
        return Err(Error::Degenerate("both photon numbers vanish".into()));
    }
    Ok([[0.0, (n_plus + s) / norm], [(n_minus + s) / norm, 0.0]])
}

pub fn dfs_eigen_and_classical(gen: &DfsGenerator) -> Result<ClassicalReport> {
    let eigenvalues = gen.eigenvalues()?;
    let l2 = eigenvalues[1].re.abs();
    let l3 = eigenvalues[2].re.abs();
    let classical_flag = (gen.meta.eta - 1.0).abs() <= ETA_CLASSICAL_TOL && l2 <= 0.1 * l3;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Ok(ClassicalReport {
        gamma_loss: -eigenvalues[3].re / 2.0,
        eigenvalues,
        classical_flag,
        metastable_states: [[h, h], [h, -h]],
        jump: parity_jump(gen.meta.n_plus, gen.meta.n_minus)?,
    })
}

/// `(|Ψ+⟩ ± |Ψ−⟩)/√2`.
pub fn metastable_kets(pair: &StationaryPair) -> (Ket, Ket) {
    let n = pair.dim();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let p = &pair.psi_plus.amps;
    let m = &pair.psi_minus.amps;
    let plus: Vec<c64> = (0..n).map(|i| (p[i] + m[i]) * h).collect();
    let minus: Vec<c64> = (0..n).map(|i| (p[i] - m[i]) * h).collect();
    (Ket::from_amps(&plus), Ket::from_amps(&minus))
}

#[derive(Debug, Clone)]
pub struct MetaSteadyState {
    pub p_plus: f64,
    pub rho: DensityMatrix,
}

pub fn combined_steady(
    pair: &StationaryPair,
    n: (f64, f64),
    x: (f64, f64),
    kappa: f64,
    nu: f64,
) -> Result<MetaSteadyState> {
    let (np, nm) = n;
    let (xp, xm) = x;
    let den = kappa * (nm + np) + nu * (xm + xp);
    if den.abs() < 1e-300 {
        return Err(Error::Degenerate("no population transfer between parities".into()));
    }
    let p_plus = (kappa * nm + nu * xm) / den;
    let [pp, mm, _, _] = pair.dfs_basis();
    let rho = linalg::scale(r(p_plus), &pp) + linalg::scale(r(1.0 - p_plus), &mm);
    Ok(MetaSteadyState { p_plus, rho: DensityMatrix::from_raw(rho) })
}

/// A state between two same-parity walls, with the photon numbers it collects
/// under the unperturbed dynamics.
#[derive(Debug, Clone)]
pub struct LadderState {
    pub k: usize,
    pub parity: usize,
    pub rho: DensityMatrix,
    pub basin: Vec<usize>,
}

impl LadderState {
    /// Basin `lower+2, lower+4, …, upper` (`lower = None` starts at the parity).
    pub fn between(k: usize, parity: usize, lower: Option<usize>, upper: usize, rho: DensityMatrix) -> Self {
        let start = lower.map_or(parity, |l| l + 2);
        LadderState { k, parity, rho, basin: (start..=upper).step_by(2).collect() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LadderNoise {
    pub kappa: f64,
    pub nu: f64,
    /// Parity-swapping correction operators (`M₀, M₂, M₄`).
    pub corrections: Vec<CMat>,
    pub atom: Option<AtomState>,
    pub tau: f64,
    /// Total decay rates of levels 1 and 3 and the 3→1 branch.
    pub big_gamma1: f64,
    pub big_gamma3: f64,
    pub gamma13: f64,
    /// Variance of the integrated coupling.
    pub var_phi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderRates {
    pub labels: Vec<(usize, usize)>,
    /// `rates[i][j]`: rate from state `j` to state `i`; diagonal holds minus the total
    /// outflow, including flow beyond the listed states.
    pub rates: Vec<Vec<f64>>,
    /// Outflow to photon numbers not covered by any listed basin.
    pub escape: Vec<f64>,
    pub detailed_balance: bool,
    pub stationary: Option<Vec<f64>>,
    /// Every transition raises the photon number.
    pub upward_only: bool,
}

fn centre(basin: &[usize]) -> f64 {
    basin.iter().sum::<usize>() as f64 / basin.len().max(1) as f64
}

/// Effective rates between metastable states separated by hard walls at `walls`.
pub fn hardwall_ladder(states: &[LadderState], walls: &[usize], noise: &LadderNoise) -> Result<LadderRates> {
    let ns = states.len();
    if ns == 0 {
        return Err(Error::InvalidArgument("no ladder states".into()));
    }
    let n = states[0].rho.dim();
    let dim = FockDim::new(n)?;
    let a = annihilation_op(dim).mat;
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, s) in states.iter().enumerate() {
        for &b in &s.basin {
            if owner.insert(b, i).is_some() {
                return Err(Error::InvalidArgument(format!("photon number {b} in two basins")));
            }
        }
    }
    let mut w = vec![vec![0.0; ns]; ns];
    let mut escape = vec![0.0; ns];
    // population image of ρ_j, distributed over basins
    let distribute = |j: usize, image: &CMat, scale: f64, w: &mut Vec<Vec<f64>>, escape: &mut Vec<f64>| {
        for idx in 0..n {
            let p = image[(idx, idx)].re * scale;
            if p == 0.0 {
                continue;
            }
            match owner.get(&idx) {
                Some(&i) if i != j => w[i][j] += p,
                Some(_) => {}
                None => escape[j] += p,
            }
        }
    };
    for (j, s) in states.iter().enumerate() {
        let rho = &s.rho.mat;
        if noise.kappa > 0.0 {
            let img = &a * rho * a.adjoint();
            distribute(j, &img, noise.kappa, &mut w, &mut escape);
        }
        if noise.nu > 0.0 && !noise.corrections.is_empty() {
            let ops: Vec<&CMat> = noise.corrections.iter().collect();
            let img = sandwich_sum(&ops, rho);
            distribute(j, &img, noise.nu, &mut w, &mut escape);
        }
        let Some(atom) = noise.atom else { continue };
        let (cg2, ce2) = (atom.c_g.norm_sqr(), atom.c_e.norm_sqr());
        for &m in walls {
            if m % 2 != s.parity {
                continue;
            }
            let spread = ((m + 1) * (m + 2)) as f64 * noise.var_phi;
            let up = noise.nu * ce2 * (noise.big_gamma1 / 2.0 * noise.tau + spread);
            let down = noise.nu * cg2 * ((4.0 * noise.big_gamma3 - 3.0 * noise.gamma13) / 8.0 * noise.tau + spread);
            if s.basin.contains(&m) && m < n && up > 0.0 {
                let p = rho[(m, m)].re * up;
                match owner.get(&(m + 2)) {
                    Some(&i) => w[i][j] += p,
                    None => escape[j] += p,
                }
            }
            if s.basin.contains(&(m + 2)) && m + 2 < n && down > 0.0 {
                let p = rho[(m + 2, m + 2)].re * down;
                match owner.get(&m) {
                    Some(&i) => w[i][j] += p,
                    None => escape[j] += p,
                }
            }
        }
    }
    for j in 0..ns {
        let out: f64 = (0..ns).filter(|&i| i != j).map(|i| w[i][j]).sum::<f64>() + escape[j];
        w[j][j] = -out;
    }
    let mut upward_only = true;
    for j in 0..ns {
        for i in 0..ns {
            if i != j && w[i][j] > 0.0 && centre(&states[i].basin) < centre(&states[j].basin) {
                upward_only = false;
            }
        }
    }
    let escapes = escape.iter().any(|&e| e > 0.0);
    let stationary = if escapes || upward_only && w.iter().flatten().any(|&x| x != 0.0) {
        None
    } else {
        stationary_distribution(&w).ok()
    };
    let detailed_balance = match &stationary {
        Some(pi) => {
            let scale = w.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            (0..ns).all(|i| (0..ns).all(|j| (w[i][j] * pi[j] - w[j][i] * pi[i]).abs() <= 1e-9 * scale))
        }
        None => false,
    };
    Ok(LadderRates {
        labels: states.iter().map(|s| (s.k, s.parity)).collect(),
        rates: w,
        escape,
        detailed_balance,
        stationary,
        upward_only,
    })
}

fn stationary_distribution(w: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = w.len();
    let m = CMat::from_fn(n, n, |i, j| r(w[i][j]));
    let ker = linalg::null_space(&m, 1e-10)?;
    if ker.ncols() != 1 {
        return Err(Error::KernelDimension { expected: 1, found: ker.ncols() });
    }
    let v: Vec<f64> = (0..n).map(|i| ker[(i, 0)].re).collect();
    let s: f64 = v.iter().sum();
    if s.abs() < 1e-300 {
        return Err(Error::Numerical("stationary vector sums to zero".into()));
    }
    Ok(v.iter().map(|x| (x / s).max(0.0)).collect())
}

/// Out-rate of a trapping Fock state `|m⟩` pumped by excited atoms.
pub fn trapping_lifetime_rate(m: usize, kappa: f64, nu: f64, x_mm: f64, big_gamma1: f64, tau: f64, var_phi: f64) -> f64 {
    kappa * m as f64 + nu * x_mm + nu * big_gamma1 * tau / 2.0 + nu * ((m + 1) * (m + 2)) as f64 * var_phi
}

//! Adiabatic elimination of the far-detuned levels: the effective two-photon
//! Hamiltonian, Stark-shift cancellation, the general two-photon classification
//! and perturbative Kraus operators of the full model.

use serde::Serialize;

use crate::channels::{AtomState, KrausSet};
use crate::error::{Error, Result};
use crate::evolve::{block_hamiltonian, full_model_map, ModelParams, FULL_LABELS};
use crate::fock::{FockDim, Ket};
use crate::linalg::{self, c64, r, CMat, I, ZERO};

/// `H = (A n + B)σ₁₁ + (D n + E)σ₃₃ + C a²σ₃₁ + C* a†²σ₁₃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveHamiltonian {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub e: f64,
    pub c: c64,
}

impl EffectiveHamiltonian {
    /// 2×2 matrix on `(|1, m+2⟩, |3, m⟩)`.
    pub fn pair_block(&self, m: usize) -> CMat {
        let s = (((m + 1) * (m + 2)) as f64).sqrt();
        let mut h = linalg::zeros(2, 2);
        h[(0, 0)] = r(self.a * (m + 2) as f64 + self.b);
        h[(1, 1)] = r(self.d * m as f64 + self.e);
        h[(0, 1)] = self.c.conj() * s;
        h[(1, 0)] = self.c * s;
        h
    }

    pub fn general(&self, tau: f64) -> GeneralTwoPhotonParams {
        GeneralTwoPhotonParams { a: self.a, b: self.b, c: self.c, d: self.d, e: self.e, tau }
    }

    /// Kraus operators `⟨1|e^{−iτH}|ψ⟩`, `⟨3|e^{−iτH}|ψ⟩` (labels g/e). The top two
    /// levels of `|1⟩` have no partner inside the truncation and only acquire phases.
    pub fn kraus(&self, atom: AtomState, tau: f64, dim: FockDim) -> KrausSet {
        let n = dim.n();
        let mut mg = linalg::zeros(n, n);
        let mut me = linalg::zeros(n, n);
        for m in 0..n {
            if m + 2 < n {
                let u = linalg::expm(&linalg::scale(-I * tau, &self.pair_block(m)));
                // columns: input |1, m+2⟩, |3, m⟩
                mg[(m + 2, m + 2)] += atom.c_g * u[(0, 0)];
                mg[(m + 2, m)] += atom.c_e * u[(0, 1)];
                me[(m, m + 2)] += atom.c_g * u[(1, 0)];
                me[(m, m)] += atom.c_e * u[(1, 1)];
            } else {
                me[(m, m)] = atom.c_e * c64::from_polar(1.0, -tau * (self.d * m as f64 + self.e));
            }
        }
        for m in 0..2.min(n) {
            mg[(m, m)] = atom.c_g * c64::from_polar(1.0, -tau * (self.a * m as f64 + self.b));
        }
        KrausSet::new(vec![mg, me], vec!["g".into(), "e".into()])
    }
}

/// Second-order coefficients of the effective Hamiltonian on levels 1 and 3, omitting
/// the common energy `Δ₁`.
pub fn adiabatic_heff(p: &ModelParams) -> Result<EffectiveHamiltonian> {
    p.check_resonance()?;
    if p.far_detuned_ratio() > 0.3 {
        log::warn!("far-detuned ratio {:.3} > 0.3", p.far_detuned_ratio());
    }
    let [g1, g2, g3, g4] = p.g.map(|g| g.norm_sqr());
    let [d1, _, _, d4] = p.detuning;
    let dl = p.delta();
    let gg = p.big_g.norm_sqr();
    let t1 = if g1 > 0.0 { g1 / d1 } else { 0.0 };
    let t4 = if g4 > 0.0 { g4 / d4 } else { 0.0 };
    let ta = if gg > 0.0 { gg / p.delta_a } else { 0.0 };
    Ok(EffectiveHamiltonian {
        a: t1 - g2 / dl,
        b: t1,
        d: -(t4 + g3 / dl),
        e: -(ta + g3 / dl),
        c: p.lambda(),
    })
}

/// Signed relative residuals of the three Stark-cancellation conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarkResiduals {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub pass: bool,
}

fn rel(lhs: f64, rhs: f64) -> f64 {
    if rhs == 0.0 {
        lhs
    } else {
        (lhs - rhs) / rhs.abs()
    }
}

pub fn stark_check(p: &ModelParams) -> StarkResiduals {
    let [g1, g2, g3, g4] = p.g.map(|g| g.norm_sqr());
    let [d1, _, _, d4] = p.detuning;
    let dl = p.delta();
    let a = rel(g1 / d1, g2 / dl);
    let b = rel(g4 / d4, -g3 / dl);
    let c = rel(p.big_g.norm_sqr() / p.delta_a, -(g3 + g2) / dl);
    StarkResiduals { a, b, c, pass: a.abs() < 1e-10 && b.abs() < 1e-10 && c.abs() < 1e-10 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneralTwoPhotonParams {
    pub a: f64,
    pub b: f64,
    pub c: c64,
    pub d: f64,
    pub e: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TwoPhotonClass {
    DephasingOnly,
    CaseA,
    /// `c_{n+2}/c_n = −(c_e/c_g)·ratio·√((n+1)/(n+2))` with `ratio = C*/A`.
    CaseB { ratio: c64 },
    NoPureState,
}

pub fn general_twophoton_classify(p: &GeneralTwoPhotonParams) -> TwoPhotonClass {
    let scale = [p.a.abs(), p.b.abs(), p.c.norm(), p.d.abs(), p.e.abs()]
        .into_iter()
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let tol = 1e-10 * scale;
    let zero = |x: f64| x.abs() <= tol;
    if p.c.norm() <= tol {
        return TwoPhotonClass::DephasingOnly;
    }
    if zero(p.a) && zero(p.d) && zero(p.b - p.e) {
        return TwoPhotonClass::CaseA;
    }
    let ad = p.a * p.d;
    if ad > 0.0
        && (p.c.norm_sqr() - ad).abs() <= 1e-10 * scale * scale
        && ((p.b + p.d - p.e) * (p.a + p.b + 2.0 * p.d - p.e)).abs() <= tol * scale
    {
        return TwoPhotonClass::CaseB { ratio: p.c.conj() / p.a };
    }
    TwoPhotonClass::NoPureState
}

/// Even Case-B stationary state (squeezed vacuum).
pub fn case_b_state(ratio: c64, atom: AtomState, dim: FockDim) -> Result<Ket> {
    let n = dim.n();
    let q = -(atom.c_e / atom.c_g) * ratio;
    let mut amps = vec![ZERO; n];
    amps[0] = r(1.0);
    let mut k = 0;
    while k + 2 < n {
        amps[k + 2] = amps[k] * q * (((k + 1) as f64) / ((k + 2) as f64)).sqrt();
        k += 2;
    }
    let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let tail = amps[n.saturating_sub(2)..].iter().map(|a| a.norm_sqr()).sum::<f64>() / norm2;
    if tail > crate::fock::TAIL_TOL || !norm2.is_finite() {
        return Err(Error::Truncation { tail, n_max: n });
    }
    Ket::from_amps(&amps).normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KrausOrder {
    ExactBlock,
    Series2,
}

/// Perturbative diagonalization data of one excitation block.
#[derive(Debug, Clone)]
pub struct AdiabaticExpansion {
    pub levels: Vec<usize>,
    pub h0: CMat,
    pub v: CMat,
    pub s1: CMat,
    pub s2: CMat,
    /// `H₀` plus the diagonal second-order part and the higher-order remainder on
    /// levels 1 and 3.
    pub h_diag: CMat,
}

/// Fourth-order diagonal terms on `(|1⟩, |3⟩)` for uniform couplings with
/// `G²/δ = −2g²/Δ`, as tabulated in closed form; rows/columns `(1, 3)` at photon
/// numbers `(N−1, N−3)`.
pub fn h4_closed_form(p: &ModelParams, block: usize) -> Option<CMat> {
    let g = uniform_g(p)?;
    if block < 3 {
        return None;
    }
    let dl = p.delta();
    let g2 = p.big_g.norm_sqr();
    let g4 = g.powi(4);
    let n1 = (block - 1) as f64;
    let m = (block - 3) as f64;
    let mut h = linalg::zeros(2, 2);
    h[(0, 0)] = r(4.0 * g4 * (n1 * (n1 - 3.0) - 1.0) / (3.0 * dl.powi(3)));
    h[(1, 1)] = r(-4.0 * g4 * (4.0 * g * g - g2 * (m * (m + 1.0) + 1.0)) / (3.0 * g2 * dl.powi(3)));
    let f = 8.0 * g4 * (g * g + g2 * (m + 1.0)) / (3.0 * g2 * dl.powi(3));
    let el = r(((m + 1.0) * (m + 2.0)).sqrt() * f);
    h[(0, 1)] = el;
    h[(1, 0)] = el;
    Some(h)
}

/// Higher-order remainder on whichever of levels 1 and 3 the block holds: the exact
/// model-space effective Hamiltonian minus `H₀ + H₂`.
fn fourth_order_block(p: &ModelParams, block: usize, n: usize, levels: &[usize], h2: &CMat) -> Result<CMat> {
    let (_, h) = block_hamiltonian(p, block, n);
    let idx: Vec<usize> = (0..levels.len()).filter(|&i| levels[i] == 1 || levels[i] == 3).collect();
    let exact = model_space_heff(&h, &idx, p.energies()[1])?;
    let d = levels.len();
    let mut out = linalg::zeros(d, d);
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            out[(ia, ib)] = exact[(a, b)] - h2[(ia, ib)];
        }
    }
    Ok(out)
}

/// des Cloizeaux effective Hamiltonian of `h` on the basis states `idx`, built from
/// the eigenvectors whose eigenvalues lie closest to `centre`.
fn model_space_heff(h: &CMat, idx: &[usize], centre: f64) -> Result<CMat> {
    let k = idx.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty model space".into()));
    }
    let (vals, v) = linalg::eigh(h)?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| (vals[a] - centre).abs().total_cmp(&(vals[b] - centre).abs()));
    let chosen = &order[..k];
    let b = CMat::from_fn(k, k, |i, j| v[(idx[i], chosen[j])]);
    let ov = b.adjoint() * &b;
    let ov_inv_sqrt = linalg::hermitian_fn(&ov, |x| 1.0 / x.sqrt())?;
    let orth = &b * &ov_inv_sqrt;
    let e: Vec<f64> = chosen.iter().map(|&c| vals[c]).collect();
    Ok(&orth * linalg::diag_real(&e) * orth.adjoint())
}

fn uniform_g(p: &ModelParams) -> Option<f64> {
    let g = p.g[0];
    let d = p.delta();
    let same = p.g.iter().all(|x| (x - g).norm() <= 1e-12 * g.norm())
        && (p.detuning[0] - d).abs() <= 1e-12 * d.abs()
        && (p.detuning[3] + d).abs() <= 1e-12 * d.abs()
        && (p.big_g.norm_sqr() / p.delta_a + 2.0 * g.norm_sqr() / d).abs() <= 1e-12 * g.norm_sqr() / d.abs();
    (same && g.norm() > 0.0).then_some(g.norm())
}

pub fn adiabatic_expansion(p: &ModelParams, block: usize, n: usize) -> AdiabaticExpansion {
    let (levels, h) = block_hamiltonian(p, block, n);
    let d = levels.len();
    let e: Vec<f64> = (0..d).map(|i| h[(i, i)].re).collect();
    let h0 = linalg::diag_real(&e);
    let v = &h - &h0;
    let degenerate = |i: usize, j: usize| (e[i] - e[j]).abs() <= 1e-12 * (1.0 + e[i].abs());
    let s1 = CMat::from_fn(d, d, |i, j| if degenerate(i, j) { ZERO } else { v[(i, j)] / (e[i] - e[j]) });
    let x = linalg::scale(r(0.5), &linalg::commutator(&s1, &v));
    let s2 = CMat::from_fn(d, d, |i, j| if degenerate(i, j) { ZERO } else { x[(i, j)] / (e[i] - e[j]) });
    let mut h_diag = CMat::from_fn(d, d, |i, j| if degenerate(i, j) { x[(i, j)] } else { ZERO });
    h_diag += &h0;
    if let Ok(h4) = fourth_order_block(p, block, n, &levels, &h_diag) {
        h_diag += h4;
    }
    AdiabaticExpansion { levels, h0, v, s1, s2, h_diag }
}

/// Six labeled Kraus operators of the full model, exactly or to second order in `g/Δ`.
pub fn higher_order_kraus(p: &ModelParams, atom: AtomState, dim: FockDim, order: KrausOrder) -> Result<KrausSet> {
    match order {
        KrausOrder::ExactBlock => full_model_map(p, atom, dim),
        KrausOrder::Series2 => {
            p.check_resonance()?;
            let n = dim.n();
            let mut ops = vec![linalg::zeros(n, n); 6];
            let input = [(1usize, atom.c_g), (3usize, atom.c_e)];
            for block in 0..n + 4 {
                let ex = adiabatic_expansion(p, block, n);
                if ex.levels.is_empty() {
                    continue;
                }
                let u = linalg::expm(&linalg::scale(-I * p.tau, &ex.h_diag));
                let s1u = &ex.s1 * &u;
                let us1 = &u * &ex.s1;
                let half_s1sq = linalg::scale(r(0.5), &(&ex.s1 * &ex.s1));
                let w = &u - &s1u + &us1 - &s1u * &ex.s1
                    + (&half_s1sq - &ex.s2) * &u
                    + &u * (&half_s1sq + &ex.s2);
                // nearest unitary, so that the truncated series stays trace preserving
                let w = &w * linalg::hermitian_fn(&(w.adjoint() * &w), |x| 1.0 / x.sqrt())?;
                for &(l_in, amp) in &input {
                    let Some(col) = ex.levels.iter().position(|&x| x == l_in) else { continue };
                    let m_in = block - l_in;
                    for (row, &l_out) in ex.levels.iter().enumerate() {
                        let m_out = block - if l_out == crate::evolve::LEVEL_A { 3 } else { l_out };
                        ops[l_out][(m_out, m_in)] += amp * w[(row, col)];
                    }
                }
            }
            Ok(KrausSet::new(ops, FULL_LABELS.iter().map(|s| s.to_string()).collect()))
        }
    }
}

/// Effective Hamiltonian on `(|1, N−1⟩, |3, N−3⟩)` obtained from the exact block
/// spectrum (des Cloizeaux construction), minus `Δ₁`.
pub fn exact_block_heff(p: &ModelParams, block: usize, n: usize) -> Result<CMat> {
    let (levels, h) = block_hamiltonian(p, block, n);
    let i1 = levels.iter().position(|&l| l == 1);
    let i3 = levels.iter().position(|&l| l == 3);
    let (Some(i1), Some(i3)) = (i1, i3) else {
        return Err(Error::InvalidArgument(format!("block {block} lacks levels 1 and 3")));
    };
    let e1 = p.energies()[1];
    let heff = model_space_heff(&h, &[i1, i3], e1)?;
    Ok(&heff - linalg::diag_real(&[e1, e1]))
}

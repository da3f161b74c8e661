//! Quantum Fisher information for phase encoding by `e^{−iφ a†a}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{fidelity_unclamped, DensityMatrix, Ket};
use crate::linalg::{self, c64, CMat};
use crate::steady::StationaryPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetrologyReport {
    pub mean_n: f64,
    pub var_n: f64,
    pub qfi: f64,
    pub enhancement: f64,
    pub purity: f64,
}

impl MetrologyReport {
    /// Enhancement is reported as NaN when `⟨n⟩ = 0`.
    pub fn of(rho: &DensityMatrix) -> Result<Self> {
        let mean_n = rho.mean_n();
        let q = qfi(rho)?;
        Ok(MetrologyReport {
            mean_n,
            var_n: rho.var_n(),
            qfi: q,
            enhancement: enhancement(q, mean_n).unwrap_or(f64::NAN),
            purity: rho.purity(),
        })
    }
}

/// `2 Σ (p_j − p_k)²/(p_j + p_k) |⟨j|n|k⟩|²` over the eigenbasis of `ρ`.
pub fn qfi(rho: &DensityMatrix) -> Result<f64> {
    let (p, u) = linalg::eigh(&rho.mat)?;
    let d = p.len();
    // ⟨j|n|k⟩ = Σ_m conj(u_mj) m u_mk
    let nu = CMat::from_fn(d, d, |m, k| u[(m, k)] * (m as f64));
    let nk = u.adjoint() * &nu;
    let mut f = 0.0;
    for j in 0..d {
        for k in 0..d {
            let s = p[j] + p[k];
            if s < 1e-12 {
                continue;
            }
            let dp = p[j] - p[k];
            f += 2.0 * dp * dp / s * nk[(j, k)].norm_sqr();
        }
    }
    Ok(f.max(0.0))
}

/// `4 Var(n)`.
pub fn qfi_pure(psi: &Ket) -> f64 {
    4.0 * psi.var_n()
}

/// `F_Q / 4⟨n⟩`.
pub fn enhancement(qfi: f64, mean_n: f64) -> Result<f64> {
    if mean_n.abs() < 1e-15 {
        return Err(Error::Degenerate("enhancement undefined for <n> = 0".into()));
    }
    Ok(qfi / (4.0 * mean_n))
}

/// QFI of `p|Ψ+⟩⟨Ψ+| + (1−p)|Ψ−⟩⟨Ψ−| + c|Ψ+⟩⟨Ψ−| + c*|Ψ−⟩⟨Ψ+|`.
pub fn qfi_dfs(p: f64, coh: c64, pair: &StationaryPair) -> Result<f64> {
    let bound = p * (1.0 - p);
    let c2 = coh.norm_sqr();
    if !(0.0..=1.0).contains(&p) || c2 > bound + 1e-15 {
        return Err(Error::InvalidCoherence { c2, bound });
    }
    let (np, nm) = (pair.psi_plus.mean_n(), pair.psi_minus.mean_n());
    let fp = qfi_pure(&pair.psi_plus);
    let fm = qfi_pure(&pair.psi_minus);
    Ok(p * fp + (1.0 - p) * fm + 4.0 * c2 * (np - nm).powi(2))
}

/// Density matrix `p|Ψ+⟩⟨Ψ+| + (1−p)|Ψ−⟩⟨Ψ−| + c|Ψ+⟩⟨Ψ−| + h.c.`.
pub fn dfs_density(p: f64, coh: c64, pair: &StationaryPair) -> CMat {
    let [pp, mm, pm, mp] = pair.dfs_basis();
    linalg::scale(linalg::r(p), &pp)
        + linalg::scale(linalg::r(1.0 - p), &mm)
        + linalg::scale(coh, &pm)
        + linalg::scale(coh.conj(), &mp)
}

fn phase_shifted(rho: &DensityMatrix, dphi: f64) -> DensityMatrix {
    let m = &rho.mat;
    DensityMatrix::from_raw(CMat::from_fn(m.nrows(), m.ncols(), |j, k| {
        m[(j, k)] * c64::from_polar(1.0, -dphi * (j as f64 - k as f64))
    }))
}

/// Finite-difference QFI from the Uhlmann fidelity between `ρ` and its phase-shifted
/// copy, Richardson-extrapolated over `dphi` and `dphi/2`.
pub fn qfi_fd_oracle(rho: &DensityMatrix, dphi: f64) -> Result<f64> {
    if !(dphi > 0.0) {
        return Err(Error::Numerical(format!("dphi must be > 0, got {dphi}")));
    }
    let q = |h: f64| -> Result<f64> {
        let f = fidelity_unclamped(rho, &phase_shifted(rho, h))?;
        Ok(8.0 * (1.0 - f) / (h * h))
    };
    let (q1, q2) = (q(dphi)?, q(dphi / 2.0)?);
    let est = (4.0 * q2 - q1) / 3.0;
    if !est.is_finite() {
        return Err(Error::Numerical("non-finite fidelity estimate".into()));
    }
    Ok(est)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeReport {
    pub start: usize,
    pub end: usize,
    pub weight: f64,
    pub mean_n: f64,
    pub qfi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultimodalReport {
    pub modes: Vec<ModeReport>,
    pub within: f64,
    pub cross: f64,
    pub total: f64,
}

/// Splits a pure state into photon-number windows `[b_k, b_{k+1})` and returns
/// `Σ p_k F_k` and the cross term `4 Σ_{k<k'} p_k p_{k'} (⟨n⟩_k − ⟨n⟩_{k'})²`.
pub fn qfi_multimodal_decomposition(psi: &Ket, boundaries: &[usize]) -> Result<MultimodalReport> {
    let n = psi.dim();
    if boundaries.len() < 2 || boundaries[0] != 0 || *boundaries.last().unwrap() != n {
        return Err(Error::Partition(format!(
            "boundaries must start at 0 and end at {n}, got {boundaries:?}"
        )));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Partition("boundaries must be strictly increasing".into()));
    }
    let probs = psi.probabilities();
    let mut modes = Vec::new();
    for w in boundaries.windows(2) {
        let (a, b) = (w[0], w[1]);
        let weight: f64 = probs[a..b].iter().sum();
        let (mean, var) = if weight > 0.0 {
            let m1: f64 = (a..b).map(|k| k as f64 * probs[k]).sum::<f64>() / weight;
            let m2: f64 = (a..b).map(|k| (k * k) as f64 * probs[k]).sum::<f64>() / weight;
            (m1, m2 - m1 * m1)
        } else {
            (0.0, 0.0)
        };
        modes.push(ModeReport { start: a, end: b, weight, mean_n: mean, qfi: 4.0 * var });
    }
    let within: f64 = modes.iter().map(|m| m.weight * m.qfi).sum();
    let mut cross = 0.0;
    for i in 0..modes.len() {
        for j in i + 1..modes.len() {
            cross += 4.0 * modes[i].weight * modes[j].weight * (modes[i].mean_n - modes[j].mean_n).powi(2);
        }
    }
    Ok(MultimodalReport { modes, within, cross, total: within + cross })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, fock_state, FockDim};
    use crate::linalg::{c, r};

    #[test]
    fn coherent_and_fock() {
        let d = FockDim::new(30).unwrap();
        let coh = coherent_state(d, c(0.6, 0.8)).unwrap();
        assert!((qfi(&coh.to_density()).unwrap() - 4.0).abs() < 1e-8);
        assert!((qfi_pure(&coh) - 4.0).abs() < 1e-8);
        assert!(qfi(&fock_state(d, 3).to_density()).unwrap().abs() < 1e-12);
        let mix = DensityMatrix::new(linalg::diag_real(&{
            let mut v = vec![0.0; 30];
            v[0] = 0.5;
            v[2] = 0.5;
            v
        }))
        .unwrap();
        assert!(qfi(&mix).unwrap().abs() < 1e-12);
        let fd = qfi_fd_oracle(&coh.to_density(), 1e-4).unwrap();
        assert!((fd - 4.0).abs() < 1e-4, "{fd}");
    }

    #[test]
    fn two_fock_modes() {
        let s = 0.5f64.sqrt();
        let mut amps = vec![r(0.0); 6];
        amps[0] = r(s);
        amps[4] = r(s);
        let psi = Ket::from_amps(&amps);
        let rep = qfi_multimodal_decomposition(&psi, &[0, 2, 6]).unwrap();
        assert!((rep.total - 16.0).abs() < 1e-12);
        assert!((rep.total - qfi_pure(&psi)).abs() < 1e-12);
        assert!(qfi_multimodal_decomposition(&psi, &[0, 3]).is_err());
    }
}

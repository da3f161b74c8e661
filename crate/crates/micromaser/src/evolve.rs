//! Time evolution, generator spectra and the full (5+1)-level model.

use serde::Serialize;

use crate::channels::{AtomState, KrausSet, Superoperator};
use crate::error::{Error, Result};
use crate::fock::{fidelity, DensityMatrix, FockDim};
use crate::linalg::{self, c64, r, CCol, CMat, I, ZERO};

/// Logged states along one propagation. `times` holds `t` or the atom count `k`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("empty trajectory")
    }

    /// Columns `t, trace, purity, mean_n, parity, fidelity` (fidelity blank without target).
    pub fn to_csv(&self, header: &str, target: Option<&DensityMatrix>) -> Result<String> {
        let mut out = String::from(header);
        out.push_str("t,trace,purity,mean_n,parity,fidelity\n");
        for (t, rho) in self.times.iter().zip(&self.states) {
            let f = match target {
                Some(s) => fmt17(fidelity(rho, s)?),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(*t),
                fmt17(rho.trace().re),
                fmt17(rho.purity()),
                fmt17(rho.mean_n()),
                fmt17(rho.parity()),
                f
            ));
        }
        Ok(out)
    }
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn renormalize(m: &mut CMat) {
    let tr = linalg::trace(m).re;
    if tr != 0.0 && (tr - 1.0).abs() > 1e-13 {
        *m = linalg::scale(r(1.0 / tr), m);
    }
}

/// `k` applications of `map`, logging every `stride` steps and the final step.
pub fn evolve_discrete(map: &Superoperator, rho: &DensityMatrix, k: u64, stride: u64) -> Trajectory {
    let stride = stride.max(1);
    let n = rho.dim();
    let mut v = linalg::vec(&rho.mat);
    let mut traj = Trajectory { times: vec![0.0], states: vec![rho.clone()] };
    for step in 1..=k {
        v = &map.matrix * &v;
        if step % 1024 == 0 {
            let mut m = linalg::hermitize(&linalg::unvec(&v, n));
            renormalize(&mut m);
            v = linalg::vec(&m);
        }
        if step % stride == 0 || step == k {
            traj.times.push(step as f64);
            traj.states.push(DensityMatrix::from_raw(linalg::unvec(&v, n)));
        }
    }
    traj
}

/// Same as [`evolve_discrete`] but applying Kraus operators directly (`O(n³)` per atom).
pub fn evolve_kraus(kraus: &KrausSet, rho: &DensityMatrix, k: u64, stride: u64) -> Trajectory {
    let stride = stride.max(1);
    let mut m = rho.mat.clone();
    let mut traj = Trajectory { times: vec![0.0], states: vec![rho.clone()] };
    for step in 1..=k {
        m = kraus.apply(&m);
        if step % 1024 == 0 {
            m = linalg::hermitize(&m);
            renormalize(&mut m);
        }
        if step % stride == 0 || step == k {
            traj.times.push(step as f64);
            traj.states.push(DensityMatrix::from_raw(m.clone()));
        }
    }
    traj
}

/// States after each atom count in `ks` (ascending), via cached binary powers of the map.
pub fn evolve_checkpoints(map: &Superoperator, rho: &DensityMatrix, ks: &[u64]) -> Result<Trajectory> {
    if ks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("checkpoints must be ascending".into()));
    }
    let n = rho.dim();
    let mut powers = vec![map.matrix.clone()];
    let mut v = linalg::vec(&rho.mat);
    let mut done = 0u64;
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new() };
    for &k in ks {
        let mut d = k - done;
        let mut bit = 0;
        while d > 0 {
            while powers.len() <= bit {
                let last = powers.last().unwrap();
                powers.push(last * last);
            }
            if d & 1 == 1 {
                v = &powers[bit] * &v;
            }
            d >>= 1;
            bit += 1;
        }
        done = k;
        let mut m = linalg::hermitize(&linalg::unvec(&v, n));
        renormalize(&mut m);
        v = linalg::vec(&m);
        traj.times.push(k as f64);
        traj.states.push(DensityMatrix::from_raw(m));
    }
    Ok(traj)
}

/// Atoms needed until `F(ρ_k, target) ≥ threshold`, or `None` within `k_max`.
pub fn atoms_to_fidelity(
    kraus: &KrausSet,
    rho: &DensityMatrix,
    target: &DensityMatrix,
    threshold: f64,
    k_max: u64,
) -> Result<Option<u64>> {
    let mut m = rho.mat.clone();
    for k in 0..=k_max {
        if k > 0 {
            m = kraus.apply(&m);
        }
        if fidelity(&DensityMatrix::from_raw(m.clone()), target)? >= threshold {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Dense propagation is used while the superoperator has at most this many rows.
pub const DENSE_LIMIT: usize = 4096;

/// `e^{tL}ρ` at each of `times` (ascending, ≥ 0).
pub fn evolve_continuous(gen: &Superoperator, rho: &DensityMatrix, times: &[f64]) -> Result<Trajectory> {
    if times.windows(2).any(|w| w[0] > w[1]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("times must be ascending and non-negative".into()));
    }
    let n = rho.dim();
    let mut v = linalg::vec(&rho.mat);
    let mut t_now = 0.0;
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new() };
    for &t in times {
        let dt = t - t_now;
        if dt > 0.0 {
            v = if gen.matrix.nrows() <= DENSE_LIMIT {
                let e = linalg::expm(&linalg::scale(r(dt), &gen.matrix));
                &e * &v
            } else {
                rk45(&gen.matrix, v, dt, 1e-9)?
            };
        }
        t_now = t;
        let mut m = linalg::hermitize(&linalg::unvec(&v, n));
        renormalize(&mut m);
        v = linalg::vec(&m);
        traj.times.push(t);
        traj.states.push(DensityMatrix::from_raw(m));
    }
    Ok(traj)
}

fn axpy(y: &mut CCol, s: f64, x: &CCol) {
    for i in 0..y.nrows() {
        y[i] += x[i] * s;
    }
}

/// Dormand–Prince 5(4) integration of `v' = A v` over `[0, t]`.
pub fn rk45(a: &CMat, mut v: CCol, t: f64, tol: f64) -> Result<CCol> {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut h = (t / 100.0).min(1.0 / linalg::norm_one(a).max(1e-300));
    let mut s = 0.0;
    let mut steps = 0usize;
    while s < t {
        steps += 1;
        if steps > 10_000_000 {
            return Err(Error::Convergence("rk45 step budget exhausted".into()));
        }
        h = h.min(t - s);
        let mut k: Vec<CCol> = vec![a * &v];
        for row in C.iter() {
            let mut y = v.clone();
            for (j, &cj) in row.iter().enumerate().take(k.len()) {
                if cj != 0.0 {
                    axpy(&mut y, h * cj, &k[j]);
                }
            }
            k.push(a * &y);
        }
        // k[6] is the derivative at the fifth-order solution
        let mut y5 = v.clone();
        for (j, &cj) in C[5].iter().enumerate() {
            if cj != 0.0 {
                axpy(&mut y5, h * cj, &k[j]);
            }
        }
        let mut err = CCol::zeros(v.nrows());
        for (j, &ej) in E.iter().enumerate() {
            if ej != 0.0 {
                axpy(&mut err, h * ej, &k[j]);
            }
        }
        let scale = 1.0 + linalg::col_norm(&v);
        let e = linalg::col_norm(&err) / scale;
        if !e.is_finite() {
            return Err(Error::Convergence("rk45 produced non-finite values".into()));
        }
        if e <= tol {
            s += h;
            v = y5;
        }
        let fac = if e == 0.0 { 5.0 } else { (0.9 * (tol / e).powf(0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h < 1e-14 * t {
            return Err(Error::Convergence(format!("rk45 step size underflow at t = {s}")));
        }
    }
    Ok(v)
}

/// Log-spaced times `t0·2^{j/per_octave}` up to `t1`, propagated by squaring
/// `E(2t) = E(t)²` from `per_octave` seed exponentials.
pub fn log_grid_evolution(
    gen: &Superoperator,
    rho: &DensityMatrix,
    t0: f64,
    t1: f64,
    per_octave: usize,
) -> Result<Trajectory> {
    if !(t0 > 0.0 && t1 >= t0) || per_octave == 0 {
        return Err(Error::InvalidArgument("need 0 < t0 <= t1 and per_octave >= 1".into()));
    }
    let n = rho.dim();
    let v0 = linalg::vec(&rho.mat);
    let octaves = (t1 / t0).log2().floor() as usize;
    let mut points: Vec<(f64, CMat)> = Vec::new();
    for s in 0..per_octave {
        let ts = t0 * 2f64.powf(s as f64 / per_octave as f64);
        let mut e = linalg::expm(&linalg::scale(r(ts), &gen.matrix));
        for j in 0..=octaves {
            let t = ts * 2f64.powi(j as i32);
            if t > t1 * (1.0 + 1e-12) {
                break;
            }
            let mut m = linalg::hermitize(&linalg::unvec(&(&e * &v0), n));
            renormalize(&mut m);
            points.push((t, m));
            e = &e * &e;
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Trajectory {
        times: points.iter().map(|p| p.0).collect(),
        states: points.into_iter().map(|p| DensityMatrix::from_raw(p.1)).collect(),
    })
}

/// Discrete analogue of [`log_grid_evolution`]: states after `2^j` atoms, `j = 0..=doublings`.
pub fn log_grid_atoms(map: &Superoperator, rho: &DensityMatrix, doublings: u32) -> Trajectory {
    let n = rho.dim();
    let v0 = linalg::vec(&rho.mat);
    let mut e = map.matrix.clone();
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new() };
    for j in 0..=doublings {
        let mut m = linalg::hermitize(&linalg::unvec(&(&e * &v0), n));
        renormalize(&mut m);
        traj.times.push(2f64.powi(j as i32));
        traj.states.push(DensityMatrix::from_raw(m));
        if j < doublings {
            e = &e * &e;
        }
    }
    traj
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// Sorted by descending real part.
    pub eigenvalues: Vec<c64>,
    /// `Re λ_k / Re λ_{k+1}`, `NaN` where either real part vanishes.
    pub gaps: Vec<f64>,
    /// Indices `k` (0-based) with a gap ratio below 0.1.
    pub gap_flags: Vec<usize>,
    #[serde(skip)]
    pub right_modes: Vec<CMat>,
    #[serde(skip)]
    pub left_modes: Vec<CMat>,
}

/// Ratios below this are flagged as metastable gaps.
pub const GAP_RATIO: f64 = 0.1;

fn sorted_eig(a: &CMat) -> Result<Vec<(c64, CCol)>> {
    let (vals, vecs) = linalg::eig(a)?;
    let mut pairs: Vec<(c64, CCol)> = vals
        .into_iter()
        .enumerate()
        .map(|(j, v)| (v, vecs.col(j).to_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
    Ok(pairs)
}

/// Leading `count` eigenvalues of a generator, right modes and left modes.
pub fn spectrum(gen: &Superoperator, count: usize) -> Result<SpectrumReport> {
    let n = gen.n;
    let right = sorted_eig(&gen.matrix)?;
    let count = count.min(right.len());
    let eigenvalues: Vec<c64> = right.iter().take(count).map(|p| p.0).collect();
    let left = sorted_eig(&linalg::transpose(&gen.matrix))?;
    let scale = linalg::norm_max(&gen.matrix).max(1e-300);
    let mut gaps = Vec::new();
    let mut gap_flags = Vec::new();
    for k in 0..count.saturating_sub(1) {
        let (a, b) = (eigenvalues[k].re, eigenvalues[k + 1].re);
        if a.abs() <= 1e-12 * scale || b.abs() <= 1e-12 * scale {
            gaps.push(f64::NAN);
        } else {
            let g = a / b;
            if g < GAP_RATIO {
                gap_flags.push(k);
            }
            gaps.push(g);
        }
    }
    let to_mat = |v: &CCol| linalg::unvec(v, n);
    Ok(SpectrumReport {
        right_modes: right.iter().take(count).map(|p| to_mat(&p.1)).collect(),
        left_modes: left.iter().take(count).map(|p| to_mat(&p.1)).collect(),
        eigenvalues,
        gaps,
        gap_flags,
    })
}

/// Parameters of the five-level atom plus auxiliary level coupled to the cavity.
/// Levels `0…4` are coupled by `g_j a σ_{j,j−1}`, level `a` to level 3 by the
/// classical field `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub g: [c64; 4],
    /// `Δ₁…Δ₄`.
    pub detuning: [f64; 4],
    /// `δ`.
    pub delta_a: f64,
    pub big_g: c64,
    pub tau: f64,
}

impl ModelParams {
    /// Uniform couplings `g`, `Δ₁ = Δ₂ = −Δ₃ = −Δ₄ = Δ`, `G = 2g`, `δ = −2Δ`.
    pub fn uniform(g: f64, delta: f64, tau: f64) -> Self {
        ModelParams {
            g: [r(g); 4],
            detuning: [delta, delta, -delta, -delta],
            delta_a: -2.0 * delta,
            big_g: r(2.0 * g),
            tau,
        }
    }

    /// Uniform model with `τ` chosen so that the effective `|λ|τ = phi`.
    pub fn uniform_for_phi(g: f64, delta: f64, phi: f64) -> Self {
        Self::uniform(g, delta, phi * delta.abs() / (g * g))
    }

    /// Only `g₂`, `g₃` nonzero.
    pub fn three_level(g2: c64, g3: c64, delta: f64, tau: f64) -> Self {
        ModelParams {
            g: [ZERO, g2, g3, ZERO],
            detuning: [delta, delta, -delta, -delta],
            delta_a: -2.0 * delta,
            big_g: ZERO,
            tau,
        }
    }

    /// `Δ = Δ₂`.
    pub fn delta(&self) -> f64 {
        self.detuning[1]
    }

    pub fn check_resonance(&self) -> Result<()> {
        let [_, d2, d3, _] = self.detuning;
        if (d2 + d3).abs() > 1e-12 * d2.abs().max(1.0) {
            return Err(Error::Validation {
                field: "detuning".into(),
                message: format!("two-photon resonance requires Δ₂ = −Δ₃, got {d2} and {d3}"),
            });
        }
        if d2 == 0.0 {
            return Err(Error::Validation { field: "detuning".into(), message: "Δ₂ must be nonzero".into() });
        }
        Ok(())
    }

    /// `λ = −g₂g₃/Δ`.
    pub fn lambda(&self) -> c64 {
        -(self.g[1] * self.g[2]) / self.delta()
    }

    /// Integrated coupling `λτ` of the effective two-photon model, which must be real.
    pub fn effective_phi(&self) -> Result<f64> {
        let l = self.lambda() * self.tau;
        if l.im.abs() > 1e-12 * l.norm().max(1.0) {
            return Err(Error::InvalidArgument(format!("λτ = {l} is not real")));
        }
        Ok(l.re)
    }

    /// Bare energies `E₀…E₄, E_a` in the rotating frame.
    pub fn energies(&self) -> [f64; 6] {
        let [d1, d2, d3, d4] = self.detuning;
        [0.0, d1, d1 + d2, d1 + d2 + d3, d1 + d2 + d3 + d4, self.delta_a + d1 + d2 + d3]
    }

    /// Largest `|g_j/Δ_j|` and `|G/δ|`.
    pub fn far_detuned_ratio(&self) -> f64 {
        let mut m = 0.0f64;
        for (gj, dj) in self.g.iter().zip(self.detuning) {
            if gj.norm() > 0.0 {
                m = m.max(gj.norm() / dj.abs());
            }
        }
        if self.big_g.norm() > 0.0 {
            m = m.max(self.big_g.norm() / self.delta_a.abs());
        }
        m
    }
}

/// Level index of `a` in block bases.
pub const LEVEL_A: usize = 5;
pub const FULL_LABELS: [&str; 6] = ["0", "g", "2", "e", "4", "a"];

/// Photons accompanying atomic level `j` in excitation block `N`.
fn photons(level: usize, block: usize) -> Option<usize> {
    let excitations = if level == LEVEL_A { 3 } else { level };
    block.checked_sub(excitations)
}

/// One excitation block: the retained levels and the Hamiltonian among them.
pub fn block_hamiltonian(p: &ModelParams, block: usize, n: usize) -> (Vec<usize>, CMat) {
    let levels: Vec<usize> = (0..6).filter(|&l| photons(l, block).is_some_and(|m| m < n)).collect();
    let e = p.energies();
    let d = levels.len();
    let mut h = linalg::zeros(d, d);
    for (i, &li) in levels.iter().enumerate() {
        h[(i, i)] = r(e[li]);
    }
    let idx = |l: usize| levels.iter().position(|&x| x == l);
    for j in 1..=4 {
        // g_j √m |j, m−1⟩⟨j−1, m|
        if let (Some(hi), Some(lo)) = (idx(j), idx(j - 1)) {
            let m = photons(j - 1, block).unwrap();
            let amp = p.g[j - 1] * (m as f64).sqrt();
            h[(hi, lo)] += amp;
            h[(lo, hi)] += amp.conj();
        }
    }
    if let (Some(a), Some(three)) = (idx(LEVEL_A), idx(3)) {
        h[(a, three)] += p.big_g;
        h[(three, a)] += p.big_g.conj();
    }
    (levels, h)
}

/// Kraus operators `M_j = ⟨j|U(τ)|ψ_at⟩`, `j ∈ {0, g, 2, e, 4, a}`, of the full model.
/// Photon numbers `≥ n_max` are removed from the joint space, which keeps `U` unitary.
pub fn full_model_map(p: &ModelParams, atom: AtomState, dim: FockDim) -> Result<KrausSet> {
    p.check_resonance()?;
    if p.far_detuned_ratio() > 0.3 {
        log::warn!("far-detuned ratio {:.3} > 0.3", p.far_detuned_ratio());
    }
    let n = dim.n();
    let mut ops = vec![linalg::zeros(n, n); 6];
    let input = [(1usize, atom.c_g), (3usize, atom.c_e)];
    for block in 0..n + 4 {
        let (levels, h) = block_hamiltonian(p, block, n);
        if levels.is_empty() {
            continue;
        }
        let (vals, v) = linalg::eigh(&h)?;
        let ph: Vec<c64> = vals.iter().map(|&x| c64::from_polar(1.0, -x * p.tau)).collect();
        let u = &v * linalg::diag(&ph) * v.adjoint();
        for &(l_in, amp) in &input {
            let Some(col) = levels.iter().position(|&x| x == l_in) else { continue };
            let m_in = photons(l_in, block).unwrap();
            for (row, &l_out) in levels.iter().enumerate() {
                let m_out = photons(l_out, block).unwrap();
                ops[l_out][(m_out, m_in)] += amp * u[(row, col)];
            }
        }
    }
    Ok(KrausSet::new(ops, FULL_LABELS.iter().map(|s| s.to_string()).collect()))
}

/// `F(ρ(t), target)` along a trajectory.
pub fn fidelity_trace(traj: &Trajectory, target: &DensityMatrix) -> Result<Vec<(f64, f64)>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| Ok((t, fidelity(s, target)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plateau {
    pub t_start: f64,
    pub t_end: f64,
    pub decades: f64,
    pub mean_fidelity: f64,
}

/// Maximal windows of a log-time trace where `|dF/d log₁₀ t| < slope` between
/// consecutive samples, at least `min_decades` wide.
pub fn detect_plateaus(trace: &[(f64, f64)], slope: f64, min_decades: f64) -> Vec<Plateau> {
    let pts: Vec<(f64, f64)> = trace.iter().copied().filter(|p| p.0 > 0.0).collect();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let close = |s: usize, e: usize, out: &mut Vec<Plateau>| {
        let decades = (pts[e].0 / pts[s].0).log10();
        if decades >= min_decades {
            let mean = pts[s..=e].iter().map(|p| p.1).sum::<f64>() / (e - s + 1) as f64;
            out.push(Plateau { t_start: pts[s].0, t_end: pts[e].0, decades, mean_fidelity: mean });
        }
    };
    for i in 0..pts.len().saturating_sub(1) {
        let dl = (pts[i + 1].0 / pts[i].0).log10();
        let flat = dl > 0.0 && ((pts[i + 1].1 - pts[i].1) / dl).abs() < slope;
        match (flat, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                close(s, i, &mut out);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        close(s, pts.len() - 1, &mut out);
    }
    out
}

/// `e^{−iHτ}` on one excitation block, by dense exponential.
pub fn block_unitary(p: &ModelParams, block: usize, n: usize) -> Result<(Vec<usize>, CMat)> {
    let (levels, h) = block_hamiltonian(p, block, n);
    Ok((levels, linalg::expm(&linalg::scale(-I * p.tau, &h))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{discrete_map, generator_l0, kraus_two_photon, loss_dissipator};
    use crate::fock::{coherent_state, fock_state, parity_op};
    use crate::linalg::c;

    fn dim(n: usize) -> FockDim {
        FockDim::new(n).unwrap()
    }

    #[test]
    fn zero_steps_and_times() {
        let d = dim(6);
        let k = kraus_two_photon(AtomState::from_excited(0.4).unwrap(), 0.3, d);
        let rho = fock_state(d, 1).to_density();
        let t = evolve_discrete(&discrete_map(&k), &rho, 0, 1);
        assert_eq!(t.len(), 1);
        assert!(linalg::norm_max(&(&t.states[0].mat - &rho.mat)) == 0.0);
        let c = evolve_continuous(&generator_l0(&k, 1.0), &rho, &[0.0]).unwrap();
        assert!(linalg::norm_max(&(&c.states[0].mat - &rho.mat)) < 1e-15);
    }

    #[test]
    fn kraus_and_superoperator_paths_agree() {
        let d = dim(10);
        let k = kraus_two_photon(AtomState::from_excited(0.6).unwrap(), 0.7, d);
        let rho = fock_state(d, 0).to_density();
        let a = evolve_discrete(&discrete_map(&k), &rho, 37, 10);
        let b = evolve_kraus(&k, &rho, 37, 10);
        let cpt = evolve_checkpoints(&discrete_map(&k), &rho, &[10, 20, 30, 37]).unwrap();
        assert_eq!(a.times, b.times[..].to_vec());
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(linalg::norm_max(&(&x.mat - &y.mat)) < 1e-12);
        }
        for (x, y) in a.states[1..].iter().zip(&cpt.states) {
            assert!(linalg::norm_max(&(&x.mat - &y.mat)) < 1e-12);
        }
    }

    #[test]
    fn loss_on_coherent_state() {
        let d = dim(30);
        let kappa = 0.7;
        let alpha = c(1.1, -0.4);
        let gen = loss_dissipator(kappa, 0.0, d);
        let rho = coherent_state(d, alpha).unwrap().to_density();
        let ts = [0.5, 1.3, 2.0];
        let traj = evolve_continuous(&gen, &rho, &ts).unwrap();
        for (t, s) in ts.iter().zip(&traj.states) {
            let exact = coherent_state(d, alpha * (-kappa * t / 2.0).exp()).unwrap().to_density();
            assert!(linalg::norm_max(&(&s.mat - &exact.mat)) < 1e-6);
        }
        // stepper path
        let v = rk45(&gen.matrix, linalg::vec(&rho.mat), 1.3, 1e-10).unwrap();
        let exact = coherent_state(d, alpha * (-kappa * 1.3 / 2.0).exp()).unwrap().to_density();
        assert!(linalg::norm_max(&(&linalg::unvec(&v, 30) - &exact.mat)) < 1e-6);
    }

    #[test]
    fn log_grid_matches_direct() {
        let d = dim(8);
        let k = kraus_two_photon(AtomState::from_excited(0.3).unwrap(), 0.5, d);
        let gen = generator_l0(&k, 1.0).add(&loss_dissipator(0.01, 0.0, d));
        let rho = fock_state(d, 1).to_density();
        let lg = log_grid_evolution(&gen, &rho, 0.1, 100.0, 3).unwrap();
        let direct = evolve_continuous(&gen, &rho, &lg.times).unwrap();
        for (a, b) in lg.states.iter().zip(&direct.states) {
            assert!(linalg::norm_max(&(&a.mat - &b.mat)) < 1e-9);
        }
        let la = log_grid_atoms(&discrete_map(&k), &rho, 6);
        let ks: Vec<u64> = (0..=6).map(|j| 1u64 << j).collect();
        let cp = evolve_checkpoints(&discrete_map(&k), &rho, &ks).unwrap();
        for (a, b) in la.states.iter().zip(&cp.states) {
            assert!(linalg::norm_max(&(&a.mat - &b.mat)) < 1e-11);
        }
    }

    #[test]
    fn loss_spectrum_and_gaps() {
        let d = dim(5);
        let kappa = 0.4;
        let rep = spectrum(&loss_dissipator(kappa, 0.0, d), 25).unwrap();
        let mut expected: Vec<f64> = Vec::new();
        for n in 0..5 {
            for m in 0..5 {
                expected.push(-kappa * (n + m) as f64 / 2.0);
            }
        }
        expected.sort_by(|a, b| b.total_cmp(a));
        for (e, x) in rep.eigenvalues.iter().zip(&expected) {
            assert!((e.re - x).abs() < 1e-8 && e.im.abs() < 1e-8);
        }
        assert_eq!(rep.right_modes.len(), 25);
    }

    #[test]
    fn discrete_continuous_eigenvalues() {
        let d = dim(6);
        let nu = 2.5;
        let k = kraus_two_photon(AtomState::from_excited(0.5).unwrap(), 0.4, d);
        let mut dv = linalg::eigvals(&discrete_map(&k).matrix).unwrap();
        let mut cv = linalg::eigvals(&generator_l0(&k, nu).matrix).unwrap();
        let key = |z: &c64| (z.re * 1e6).round() as i64 * 1_000_000_000 + (z.im * 1e6).round() as i64;
        dv.iter_mut().for_each(|z| *z = (*z - 1.0) * nu);
        dv.sort_by_key(key);
        cv.sort_by_key(key);
        for (a, b) in dv.iter().zip(&cv) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn full_model_structure() {
        let d = dim(12);
        let p = ModelParams::uniform_for_phi(1.0, 10.0, 0.8);
        let atom = AtomState::from_excited(0.3).unwrap();
        let k = full_model_map(&p, atom, d).unwrap();
        assert_eq!(k.ops.len(), 6);
        assert!(k.completeness_residual() < 1e-10);
        let par = parity_op(d).mat;
        for j in 0..5 {
            let s = if j % 2 == 0 { -1.0 } else { 1.0 };
            let lhs = &k.ops[j] * &par;
            let rhs = linalg::scale(r(s), &(&par * &k.ops[j]));
            assert!(linalg::norm_max(&(&lhs - &rhs)) < 1e-12, "level {j}");
        }
        let lhs = &k.ops[LEVEL_A] * &par;
        assert!(linalg::norm_max(&(&lhs - &(&par * &k.ops[LEVEL_A]))) < 1e-12);
        assert!(ModelParams { detuning: [1.0, 1.0, 2.0, 1.0], ..p }.check_resonance().is_err());
    }

    #[test]
    fn full_model_approaches_two_photon() {
        // compare on a state supported well below the truncation edge
        let d = dim(14);
        let atom = AtomState::from_excited(0.3).unwrap();
        let mut rho = coherent_state(d, c(0.8, 0.3)).unwrap().to_density().mat;
        for i in 0..14 {
            for j in 0..14 {
                if i > 5 || j > 5 {
                    rho[(i, j)] = ZERO;
                }
            }
        }
        let mut prev = f64::INFINITY;
        for ratio in [20.0, 40.0, 80.0] {
            let p = ModelParams::uniform_for_phi(1.0, ratio, 1.0);
            let k = full_model_map(&p, atom, d).unwrap();
            let two = kraus_two_photon(atom, p.effective_phi().unwrap(), d);
            let diff = linalg::norm_max(&(&k.apply(&rho) - &two.apply(&rho)));
            assert!(diff < prev / 3.0, "{ratio}: {diff}");
            prev = diff;
        }
        assert!(prev < 1e-3, "{prev}");
    }

    #[test]
    fn plateau_detector() {
        let trace: Vec<(f64, f64)> = (0..60)
            .map(|j| {
                let t = 10f64.powf(j as f64 / 10.0);
                let f = if t < 10.0 { t / 10.0 } else if t < 1e4 { 1.0 } else { 0.5 };
                (t, f)
            })
            .collect();
        let p = detect_plateaus(&trace, 0.01, 1.0);
        assert_eq!(p.len(), 2);
        assert!((p[1].mean_fidelity - 0.5).abs() < 1e-12);
        assert!((p[0].t_start - 10.0).abs() < 1e-9 && (p[0].decades - 2.9).abs() < 1e-9);
    }
}

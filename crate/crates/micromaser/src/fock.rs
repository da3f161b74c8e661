//! Truncated Fock space: ladder operators, canonical states, fidelity and the
//! Wigner function.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, c64, r, CCol, CMat, ONE, ZERO};

/// Coherent-state tail mass allowed beyond the truncation.
pub const TAIL_TOL: f64 = 1e-8;

/// Dimension of the truncated space, basis `|0⟩ … |n_max−1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FockDim(usize);

impl FockDim {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidArgument(format!("n_max must be >= 2, got {n_max}")));
        }
        Ok(FockDim(n_max))
    }

    #[inline]
    pub fn n(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpTag {
    Annihilation,
    Number,
    Parity,
    Displacement,
    Generic,
}

#[derive(Debug, Clone)]
pub struct Operator {
    pub mat: CMat,
    pub tag: OpTag,
}

impl Operator {
    pub fn generic(mat: CMat) -> Self {
        Operator { mat, tag: OpTag::Generic }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn dagger(&self) -> Operator {
        Operator::generic(linalg::dagger(&self.mat))
    }
}

/// State vector on the truncated space.
#[derive(Debug, Clone)]
pub struct Ket {
    pub amps: CCol,
}

impl Ket {
    pub fn from_amps(amps: &[c64]) -> Self {
        Ket { amps: linalg::col_from(amps) }
    }

    pub fn dim(&self) -> usize {
        self.amps.nrows()
    }

    pub fn norm(&self) -> f64 {
        linalg::col_norm(&self.amps)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < 1e-12
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Degenerate("cannot normalize a zero vector".into()));
        }
        for i in 0..self.amps.nrows() {
            self.amps[i] /= n;
        }
        Ok(self)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.amps[i].norm_sqr()).collect()
    }

    pub fn mean_n(&self) -> f64 {
        self.probabilities().iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn var_n(&self) -> f64 {
        let p = self.probabilities();
        let m: f64 = p.iter().enumerate().map(|(n, q)| n as f64 * q).sum();
        let m2: f64 = p.iter().enumerate().map(|(n, q)| (n * n) as f64 * q).sum();
        m2 - m * m
    }

    pub fn expect(&self, op: &CMat) -> c64 {
        linalg::inner(&self.amps, &(op * &self.amps))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_raw(linalg::outer(&self.amps, &self.amps))
    }
}

/// Density matrix on the truncated space.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub mat: CMat,
}

impl DensityMatrix {
    /// Validated constructor: Hermitian (1e-12), unit trace (1e-10), eigenvalues ≥ −1e-10.
    pub fn new(mat: CMat) -> Result<Self> {
        let rho = DensityMatrix { mat };
        rho.validate()?;
        Ok(rho)
    }

    /// Unchecked constructor for matrices produced by trusted pipelines.
    pub fn from_raw(mat: CMat) -> Self {
        DensityMatrix { mat }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mat.nrows();
        if self.mat.ncols() != n {
            return Err(Error::InvalidArgument("density matrix not square".into()));
        }
        let herm = linalg::norm_max(&(&self.mat - linalg::dagger(&self.mat)));
        if herm > 1e-12 {
            return Err(Error::InvalidArgument(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = linalg::trace(&self.mat);
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::InvalidArgument(format!("trace {tr} != 1")));
        }
        let (vals, _) = linalg::eigh(&self.mat)?;
        if vals[0] < -1e-10 {
            return Err(Error::InvalidArgument(format!("negative eigenvalue {:.3e}", vals[0])));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn fock(dim: FockDim, n: usize) -> Self {
        fock_state(dim, n).to_density()
    }

    pub fn trace(&self) -> c64 {
        linalg::trace(&self.mat)
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_prod(&self.mat, &self.mat).re
    }

    pub fn expect(&self, op: &CMat) -> c64 {
        linalg::trace_prod(&self.mat, op)
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).collect()
    }

    pub fn mean_n(&self) -> f64 {
        self.populations().iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn var_n(&self) -> f64 {
        let p = self.populations();
        let m: f64 = p.iter().enumerate().map(|(n, q)| n as f64 * q).sum();
        let m2: f64 = p.iter().enumerate().map(|(n, q)| (n * n) as f64 * q).sum();
        m2 - m * m
    }

    pub fn parity(&self) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(n, p)| if n % 2 == 0 { *p } else { -*p })
            .sum()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigh(&self.mat)?.0[0])
    }
}

pub fn annihilation_op(dim: FockDim) -> Operator {
    let n = dim.n();
    let mat = CMat::from_fn(n, n, |i, j| if j == i + 1 { r((j as f64).sqrt()) } else { ZERO });
    Operator { mat, tag: OpTag::Annihilation }
}

pub fn creation_op(dim: FockDim) -> Operator {
    annihilation_op(dim).dagger()
}

pub fn number_op(dim: FockDim) -> Operator {
    let d: Vec<f64> = (0..dim.n()).map(|k| k as f64).collect();
    Operator { mat: linalg::diag_real(&d), tag: OpTag::Number }
}

pub fn parity_op(dim: FockDim) -> Operator {
    let d: Vec<f64> = (0..dim.n()).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    Operator { mat: linalg::diag_real(&d), tag: OpTag::Parity }
}

pub fn fock_state(dim: FockDim, n: usize) -> Ket {
    let mut amps = vec![ZERO; dim.n()];
    amps[n.min(dim.n() - 1)] = ONE;
    Ket::from_amps(&amps)
}

/// Poisson mass of a coherent state with mean `|α|²` at photon numbers ≥ `n_max`.
pub fn coherent_tail_mass(alpha: c64, n_max: usize) -> f64 {
    let lam = alpha.norm_sqr();
    if lam == 0.0 {
        return 0.0;
    }
    let ln_lam = lam.ln();
    let mut total = 0.0;
    let mut ln_fact = (1..n_max).map(|k| (k as f64).ln()).sum::<f64>();
    let mut k = n_max;
    loop {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        let term = (-lam + k as f64 * ln_lam - ln_fact).exp();
        total += term;
        if (k as f64) > lam && term < 1e-20 * total.max(1e-300) || k > n_max + 100_000 {
            break;
        }
        k += 1;
    }
    total
}

fn check_tail(alpha: c64, dim: FockDim) -> Result<()> {
    let tail = coherent_tail_mass(alpha, dim.n());
    if tail >= TAIL_TOL {
        return Err(Error::Truncation { tail, n_max: dim.n() });
    }
    Ok(())
}

/// `exp(αa† − α*a)` on the truncated space.
pub fn displacement_op(dim: FockDim, alpha: c64) -> Result<Operator> {
    check_tail(alpha, dim)?;
    let a = annihilation_op(dim).mat;
    let gen = linalg::scale(alpha, &linalg::dagger(&a)) - linalg::scale(alpha.conj(), &a);
    Ok(Operator { mat: linalg::expm(&gen), tag: OpTag::Displacement })
}

fn coherent_amps(n: usize, alpha: c64) -> Vec<c64> {
    let mut amps = Vec::with_capacity(n);
    let mut cur = r((-alpha.norm_sqr() / 2.0).exp());
    for k in 0..n {
        amps.push(cur);
        cur = cur * alpha / ((k + 1) as f64).sqrt();
    }
    amps
}

pub fn coherent_state(dim: FockDim, alpha: c64) -> Result<Ket> {
    check_tail(alpha, dim)?;
    Ok(Ket::from_amps(&coherent_amps(dim.n(), alpha)))
}

/// Even (`parity = +1`) or odd (`parity = −1`) cat state `(|α⟩ ± |−α⟩)/√(2 ± 2e^{−2|α|²})`.
pub fn cat_state(dim: FockDim, alpha: c64, parity: i32) -> Result<Ket> {
    if parity != 1 && parity != -1 {
        return Err(Error::InvalidArgument(format!("parity must be ±1, got {parity}")));
    }
    if parity == -1 && alpha.norm() == 0.0 {
        return Err(Error::Degenerate("odd cat state undefined at alpha = 0".into()));
    }
    check_tail(alpha, dim)?;
    let plus = coherent_amps(dim.n(), alpha);
    let s = parity as f64;
    let norm = (2.0 + s * 2.0 * (-2.0 * alpha.norm_sqr()).exp()).sqrt();
    let amps: Vec<c64> = plus
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            (a + a * (s * sign)) / norm
        })
        .collect();
    Ok(Ket::from_amps(&amps))
}

/// Uhlmann fidelity `Tr √(√ρ σ √ρ)`, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    Ok(fidelity_unclamped(rho, sigma)?.clamp(0.0, 1.0))
}

/// Uhlmann fidelity as the nuclear norm of `√ρ √σ`, with eigenvalues below
/// `1e-13` of the largest treated as zero.
pub fn fidelity_unclamped(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let sr = linalg::sqrtm_psd_clipped(&rho.mat, 1e-13)?;
    let ss = linalg::sqrtm_psd_clipped(&sigma.mat, 1e-13)?;
    let s = (&sr * &ss)
        .singular_values()
        .map_err(|e| Error::Numerical(format!("{e:?}")))?;
    Ok(s.iter().sum())
}

/// Fidelity between a density matrix and a pure state, `√⟨ψ|ρ|ψ⟩`.
pub fn fidelity_pure(rho: &DensityMatrix, psi: &Ket) -> f64 {
    psi.expect(&rho.mat).re.max(0.0).sqrt().min(1.0)
}

/// Matrix elements `⟨m|D(β)|n⟩` for `m, n < n` of the untruncated displacement,
/// computed by the ladder recurrences `D_{m,n+1} = (√m D_{m−1,n} − β* D_{m,n})/√(n+1)`.
pub fn displacement_elements(n: usize, beta: c64) -> CMat {
    let mut d = CMat::zeros(n, n);
    let col0 = coherent_amps(n, beta);
    for m in 0..n {
        d[(m, 0)] = col0[m];
    }
    for k in 0..n.saturating_sub(1) {
        let s = ((k + 1) as f64).sqrt();
        for m in 0..n {
            let up = if m > 0 { d[(m - 1, k)] * (m as f64).sqrt() } else { ZERO };
            d[(m, k + 1)] = (up - beta.conj() * d[(m, k)]) / s;
        }
    }
    d
}

/// Rectangle and resolution of a Wigner grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { re_min: -4.0, re_max: 4.0, im_min: -4.0, im_max: 4.0, resolution: 161 }
    }
}

impl GridSpec {
    pub fn re_at(&self, j: usize) -> f64 {
        axis(self.re_min, self.re_max, self.resolution, j)
    }

    pub fn im_at(&self, i: usize) -> f64 {
        axis(self.im_min, self.im_max, self.resolution, i)
    }
}

fn axis(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if n <= 1 {
        lo
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

/// Wigner function sampled on a grid; `values[i][j]` is at `α = re_j + i·im_i`.
#[derive(Debug, Clone, Serialize)]
pub struct WignerGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub resolution: usize,
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            re_min: self.re_min,
            re_max: self.re_max,
            im_min: self.im_min,
            im_max: self.im_max,
            resolution: self.resolution,
        }
    }

    /// Riemann sum of W over the grid.
    pub fn integral(&self) -> f64 {
        let s = self.spec();
        let n = s.resolution.max(2) as f64;
        let dx = (s.re_max - s.re_min) / (n - 1.0);
        let dy = (s.im_max - s.im_min) / (n - 1.0);
        self.values.iter().flatten().sum::<f64>() * dx * dy
    }

    /// Largest `|W(α) − W(−α)|`, valid for grids symmetric about the origin.
    pub fn inversion_asymmetry(&self) -> f64 {
        let n = self.resolution;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.values[i][j] - self.values[n - 1 - i][n - 1 - j]).abs());
            }
        }
        worst
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::new();
        for line in header.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(
            out,
            "# re_min={:.17e} re_max={:.17e} im_min={:.17e} im_max={:.17e} resolution={}",
            self.re_min, self.re_max, self.im_min, self.im_max, self.resolution
        );
        for row in &self.values {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// `W(α) = (2/π) Tr[ρ D(α) P D(−α)]`, evaluated as `(2/π) Tr[ρ D(2α) P]`.
pub fn wigner(rho: &DensityMatrix, spec: GridSpec) -> Result<WignerGrid> {
    if !(spec.re_min.is_finite() && spec.re_max.is_finite() && spec.im_min.is_finite() && spec.im_max.is_finite()) {
        return Err(Error::InvalidArgument("grid bounds must be finite".into()));
    }
    let n = rho.dim();
    let res = spec.resolution;
    let mut values = vec![vec![0.0; res]; res];
    for (i, row) in values.iter_mut().enumerate() {
        let y = spec.im_at(i);
        for (j, cell) in row.iter_mut().enumerate() {
            let x = spec.re_at(j);
            let d = displacement_elements(n, c(2.0 * x, 2.0 * y));
            let mut acc = ZERO;
            for m in 0..n {
                for k in 0..n {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    acc += rho.mat[(k, m)] * d[(m, k)] * sign;
                }
            }
            *cell = 2.0 / std::f64::consts::PI * acc.re;
        }
    }
    Ok(WignerGrid {
        re_min: spec.re_min,
        re_max: spec.re_max,
        im_min: spec.im_min,
        im_max: spec.im_max,
        resolution: res,
        values,
    })
}

/// Single-point Wigner value.
pub fn wigner_at(rho: &DensityMatrix, alpha: c64) -> f64 {
    let n = rho.dim();
    let d = displacement_elements(n, alpha * 2.0);
    let mut acc = ZERO;
    for m in 0..n {
        for k in 0..n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += rho.mat[(k, m)] * d[(m, k)] * sign;
        }
    }
    2.0 / std::f64::consts::PI * acc.re
}

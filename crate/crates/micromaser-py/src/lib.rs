//! Python bindings for the micromaser library.

use micromaser::channels::AtomState;
use micromaser::cli::{self, Context, Format};
use micromaser::fock::{DensityMatrix, FockDim};
use micromaser::{metrology, steady, walls, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Coupling phase at which photon number `m` meets the wall with index `k`.
#[pyfunction]
fn phi_for_wall(m: u64, k: i64) -> f64 {
    walls::phi_for_wall(m, k)
}

/// Wall positions sharing the coupling of `(m1, k1)`, as decimal strings.
#[pyfunction]
#[pyo3(signature = (m1, k1, count = 3))]
fn wall_sequence(m1: u64, k1: i64, count: usize) -> PyResult<Vec<String>> {
    let seq = walls::wall_sequence(m1, k1, count).map_err(to_py)?;
    Ok(seq.walls.iter().map(|w| w.m.to_string()).collect())
}

/// Photon-number distribution of the pure stationary state with the given parity.
#[pyfunction]
#[pyo3(signature = (c_e, phi, parity, n_max = 40))]
fn parity_stationary(c_e: f64, phi: f64, parity: usize, n_max: usize) -> PyResult<Vec<f64>> {
    let atom = AtomState::from_excited(c_e).map_err(to_py)?;
    let dim = FockDim::new(n_max).map_err(to_py)?;
    let (psi, _) = steady::parity_stationary(atom, phi, parity % 2, dim).map_err(to_py)?;
    Ok(psi.probabilities())
}

/// `(mean_n, var_n, qfi, enhancement)` of a parity stationary state.
#[pyfunction]
#[pyo3(signature = (c_e, phi, parity, n_max = 40))]
fn stationary_metrics(c_e: f64, phi: f64, parity: usize, n_max: usize) -> PyResult<(f64, f64, f64, f64)> {
    let atom = AtomState::from_excited(c_e).map_err(to_py)?;
    let dim = FockDim::new(n_max).map_err(to_py)?;
    let (psi, _) = steady::parity_stationary(atom, phi, parity % 2, dim).map_err(to_py)?;
    let f = metrology::qfi_pure(&psi);
    let mean = psi.mean_n();
    let enh = metrology::enhancement(f, mean).map_err(to_py)?;
    Ok((mean, psi.var_n(), f, enh))
}

/// Quantum Fisher information for phase shifts generated by the number operator.
/// `rho` is a square nested list of complex numbers.
#[pyfunction]
fn qfi(rho: Vec<Vec<num_c64::C>>) -> PyResult<f64> {
    let n = rho.len();
    if rho.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("rho must be square"));
    }
    let mat = micromaser::linalg::CMat::from_fn(n, n, |i, j| {
        let z = rho[i][j];
        micromaser::linalg::c64::new(z.re, z.im)
    });
    let rho = DensityMatrix::new(mat).map_err(to_py)?;
    metrology::qfi(&rho).map_err(to_py)
}

/// Runs a command-line subcommand on a TOML configuration and returns its JSON output.
#[pyfunction]
#[pyo3(signature = (command, config = "", seed = None))]
fn run(command: &str, config: &str, seed: Option<u64>) -> PyResult<String> {
    let mut cfg = cli::parse_config(config).map_err(to_py)?;
    if seed.is_some() {
        cfg.noise.seed = seed;
    }
    cfg.validate().map_err(to_py)?;
    let ctx = Context { command: command.to_string(), seed: cfg.noise.seed, config: cfg, jobs: 1 };
    let out = match command {
        "steady" => cli::run_steady(&ctx, Format::Json),
        "evolve" => cli::run_evolve(&ctx, Format::Json),
        "spectrum" => cli::run_spectrum(&ctx, Format::Json),
        "walls" => cli::run_walls(&ctx, None, None, None, Format::Json),
        "wigner" => cli::run_wigner(&ctx, Format::Json),
        "metastable" => cli::run_metastable(&ctx, Format::Json),
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    }
    .map_err(to_py)?;
    Ok(cli::render(&ctx, out))
}

mod num_c64 {
    use pyo3::prelude::*;
    use pyo3::types::PyComplex;

    #[derive(Clone, Copy)]
    pub struct C {
        pub re: f64,
        pub im: f64,
    }

    impl<'py> FromPyObject<'_, 'py> for C {
        type Error = PyErr;

        fn extract(ob: Borrowed<'_, 'py, PyAny>) -> PyResult<Self> {
            if let Ok(z) = ob.cast::<PyComplex>() {
                return Ok(C { re: z.real(), im: z.imag() });
            }
            Ok(C { re: ob.extract::<f64>()?, im: 0.0 })
        }
    }
}

#[pymodule]
fn micromaser_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(phi_for_wall, m)?)?;
    m.add_function(wrap_pyfunction!(wall_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(parity_stationary, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(qfi, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

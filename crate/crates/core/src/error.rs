use thiserror::Error;

/// Errors produced by the solver library.
///
/// The CLI maps these onto exit codes: `Parameter`/`Config` -> 2,
/// `NonConvergence`/`Solver`/`Degeneracy`/`Accuracy`/`Classification` -> 3,
/// `Domain`/`Range` -> 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("iteration did not converge after {iterations} steps (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("converged to a {class} state, not a positive solution")]
    Classification {
        class: crate::coupled::StateClass,
        state: Box<crate::coupled::CoupledState>,
    },

    #[error("degenerate problem: {0}")]
    Degeneracy(String),

    #[error("accuracy loss: {0}")]
    Accuracy(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("out of range: {message} (achieved [{lo:.6e}, {hi:.6e}])")]
    Range { message: String, lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

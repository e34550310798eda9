use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh: {0}")]
    Mesh(String),

    #[error("incompatible genealogy: {0}")]
    Genealogy(String),

    #[error("linear solver ({stage}): {msg}")]
    Linear { stage: &'static str, msg: String },

    #[error("{what} did not converge in {iters} iterations (last residual {last:.3e})")]
    NotConverged {
        what: &'static str,
        iters: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("bound violation: {0}")]
    Bounds(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("macro point {point} at step {step}, stage {stage}: {source}")]
    At {
        point: usize,
        step: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at(self, point: usize, step: usize, stage: &'static str) -> Error {
        Error::At {
            point,
            step,
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Config(_))
    }
}

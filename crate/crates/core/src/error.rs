use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, MgfError>;

#[derive(Debug, Clone, Error)]
pub enum MgfError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite integrand value at {location}")]
    NonFinite { location: String },

    #[error("adaptive quadrature exceeded depth {depth} (partial value {partial})")]
    DepthExceeded { partial: Complex64, depth: usize },

    #[error("recurrence unstable: |b/(a tau0^2)| = {ratio:.3e} exceeds 1/4; use the smooth path")]
    UnstableRecurrence { ratio: f64 },

    #[error("Chebyshev-to-Taylor conversion limited to degree {max}, got {degree}")]
    DegreeTooHigh { degree: usize, max: usize },

    #[error("negative discriminant {0:e}")]
    NegativeDiscriminant(f64),

    #[error("no resolved Taylor interval after {0} halvings")]
    TauSearchExhausted(usize),

    #[error("kappa = {kappa:e} exceeds the reference evaluator limit {limit:e}")]
    OracleLimit { kappa: f64, limit: f64 },

    #[error("{component}: {source}")]
    Component {
        component: &'static str,
        #[source]
        source: Box<MgfError>,
    },
}

impl MgfError {
    pub(crate) fn within(self, component: &'static str) -> Self {
        MgfError::Component { component, source: Box::new(self) }
    }
}

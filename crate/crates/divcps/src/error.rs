use divcps_core::CoreError;
use serde_json::json;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const CERTIFICATE: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => exit::VALIDATION,
            RunError::Io(_) => exit::IO,
            RunError::Core(e) => match e {
                CoreError::Domain(_) | CoreError::Precondition(_) | CoreError::ModelContract(_) => exit::VALIDATION,
                CoreError::NoTilt { .. } | CoreError::TubeViolation { .. } => exit::CERTIFICATE,
                CoreError::Singularity { .. }
                | CoreError::Diverged { .. }
                | CoreError::AcceptanceTooRare { .. }
                | CoreError::StepSize { .. }
                | CoreError::NumericalTilt { .. }
                | CoreError::TimeChange { .. } => exit::NUMERICAL,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Validation(_) => "validation",
            RunError::Io(_) => "io",
            RunError::Core(e) => match e {
                CoreError::Domain(_) => "domain",
                CoreError::Precondition(_) => "precondition",
                CoreError::ModelContract(_) => "model_contract",
                CoreError::Singularity { .. } => "singularity",
                CoreError::Diverged { .. } => "diverged",
                CoreError::AcceptanceTooRare { .. } => "acceptance_too_rare",
                CoreError::StepSize { .. } => "step_size",
                CoreError::TubeViolation { .. } => "tube_violation",
                CoreError::NoTilt { .. } => "no_tilt",
                CoreError::NumericalTilt { .. } => "numerical_tilt",
                CoreError::TimeChange { .. } => "time_change",
            },
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let RunError::Validation(list) = self {
            v["violations"] = json!(list);
        }
        v.to_string()
    }
}

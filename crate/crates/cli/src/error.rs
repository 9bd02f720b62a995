use std::fmt;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 1;
    /// A feasibility condition or a verified claim does not hold.
    pub const INFEASIBLE: i32 = 2;
    pub const INTEGRATION_FAULT: i32 = 3;
}

/// An error that ends a command with a specific exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
    /// Name of the failed feasibility condition, when there is one.
    pub condition: Option<&'static str>,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: exit::INPUT,
            message: message.into(),
            condition: None,
        }
    }

    pub fn infeasible(condition: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code: exit::INFEASIBLE,
            message: message.into(),
            condition: Some(condition),
        }
    }

    /// Classifies a core error by the exit code it deserves.
    pub fn from_core(e: satguard::Error) -> Self {
        use satguard::Error as E;
        let message = e.to_string();
        match e {
            E::ControlAuthority(_) => Self::infeasible("assumption_1", message),
            E::NotHurwitz { .. } => Self::infeasible("hurwitz", message),
            E::InfeasibleProblem(_) => Self::infeasible("c0_below_rho_min", message),
            E::InfeasibleGain(_) => Self::infeasible("lambda_below_star", message),
            E::IntegrationFault { .. } => CliError {
                code: exit::INTEGRATION_FAULT,
                message,
                condition: None,
            },
            _ => Self::input(message),
        }
    }

    pub fn context(mut self, where_: &str) -> Self {
        self.message = format!("{where_}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

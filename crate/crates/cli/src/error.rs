use netobserve::design::DesignError;
use netobserve::epidemics::EpidemicError;
use netobserve::graph::GraphError;
use netobserve::netgen::NetgenError;
use netobserve::obsv::ObsvError;
use netobserve::placement::PlacementError;
use netobserve::powergrid::GridError;
use netobserve::scenario::ScenarioError;
use netobserve::sim::SimError;
use thiserror::Error;

/// Failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("infeasible problem: {0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => 1,
            Self::Usage(_) => 2,
            Self::Numeric(_) => 3,
            Self::Infeasible(_) => 4,
        }
    }

    pub fn input(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Self::Input(format!("{context}: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<NetgenError> for CliError {
    fn from(e: NetgenError) -> Self {
        match e {
            NetgenError::Parameters(_) => Self::Usage(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<ObsvError> for CliError {
    fn from(e: ObsvError) -> Self {
        Self::Numeric(e.to_string())
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        let msg = e.to_string();
        match e {
            DesignError::NotStructurallyObservable(_)
            | DesignError::Unobservable
            | DesignError::Darouach { .. } => Self::Infeasible(msg),
            DesignError::InvalidF0(_) | DesignError::Graph(_) => Self::Input(msg),
            DesignError::Linalg(_)
            | DesignError::Obsv(_)
            | DesignError::Inconsistent(_)
            | DesignError::NotHurwitz(_) => Self::Numeric(msg),
        }
    }
}

impl From<PlacementError> for CliError {
    fn from(e: PlacementError) -> Self {
        match e {
            PlacementError::Design(d) => d.into(),
            PlacementError::Graph(g) => g.into(),
            PlacementError::Uncoverable(_) | PlacementError::InfeasibleBase => Self::Infeasible(e.to_string()),
            PlacementError::CapExceeded { .. } | PlacementError::BelowBase { .. } => Self::Usage(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Netgen(n) => n.into(),
            ScenarioError::Placement(p) => p.into(),
            ScenarioError::Parameters(_) => Self::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Divergence { .. } => Self::Numeric(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Invalid(_) | GridError::Json(_) | GridError::Io(_) => Self::Input(e.to_string()),
            GridError::NonFinite | GridError::NoEquilibrium { .. } => Self::Numeric(e.to_string()),
            GridError::InfeasibleSubsets { .. } => Self::Infeasible(e.to_string()),
            GridError::Sim(s) => s.into(),
        }
    }
}

impl From<EpidemicError> for CliError {
    fn from(e: EpidemicError) -> Self {
        match e {
            EpidemicError::Design(d) => d.into(),
            EpidemicError::Graph(g) => g.into(),
            EpidemicError::Placement(p) => p.into(),
            EpidemicError::Sim(s) => s.into(),
            EpidemicError::Invalid(_) | EpidemicError::Json(_) | EpidemicError::Io(_) => Self::Input(e.to_string()),
            EpidemicError::NonFinite(_) | EpidemicError::Negative { .. } | EpidemicError::Unstable(_) => {
                Self::Numeric(e.to_string())
            }
        }
    }
}

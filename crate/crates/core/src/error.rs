use thiserror::Error;

use crate::flow::FlowError;
use crate::geo::GeoError;
use crate::io::IoError;
use crate::matchprob::MatchProbError;
use crate::network::NetworkError;
use crate::participation::{ParticipationError, RoutingError};
use crate::simplify::SimplifyError;
use crate::simulate::SimulateError;
use crate::time::TimeError;

/// Any failure surfaced by the pipeline, with a stable machine-readable code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error(transparent)]
    Simplify(#[from] SimplifyError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    MatchProb(#[from] MatchProbError),
    #[error(transparent)]
    Participation(#[from] ParticipationError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(e) => e.code(),
            Error::Usage(_) => "usage",
            Error::Config(_) => "config_invalid",
            Error::Geo(_) => "geo_invalid",
            Error::Network(NetworkError::TooLarge(..)) => "network_too_large",
            Error::Network(_) => "network_invalid",
            Error::Time(_) => "time_invalid",
            Error::Simplify(SimplifyError::Network(_)) => "network_invalid",
            Error::Simplify(_) => "simplify_failed",
            Error::Flow(FlowError::AllZeroFlow) => "all_zero_flow",
            Error::Flow(_) => "flow_invalid",
            Error::MatchProb(_) => "matchprob_invalid",
            Error::Participation(ParticipationError::ZeroPopulation) => "zero_population",
            Error::Participation(ParticipationError::AllRoutesFailed { .. }) => "routing_failed",
            Error::Participation(_) => "participation_invalid",
            Error::Routing(_) => "routing_failed",
            Error::Simulate(SimulateError::InfeasibleScenario(_)) => "infeasible_scenario",
            Error::Simulate(SimulateError::Network(_)) => "network_invalid",
            Error::Simulate(_) => "simulate_invalid",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            e if e.is_parse() => 2,
            _ => 3,
        }
    }

    /// Input that could not be read into domain values, as opposed to a
    /// failure while running on valid input.
    pub fn is_parse(&self) -> bool {
        match self {
            Error::Io(e) => e.is_parse(),
            Error::Config(_) | Error::Geo(_) | Error::Network(_) | Error::Time(_) => true,
            Error::Simplify(SimplifyError::Network(_)) | Error::Simulate(SimulateError::Network(_)) => true,
            _ => false,
        }
    }
}

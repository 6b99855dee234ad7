use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("threshold s{road} must be a positive finite number, got {value}")]
    InvalidThreshold { road: u8, value: f64 },
    #[error("road {road}: need 0 < theta_min < theta_max, got [{theta_min}, {theta_max}]")]
    InvalidCycle { road: u8, theta_min: f64, theta_max: f64 },
    #[error("queue {road} is negative ({value})")]
    NegativeQueue { road: u8, value: f64 },
    #[error("clock z{road} = {value} outside [0, theta_max]")]
    ClockOutOfRange { road: u8, value: f64 },
    #[error("both clocks running: z = {z:?}")]
    BothClocksRunning { z: [f64; 2] },
    #[error("clock of red road {road} is running: z = {z:?}")]
    RedClockRunning { road: u8, z: [f64; 2] },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("event loop stalled at t = {time}: {count} consecutive events closer than 1e-12 s (x = {x:?}, z = {z:?}, green = road {green})")]
    Stalled { time: f64, count: usize, x: [f64; 2], z: [f64; 2], green: u8 },
    #[error("stop rule covers zero time")]
    EmptyHorizon,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IpaError {
    #[error("degenerate {trigger} crossing on road {road}: rate denominator {denominator}")]
    ZeroDenominator { trigger: &'static str, road: u8, denominator: f64 },
    #[error("non-empty period on road {road} ended at t = {time} without having started")]
    UnopenedPeriod { road: u8, time: f64 },
    #[error("induced period start on road {road} at t = {time} without a preceding switch to red on an empty queue")]
    OrphanInducedStart { road: u8, time: f64 },
    #[error("at event {index}: {source}")]
    AtEvent {
        index: usize,
        #[source]
        source: Box<IpaError>,
    },
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
}

#[derive(Debug, Error)]
pub enum OptError {
    #[error("simulation failed at iteration {iteration}: {source}")]
    Sim { iteration: usize, source: SimError },
    #[error("gradient estimate failed at iteration {iteration}: {source}")]
    Estimator { iteration: usize, source: IpaError },
    #[error("invalid step rule: {0}")]
    InvalidRule(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("simulation failed: {0}")]
    Eval(#[from] SimError),
    #[error("cost reduction undefined for non-positive initial cost {0}")]
    NonPositiveCost(f64),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("config violates invariant: {0}")]
    Invalid(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

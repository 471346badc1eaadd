//! Receding-horizon battery bidding under state-of-charge estimation error.

pub mod bidding;
pub mod domain;
pub mod ingest;
pub mod market;
pub mod metrics;
pub mod milp;
pub mod sim;

pub use domain::{
    BatteryParams, Config, HourRecord, MarginPolicy, MarketParams, PolicyKind, PriceSeries, SimSettings, SocErrorParams,
};
pub use market::SimulationLog;
pub use metrics::RevenueBreakdown;

//! Evaluation service: accepts result submissions, scores them against the
//! private splits of a released revision, queues them for admin approval
//! and appends approved results to a ledger.

pub mod aggregate;
pub mod auto;
pub mod error;
pub mod ledger;
pub mod registry;
pub mod routes;
pub mod state;

pub use error::ServiceError;
pub use routes::router;
pub use state::{AppState, RegisteredBaseline, Settings};

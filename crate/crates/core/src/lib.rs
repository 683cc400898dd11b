pub mod config;
pub mod dispatch;
pub mod engine;
pub mod error;
pub mod model;
pub mod providers;
pub mod recall;
pub mod reflect;
pub mod retain;
pub mod store;
pub mod temporal;
pub mod text;
pub mod time;
pub mod validate;

pub use config::EngineConfig;
pub use dispatch::{dispatch, CommandEnvelope, ResponseEnvelope, Verb};
pub use engine::{Clock, Engine, EngineBuilder, FixedClock, SystemClock};
pub use error::{Error, ErrorKind, Result};
pub use providers::ProviderSuite;

//! Joint transmit precoding for two-hop decode-and-forward relay networks with
//! interference on both hops.
//!
//! The design runs in three phases. [`second_hop`] designs the relay
//! precoders for maximum second-hop sum-rate. [`first_hop`] designs the
//! transmitter precoders against a smoothed end-to-end utility whose reward
//! for first-hop rate beyond what the second hop can forward is bounded.
//! [`power_control`]
//! then scales first-hop powers down until no relay's first hop outruns its
//! second. [`pipeline`] composes these into the compared variants, and
//! [`harness`] averages them over random channels.
//!
//! ```
//! use relay_precoding::pipeline::{Instance, VariantId};
//! use relay_precoding::topology::{build_topology, sample_channels, SystemSpec};
//!
//! let spec: SystemSpec = "(2^2 x 2^4 x 2^8, 1x1)".parse().unwrap();
//! let spec = spec.with_power_db(10.0, 10.0);
//! let topology = build_topology(&spec);
//! let channels = sample_channels(&topology, &spec, 7);
//! let runs = Instance::new(&channels, &topology, &spec)
//!     .run_variants(&[VariantId::Baseline, VariantId::Final], 7)
//!     .unwrap();
//! assert!(runs.iter().all(|r| r.sum_rate() > 0.0));
//! ```

pub mod error;
pub mod first_hop;
pub mod harness;
pub mod hop;
pub mod linalg;
pub mod pipeline;
pub mod power_control;
pub mod rates;
pub mod second_hop;
pub mod solver;
pub mod topology;

pub use error::{Error, Result};
pub use pipeline::{Instance, RunOutcome, VariantId};
pub use topology::{ChannelSet, SystemSpec, Topology};

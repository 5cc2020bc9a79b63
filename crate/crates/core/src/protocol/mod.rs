//! Vendor, distributor and device state machines for the four phases of an
//! update's life: contract publication, initial seeding, the fair exchange of
//! the update for a proof-of-distribution, and the reward claim that reveals
//! the decryption key on-ledger.
//!
//! Every node method is a pure step: it reads the ledger/DSN, updates the
//! node's own state and returns the message or transaction to send. Routing,
//! timing and retries belong to the caller ([`crate::sim`] or
//! [`run_exchange`]).

mod device;
mod distributor;
mod exchange;
mod messages;
mod package;
mod session;
mod vendor;

pub use device::{CompleteError, Device, Installed, PendingUpdate, RequestError};
pub use distributor::{AcquireError, ClaimRecord, Distributor};
pub use exchange::{run_exchange, ExchangeFailure};
pub use messages::{challenge_message, Message, Offer, TranscriptEntry};
pub use package::UpdatePackage;
pub use session::{AbortReason, ExchangeSession, Role, SessionId, SessionState};
pub use vendor::{Release, ReleaseError, Vendor};

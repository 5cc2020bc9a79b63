use alloc::vec::Vec;
use rand::RngCore;

use super::device::{Device, RequestError};
use super::distributor::Distributor;
use super::messages::{Message, TranscriptEntry};
use super::session::AbortReason;
use crate::crypto::ProofSystem;
use crate::ledger::{Address, Ledger, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ExchangeFailure {
    #[error("device declined to start: {0}")]
    Request(RequestError),
    #[error("exchange aborted: {0}")]
    Abort(AbortReason),
}

impl From<AbortReason> for ExchangeFailure {
    fn from(r: AbortReason) -> Self {
        ExchangeFailure::Abort(r)
    }
}

fn log(transcript: &mut Vec<TranscriptEntry>, now: u64, from: u32, to: u32, msg: &Message) {
    transcript.push(TranscriptEntry::record(now, crate::dsn::NodeId(from), crate::dsn::NodeId(to), msg.kind(), &msg.encode()));
}

/// Runs steps 1 to 5 between one device and one distributor with instant,
/// lossless delivery. Returns the distributor's signed claim.
#[allow(clippy::too_many_arguments)]
pub fn run_exchange<P: ProofSystem, R: RngCore + ?Sized>(
    distributor: &mut Distributor,
    device: &mut Device,
    contract: Address,
    ledger: &Ledger,
    proofs: &mut P,
    rng: &mut R,
    now: u64,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Transaction, ExchangeFailure> {
    let (dv, ds) = (device.node.0, distributor.node.0);
    let u_id = device.eligible(&contract, ledger, now).map_err(ExchangeFailure::Request)?;
    let request = device.open_session(contract, u_id, distributor.node, now);
    log(transcript, now, dv, ds, &request);
    let Message::UpdateRequest { session, .. } = request else { unreachable!() };

    let challenge = distributor.on_update_request(device.node, session, contract, rng, now)?;
    log(transcript, now, ds, dv, &challenge);
    let Message::Challenge { c, .. } = challenge else { unreachable!() };

    let response = device.on_challenge(session, &c)?;
    log(transcript, now, dv, ds, &response);
    let Message::ChallengeResponse { device: pk, sig, .. } = response else { unreachable!() };

    let offer = distributor.on_challenge_response(session, pk, &sig, ledger, proofs, rng)?;
    log(transcript, now, ds, dv, &offer);
    let Message::Offer { offer, .. } = offer else { unreachable!() };

    let receipt = match device.on_offer(session, &offer, ledger, proofs) {
        Ok(m) => m,
        Err(e) => {
            distributor.abort_session(&session, e);
            return Err(e.into());
        }
    };
    log(transcript, now, dv, ds, &receipt);
    let Message::DeliveryReceipt { sig, .. } = receipt else { unreachable!() };
    Ok(distributor.on_delivery_receipt(session, &sig, ledger, now)?)
}

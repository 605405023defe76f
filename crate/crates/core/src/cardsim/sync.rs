use super::{CardError, CardSession, OfflineDelta, VirtualCard};
use crate::ids::CardId;
use crate::ledger::{CardRecord, DeltaOutcome, Ledger, LedgerError, TransactionRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedDelta {
    pub delta: OfflineDelta,
    /// Wire error string, e.g. `"Account Has Not Enough Cash"`.
    pub error: String,
}

/// Outcome of reconciling a card with the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncReport {
    pub card: CardRecord,
    pub applied: Vec<TransactionRecord>,
    pub rejected: Vec<RejectedDelta>,
    /// Sequence numbers at or below the server watermark.
    pub skipped: Vec<u64>,
    pub watermark: u64,
}

/// Server side: submits `deltas` in sequence order and refreshes the
/// server's copy of the card balance.
pub fn reconcile(ledger: &Ledger, card_id: &CardId, deltas: &[OfflineDelta]) -> Result<SyncReport, CardError> {
    ledger.card(card_id).map_err(|e| match e {
        LedgerError::UnknownCard(id) => CardError::UnknownCard(id),
        other => CardError::Ledger(other),
    })?;
    let mut ordered: Vec<&OfflineDelta> = deltas.iter().collect();
    ordered.sort_by_key(|d| d.sequence_no);
    let mut applied = Vec::new();
    let mut rejected = Vec::new();
    let mut skipped = Vec::new();
    for delta in ordered {
        match ledger.apply_card_delta(card_id, delta.sequence_no, delta.amount, delta.kind)? {
            DeltaOutcome::Applied(record) => applied.push(record),
            DeltaOutcome::AlreadyApplied => skipped.push(delta.sequence_no),
            DeltaOutcome::Rejected(e) => rejected.push(RejectedDelta {
                delta: delta.clone(),
                error: e.wire_error(),
            }),
        }
    }
    let card = ledger.refresh_card_cache(card_id)?;
    Ok(SyncReport {
        card,
        applied,
        rejected,
        skipped,
        watermark: ledger.sync_mark(card_id).applied,
    })
}

impl VirtualCard {
    /// Card side: drops acknowledged deltas and takes the server balance.
    pub fn absorb(&mut self, report: &SyncReport) {
        self.watermark = report.watermark;
        self.pending.retain(|d| d.sequence_no > report.watermark);
        self.cached_balance = report.card.cached_balance;
        self.status = report.card.status;
    }
}

/// Pushes the card's pending deltas to the ledger, then sets its replica
/// balance to the ledger balance.
pub fn sync_card(card: &mut VirtualCard, ledger: &Ledger, session: &CardSession) -> Result<SyncReport, CardError> {
    if !session.card_authenticated || session.card_id != card.card_id {
        return Err(CardError::NotAuthenticated);
    }
    let report = reconcile(ledger, &card.card_id, &card.pending)?;
    card.absorb(&report);
    Ok(report)
}

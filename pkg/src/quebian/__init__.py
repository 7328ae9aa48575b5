"""Quebian: a desk-scale permissioned ledger for electronic medical records.

Execute-order-validate transaction pipeline, pluggable ordering (solo
sequencer or normal-case PBFT), self-sovereign identity with off-ledger
credentials, and an append-only EHR application.
"""

__version__ = "0.1.0"

from .canonical import CanonicalEncodingError, canonical_encode, hash_document
from .ledger import (
    Block,
    BlockHeader,
    ChainLinkageError,
    LedgerError,
    LedgerIOError,
    LedgerStore,
    Version,
    WorldState,
    hash_block,
    verify_chain_bytes,
    verify_chain_file,
)
from .txflow import (
    BAD_FUNCTION,
    BAD_SIGNATURE,
    ENDORSEMENT_POLICY_FAILURE,
    MVCC_CONFLICT,
    VALID,
    ChaincodeError,
    Committer,
    EndorsedTransaction,
    Endorsement,
    EndorsementPolicy,
    EndorsementRefused,
    ReadWriteSet,
    TxProposal,
    check_endorsement_policy,
    endorse,
    make_proposal,
    validate_block,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Consortium-blockchain access control for distributed e-health records.

Patient records stay wherever they are hosted; what the chain holds is
custody metadata: who keeps each record, who asked for access, and which
keepers granted, denied, or revoked it. A small pre-selected set of
consortium nodes mines with proof-of-work, so the chain is tamper-evident
and every access decision is replayable from genesis.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    AgreementRule,
    Entity,
    PermissionLevel,
    Policy,
    PolicyStatus,
    Record,
    RecordStatus,
    Role,
    Transaction,
    TxKind,
    canonical_encode,
    make_transaction,
    required_grants,
    vote_tx_id,
)
from .lifecycle import (  # noqa: F401
    InadmissibleTransaction,
    RequestProgress,
    RequestState,
    Vote,
    admissible,
    aggregate_decision,
    apply_revocation,
)
from .ledger import (  # noqa: F401
    Block,
    BlockData,
    BlockStore,
    GenesisConfig,
    make_genesis,
    mine_block,
    validate_block,
    validate_chain,
)
from .snapshot import (  # noqa: F401
    AccessDecision,
    PendingAction,
    Snapshot,
    audit_trail,
    evaluate,
    fold_block,
    pending_actions,
    replay,
)

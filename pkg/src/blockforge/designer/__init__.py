from .client import (
    ClientUnconfigured,
    Exhausted,
    HttpClient,
    LmClient,
    LmError,
    Message,
    RecordingClient,
    ReplayClient,
    ReplayMiss,
    Transcript,
    client_from_mode,
    load_transcripts,
)
from .pipeline import (
    Chat,
    ChainFailure,
    DesignCandidate,
    NoCandidates,
    elaborate,
    generate_candidates,
    generate_plan,
    knockout,
    list_objects,
    make_candidate,
    parse_plan_reply,
    plan_blocks,
    rate_candidate,
    repair_loop,
    run_chain,
    select_best,
)

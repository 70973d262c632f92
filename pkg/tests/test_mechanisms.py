import json

import pytest

from oracles import cert_of
from pisim.errors import CodeMismatch, IncompleteOutcomes, NoActivityContext, UnknownFlow
from pisim.mechanisms import (
    ANALYTIC_CELLS,
    PROPERTY_ORDER,
    SCENARIO_CELLS,
    TABLE_ORDER,
    AuthDecision,
    Mark,
    Mechanism,
    PkceServer,
    Property,
    Provenance,
    PropertyMatrix,
    Reason,
    ReplayContext,
    authenticate_bound_uid,
    authenticate_custom_permission,
    authenticate_known_signers,
    authenticate_pi_creator,
    authenticate_referrer,
    build_property_matrix,
    capture_and_replay,
    launch_for_result,
    load_fixture,
    pkce_challenge,
    spoof_via_task_hijack,
)
from pisim.pending_intent import Mutability
from pisim.probes import run_mechanism_probes
from pisim.world import ATTACKER, PARTNER, PUBLISH_PERMISSION, SDK_HOST_MANIFEST, SECURE_SDK

# Published comparison table, one string per row in column order:
# kernel-backed, unforgeable, replay-resistant, scalable, bidirectional.
EXPECTED_GLYPHS = {
    "startActivityForResult": "✗✗✓✓✗",
    "getReferrer": "✗✗✓✓✗",
    "PI.getCreatorPackage": "✗✗✗✓✓",
    "BroadcastReceiver": "~✓✓✗✗",
    "ContentProvider": "~✓✓✗✗",
    "knownSigners": "~✓✓✗✗",
    "PKCE": "✗✗✓✓✗",
    "BoundService": "✓✓✓✓✓",
}
GLYPH = {"YES": "✓", "NO": "✗", "PARTIAL": "~"}


def test_accept_requires_identity():
    with pytest.raises(ValueError):
        AuthDecision(True, None, Reason.OK)


def test_pi_creator_check_trusts_whoever_holds_the_token(world):
    token = world.partner_token(Mutability.IMMUTABLE)
    world.post(PARTNER, token, "t", "x")
    stolen = world.notifications.cache_for(ATTACKER).get(PARTNER)
    d = authenticate_pi_creator(stolen, {PARTNER})
    assert d.accepted and d.authenticated_as == PARTNER
    own = world.partner_token(Mutability.IMMUTABLE, ATTACKER)
    assert authenticate_pi_creator(own, {PARTNER}).reason is Reason.NOT_ALLOWLISTED


def test_bound_uid_resolves_the_presenter(world):
    seen = []

    def handler(txn):
        d = authenticate_bound_uid(txn, world.device, {PARTNER})
        seen.append(d)
        return d

    world.kernel.register_service(world.handle(SECURE_SDK), "auth", True, handler)
    for caller in (PARTNER, ATTACKER):
        conn = world.kernel.bind_service(world.handle(caller), SECURE_SDK, "auth")
        world.kernel.transact(conn, {"claim": PARTNER})
    assert seen[0].accepted and seen[0].authenticated_as == PARTNER
    assert not seen[1].accepted and seen[1].subject == ATTACKER


def test_referrer_is_one_shot_and_spoofable(world):
    honest = launch_for_result(world.kernel, world.handle(PARTNER))
    assert authenticate_referrer(honest, {PARTNER}).accepted
    assert authenticate_referrer(honest, {PARTNER}).reason is Reason.STALE_EVIDENCE
    forged = spoof_via_task_hijack(world.kernel, world.handle(ATTACKER), PARTNER)
    assert authenticate_referrer(forged, {PARTNER}).authenticated_as == PARTNER


def test_referrer_needs_an_activity(world):
    ev = launch_for_result(world.kernel, world.handle(PARTNER), activity_context=False)
    with pytest.raises(NoActivityContext):
        authenticate_referrer(ev, {PARTNER})


def test_permission_and_signer_checks(world):
    partner, attacker = world.device.get_app(PARTNER), world.device.get_app(ATTACKER)
    assert authenticate_custom_permission(partner, PUBLISH_PERMISSION).accepted
    assert authenticate_custom_permission(attacker, PUBLISH_PERMISSION).reason is Reason.MISSING_PERMISSION
    assert authenticate_known_signers(partner, SDK_HOST_MANIFEST).accepted
    assert authenticate_known_signers(attacker, SDK_HOST_MANIFEST).reason is Reason.UNKNOWN_SIGNER


def test_pkce_challenge_is_sha256_hex():
    assert pkce_challenge("verifier") == cert_of(b"verifier")


def test_pkce_exchange(world):
    server = PkceServer(world.kernel, {PARTNER})
    flow, code = server.initiate(world.handle(PARTNER), pkce_challenge("v1"), PARTNER)
    with pytest.raises(CodeMismatch):
        server.exchange(flow, code, "wrong")
    with pytest.raises(CodeMismatch):
        server.exchange(flow, "0" * 32, "v1")
    with pytest.raises(UnknownFlow):
        server.exchange(999, code, "v1")
    assert server.exchange(flow, code, "v1").authenticated_as == PARTNER
    with pytest.raises(CodeMismatch):  # codes are single use
        server.exchange(flow, code, "v1")


def test_pkce_proves_continuity_not_identity(world):
    server = PkceServer(world.kernel, {PARTNER})
    flow, code = server.initiate(world.handle(ATTACKER), pkce_challenge("mine"), PARTNER)
    d = server.exchange(flow, code, "mine")
    assert d.accepted and d.authenticated_as == PARTNER


def test_replay_by_mechanism(world):
    ctx = ReplayContext(
        kernel=world.kernel,
        replayer=world.handle(ATTACKER),
        allowlist=frozenset({PARTNER}),
        permission=PUBLISH_PERMISSION,
        host_manifest=SDK_HOST_MANIFEST,
        pkce=PkceServer(world.kernel, {PARTNER}),
    )
    token = world.partner_token(Mutability.IMMUTABLE)
    assert capture_and_replay(Mechanism.PI_CREATOR, token, ctx).accepted
    ev = launch_for_result(world.kernel, world.handle(PARTNER))
    authenticate_referrer(ev, {PARTNER})
    assert capture_and_replay(Mechanism.GET_REFERRER, ev, ctx).reason is Reason.STALE_EVIDENCE
    assert not capture_and_replay(Mechanism.BROADCAST_PERMISSION, None, ctx).accepted
    assert not capture_and_replay(Mechanism.KNOWN_SIGNERS, None, ctx).accepted
    flow, code = ctx.pkce.initiate(world.handle(PARTNER), pkce_challenge("v"), PARTNER)
    assert capture_and_replay(Mechanism.PKCE, (flow, code), ctx).reason is Reason.CODE_MISMATCH
    assert capture_and_replay(Mechanism.PKCE, (42, code), ctx).reason is Reason.UNKNOWN_FLOW
    assert ctx.tick == 6


def test_cells_partition_the_table():
    every = {(m, p) for m in TABLE_ORDER for p in PROPERTY_ORDER}
    assert len(every) == 40
    assert set(SCENARIO_CELLS) | set(ANALYTIC_CELLS) == every
    assert not set(SCENARIO_CELLS) & set(ANALYTIC_CELLS)


def test_fixture_encodes_the_published_table():
    fx = load_fixture()
    for mech, glyphs in EXPECTED_GLYPHS.items():
        row = fx["mechanisms"][mech]
        assert "".join(GLYPH[row[p.value]] for p in PROPERTY_ORDER) == glyphs


def test_build_matrix_requires_every_scenario_cell():
    outcomes = {c: True for c in SCENARIO_CELLS[1:]}
    with pytest.raises(IncompleteOutcomes):
        build_property_matrix(outcomes)


def test_live_probes_reproduce_the_fixture():
    outcomes, log, forgeries = run_mechanism_probes(seed=1)
    matrix = build_property_matrix(outcomes)
    assert matrix.diff(load_fixture()) == []
    assert all(matrix.provenance[c] is Provenance.SCENARIO for c in SCENARIO_CELLS)
    assert len(log) == len(SCENARIO_CELLS)
    # referrer x2, PendingIntent and PKCE accept an attacker as the partner
    assert forgeries == 4


def test_matrix_round_trip_and_diff(tmp_path):
    outcomes, _, _ = run_mechanism_probes(seed=3)
    m = build_property_matrix(outcomes)
    again = PropertyMatrix.from_dict(json.loads(json.dumps(m.to_dict())))
    assert again == m
    fx = load_fixture()
    fx["mechanisms"]["BoundService"]["replayResistant"] = "NO"
    path = tmp_path / "fx.json"
    path.write_text(json.dumps(fx))
    assert m.diff(load_fixture(path)) == ["BoundService/replayResistant: fixture=NO derived=YES"]
    assert m.mark(Mechanism.BOUND_SERVICE, Property.REPLAY_RESISTANT) is Mark.YES

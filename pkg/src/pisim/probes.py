"""Live probes that decide the scenario-backed cells of the mechanism matrix.

Each probe returns whether a property *held* for a mechanism, plus a short
note for the report. The referrer-based rows share one authenticator, so the
same probes run once per row.
"""
from __future__ import annotations

from dataclasses import FrozenInstanceError
from typing import Any

from .binder import Transaction
from .device import PlatformPolicy
from .mechanisms import (
    AuthDecision,
    Mechanism,
    PermissionKind,
    PkceServer,
    Property,
    ReplayContext,
    authenticate_bound_uid,
    authenticate_custom_permission,
    authenticate_known_signers,
    authenticate_pi_creator,
    authenticate_referrer,
    capture_and_replay,
    launch_for_result,
    pkce_challenge,
    spoof_via_task_hijack,
)
from .pending_intent import Mutability
from .world import (
    ATTACKER,
    KEYS,
    NEW_PARTNER,
    PARTNER,
    PUBLISH_PERMISSION,
    SDK_HOST_MANIFEST,
    SECURE_SDK,
    World,
    build_world,
)

Cell = tuple[Mechanism, Property]
AUTH_SERVICE = "auth"

PERMISSION_ROWS = {
    Mechanism.BROADCAST_PERMISSION: PermissionKind.BROADCAST,
    Mechanism.PROVIDER_PERMISSION: PermissionKind.PROVIDER,
}


class _Probe:
    def __init__(self, seed: int) -> None:
        self.w: World = build_world(PlatformPolicy.ANDROID_14, seed)
        self.w.install(NEW_PARTNER, KEYS[NEW_PARTNER])
        self.allowlist = {PARTNER}  # server-maintained; new partners are added at runtime
        self.pkce = PkceServer(self.w.kernel, {PARTNER})
        self.captured_txns: list[Transaction] = []
        self.callback_log: list[Any] = []
        self.w.kernel.register_service(self.w.handle(SECURE_SDK), AUTH_SERVICE, True, self._auth_handler)
        self.outcomes: dict[Cell, bool] = {}
        self.log: list[dict[str, Any]] = []
        self.forgeries_accepted = 0

    # bound service whose handler authenticates by kernel uid
    def _auth_handler(self, txn: Transaction) -> AuthDecision:
        self.captured_txns.append(txn)
        decision = authenticate_bound_uid(txn, self.w.device, self.allowlist)
        if decision.accepted and txn.connection.callback is not None:
            self.w.kernel.invoke_callback(txn.connection, {"status": "published", "to": decision.authenticated_as})
        return decision

    def _bound_call(self, caller: str, payload: Any = None, callback=None) -> AuthDecision:
        conn = self.w.kernel.bind_service(self.w.handle(caller), SECURE_SDK, AUTH_SERVICE)
        if callback is not None:
            self.w.kernel.register_callback(conn, callback)
        return self.w.kernel.transact(conn, payload)

    def _record(self, m: Mechanism, p: Property, held: bool, note: str) -> None:
        self.outcomes[(m, p)] = held
        self.log.append({"mechanism": m.value, "property": p.value, "held": held, "note": note})

    def _app(self, pkg: str):
        return self.w.device.get_app(pkg)

    def _replay_ctx(self) -> ReplayContext:
        return ReplayContext(
            kernel=self.w.kernel,
            replayer=self.w.handle(ATTACKER),
            allowlist=frozenset(self.allowlist),
            permission=PUBLISH_PERMISSION,
            host_manifest=SDK_HOST_MANIFEST,
            pkce=self.pkce,
            bound_service=(SECURE_SDK, AUTH_SERVICE),
        )

    def _forged(self, decision: AuthDecision) -> bool:
        forged = decision.accepted and decision.authenticated_as == PARTNER
        self.forgeries_accepted += forged
        return forged

    # --- per-mechanism probes -----------------------------------------------------

    def referrer_rows(self) -> None:
        for m in (Mechanism.START_ACTIVITY_FOR_RESULT, Mechanism.GET_REFERRER):
            attacker = self.w.handle(ATTACKER)
            forged = spoof_via_task_hijack(self.w.kernel, attacker, PARTNER)
            d = authenticate_referrer(forged, self.allowlist)
            self._record(m, Property.UNFORGEABLE, not self._forged(d), f"task-hijack referrer -> {d.reason.value}")
            self._record(
                m,
                Property.KERNEL_BACKED,
                d.subject == self.w.kernel.package_of(attacker),
                f"evaluated {d.subject!r}, presenter {ATTACKER!r}",
            )
            honest = launch_for_result(self.w.kernel, self.w.handle(PARTNER))
            first = authenticate_referrer(honest, self.allowlist)
            replayed = capture_and_replay(m, honest, self._replay_ctx())
            self._record(
                m,
                Property.REPLAY_RESISTANT,
                first.accepted and not replayed.accepted,
                f"live launch {first.reason.value}, replay {replayed.reason.value}",
            )
            self.allowlist.add(NEW_PARTNER)
            d = authenticate_referrer(launch_for_result(self.w.kernel, self.w.handle(NEW_PARTNER)), self.allowlist)
            self.allowlist.discard(NEW_PARTNER)
            self._record(m, Property.SCALABLE, d.accepted, f"new partner via allowlist -> {d.reason.value}")

    def pending_intent_row(self) -> None:
        m = Mechanism.PI_CREATOR
        token = self.w.partner_token(Mutability.MUTABLE)
        self.w.post(PARTNER, token, "MyBeats", "Now playing")
        stolen = self.w.notifications.cache_for(ATTACKER).get(PARTNER)
        d = authenticate_pi_creator(stolen, self.allowlist)
        self._record(m, Property.UNFORGEABLE, not self._forged(d), f"stolen token -> {d.reason.value}")
        self._record(
            m, Property.KERNEL_BACKED, d.subject == ATTACKER, f"evaluated {d.subject!r}, presenter {ATTACKER!r}"
        )
        replayed = capture_and_replay(m, stolen, self._replay_ctx())
        self._record(m, Property.REPLAY_RESISTANT, not replayed.accepted, f"replayed token -> {replayed.reason.value}")
        self.allowlist.add(NEW_PARTNER)
        own = self.w.partner_token(Mutability.IMMUTABLE, NEW_PARTNER)
        d = authenticate_pi_creator(own, self.allowlist)
        self.allowlist.discard(NEW_PARTNER)
        self._record(m, Property.SCALABLE, d.accepted, f"new partner via allowlist -> {d.reason.value}")
        # the provider answers by sending the creator's own token back with a result
        rec = self.w.intents.send(token, self.w.handle(SECURE_SDK), {"result": "published"})
        back = rec.target_package == PARTNER and rec.effective_extras.get("result") == "published"
        self._record(m, Property.BIDIRECTIONAL, back, f"send() reached {rec.target_package}")

    def permission_rows(self) -> None:
        for m, kind in PERMISSION_ROWS.items():
            d = authenticate_custom_permission(self._app(ATTACKER), PUBLISH_PERMISSION, kind)
            try:
                self._app(ATTACKER).manifest.used_permissions = frozenset({PUBLISH_PERMISSION})  # type: ignore[misc]
                tampered = True
            except FrozenInstanceError:
                tampered = False
            self._record(
                m,
                Property.UNFORGEABLE,
                not self._forged(d) and not tampered,
                f"attacker -> {d.reason.value}; manifest edit blocked={not tampered}",
            )
            honest = authenticate_custom_permission(self._app(PARTNER), PUBLISH_PERMISSION, kind)
            replayed = capture_and_replay(m, honest, self._replay_ctx())
            self._record(
                m,
                Property.REPLAY_RESISTANT,
                honest.accepted and not replayed.accepted,
                f"re-sent by attacker -> {replayed.reason.value}",
            )
            d = authenticate_custom_permission(self._app(NEW_PARTNER), PUBLISH_PERMISSION, kind)
            self._record(m, Property.SCALABLE, d.accepted, f"new partner without manifest edit -> {d.reason.value}")

    def known_signers_row(self) -> None:
        m = Mechanism.KNOWN_SIGNERS
        d = authenticate_known_signers(self._app(ATTACKER), SDK_HOST_MANIFEST)
        self._record(m, Property.UNFORGEABLE, not self._forged(d), f"attacker cert -> {d.reason.value}")
        honest = authenticate_known_signers(self._app(PARTNER), SDK_HOST_MANIFEST)
        replayed = capture_and_replay(m, honest, self._replay_ctx())
        self._record(
            m, Property.REPLAY_RESISTANT, honest.accepted and not replayed.accepted, f"replay -> {replayed.reason.value}"
        )
        d = authenticate_known_signers(self._app(NEW_PARTNER), SDK_HOST_MANIFEST)
        self._record(m, Property.SCALABLE, d.accepted, f"new partner, stale host manifest -> {d.reason.value}")

    def pkce_row(self) -> None:
        m = Mechanism.PKCE
        attacker = self.w.handle(ATTACKER)
        verifier = f"attacker-verifier-{self.w.rng.getrandbits(64):016x}"
        flow, code = self.pkce.initiate(attacker, pkce_challenge(verifier), PARTNER)
        d = self.pkce.exchange(flow, code, verifier)
        self._record(m, Property.UNFORGEABLE, not self._forged(d), f"own flow claiming partner -> {d.reason.value}")
        self._record(
            m, Property.KERNEL_BACKED, d.subject == ATTACKER, f"evaluated {d.subject!r}, presenter {ATTACKER!r}"
        )
        pv = f"partner-verifier-{self.w.rng.getrandbits(64):016x}"
        pflow, pcode = self.pkce.initiate(self.w.handle(PARTNER), pkce_challenge(pv), PARTNER)
        honest = self.pkce.exchange(pflow, pcode, pv)
        replayed = capture_and_replay(m, (pflow, pcode), self._replay_ctx())
        self._record(
            m,
            Property.REPLAY_RESISTANT,
            honest.accepted and not replayed.accepted,
            f"captured code without verifier -> {replayed.reason.value}",
        )
        self.pkce.registered_clients.add(NEW_PARTNER)
        nv = "newpartner-verifier"
        nflow, ncode = self.pkce.initiate(self.w.handle(NEW_PARTNER), pkce_challenge(nv), NEW_PARTNER)
        d = self.pkce.exchange(nflow, ncode, nv)
        self._record(m, Property.SCALABLE, d.accepted, f"client registered server-side -> {d.reason.value}")

    def bound_row(self) -> None:
        m = Mechanism.BOUND_SERVICE
        token = self.w.partner_token(Mutability.IMMUTABLE)
        self.w.post(PARTNER, token, "MyBeats", "Download complete")
        stolen = self.w.notifications.cache_for(ATTACKER).get(PARTNER)
        forged_referrer = spoof_via_task_hijack(self.w.kernel, self.w.handle(ATTACKER), PARTNER)
        d = self._bound_call(ATTACKER, {"claim": PARTNER, "token": stolen, "referrer": forged_referrer})
        self._record(m, Property.UNFORGEABLE, not self._forged(d), f"attacker with stolen evidence -> {d.reason.value}")
        self._record(
            m, Property.KERNEL_BACKED, d.subject == ATTACKER, f"evaluated {d.subject!r}, presenter {ATTACKER!r}"
        )
        honest = self._bound_call(PARTNER, {"content": "hello"})
        captured = self.captured_txns[-1]
        replayed = capture_and_replay(m, captured, self._replay_ctx())
        self._record(
            m,
            Property.REPLAY_RESISTANT,
            honest.accepted and not replayed.accepted,
            f"captured transaction re-sent -> {replayed.reason.value}",
        )
        self.allowlist.add(NEW_PARTNER)
        d = self._bound_call(NEW_PARTNER)
        self.allowlist.discard(NEW_PARTNER)
        self._record(m, Property.SCALABLE, d.accepted, f"new partner registered server-side -> {d.reason.value}")
        got: list[Any] = []
        self._bound_call(PARTNER, {"content": "with callback"}, callback=got.append)
        self._record(m, Property.BIDIRECTIONAL, len(got) == 1, f"callback messages delivered: {len(got)}")

    def run(self) -> None:
        self.referrer_rows()
        self.pending_intent_row()
        self.permission_rows()
        self.known_signers_row()
        self.pkce_row()
        self.bound_row()


def run_mechanism_probes(seed: int = 1) -> tuple[dict[Cell, bool], list[dict[str, Any]], int]:
    """Run every probe on a fresh world. Returns (cell outcomes, probe log, forgeries accepted)."""
    probe = _Probe(seed)
    probe.run()
    return probe.outcomes, probe.log, probe.forgeries_accepted

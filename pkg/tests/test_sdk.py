import pytest
from hypothesis import given, settings, strategies as st

from oracles import Slot, key_material, secure_verdict
from pisim.device import InstallSource, SigningKey
from pisim.pending_intent import Mutability
from pisim.registry import LocalRegistryClient, Registry
from pisim.sdk import Layer, ProviderMode, PublishOutcome, PublishRequest
from pisim.world import (
    ATTACKER,
    KEYS,
    PARTNER,
    PARTNER_CLIENT_ID,
    PROVIDER_CREDENTIAL,
    SECURE_SDK,
    VULNERABLE_SDK,
    build_world,
)


def _req(credential=None, client=PARTNER_CLIENT_ID):
    return PublishRequest("content", credential, client)


def test_outcome_invariant():
    with pytest.raises(ValueError):
        PublishOutcome(True)
    with pytest.raises(ValueError):
        PublishOutcome(True, ("p", "c"), Layer.L1)


def test_vulnerable_mode_attributes_to_the_token_creator(world):
    token = world.partner_token(Mutability.IMMUTABLE)
    out = world.publish(ATTACKER, VULNERABLE_SDK, _req(token))
    assert out.accepted and out.attributed_partner == (PARTNER, PARTNER_CLIENT_ID)
    own = world.partner_token(Mutability.IMMUTABLE, ATTACKER)
    assert world.publish(ATTACKER, VULNERABLE_SDK, _req(own)).reason == "NOT_ALLOWLISTED"
    assert world.publish(ATTACKER, VULNERABLE_SDK, _req(None)).reason == "NO_CREDENTIAL"


def test_secure_mode_ignores_the_request_body(world):
    token = world.partner_token(Mutability.IMMUTABLE)
    out = world.publish(ATTACKER, SECURE_SDK, _req(token))
    assert (out.accepted, out.layer_rejected, out.caller_package) == (False, Layer.L3, ATTACKER)
    ok = world.publish(PARTNER, SECURE_SDK, _req())
    assert ok.accepted and ok.attributed_partner == (PARTNER, PARTNER_CLIENT_ID)
    svc = world.services[(SECURE_SDK, "publish")]
    assert svc.published == [((PARTNER, PARTNER_CLIENT_ID), "content")]


def test_wrong_client_id_is_rejected(world):
    out = world.publish(PARTNER, SECURE_SDK, _req(client="client-1"))
    assert (out.layer_rejected, out.reason) == (Layer.L3, "NO_RECORD")


def test_clone_with_other_key_stops_at_layer2():
    w = build_world(install_partner=False)
    w.install(PARTNER, KEYS[ATTACKER], source=InstallSource.SIDELOAD)
    out = w.publish(PARTNER, SECURE_SDK, _req())
    assert (out.layer_rejected, out.reason, out.caller_package) == (Layer.L2, "CERT_MISMATCH", PARTNER)


def test_malformed_payload(world):
    out = world.publish(PARTNER, SECURE_SDK, {"not": "a request"})
    assert (out.accepted, out.reason) == (False, "MALFORMED_REQUEST")


@pytest.mark.parametrize("fault", ["unreachable", "credential", "missing"])
def test_registry_failures_fail_closed(world, fault):
    kw = {}
    if fault == "unreachable":
        world.registry_client.available = False
    elif fault == "credential":
        kw["provider_credential"] = "wrong"
    else:
        kw["registry"] = None
    world.add_service(SECURE_SDK, world.provider_config(ProviderMode.SECURE_3LAYER, **kw), "p2")
    out = world.publish(PARTNER, SECURE_SDK, _req(), "p2")
    assert not out.accepted and out.layer_rejected is Layer.L3
    assert out.reason in ("REGISTRY_UNREACHABLE", "BAD_PROVIDER_CREDENTIAL")


def test_disabling_layers():
    w = build_world(install_partner=False)
    w.install(PARTNER, KEYS[ATTACKER], source=InstallSource.SIDELOAD)
    no_l2 = w.provider_config(ProviderMode.SECURE_3LAYER, disabled_layers=frozenset({Layer.L2}))
    no_l3 = w.provider_config(ProviderMode.SECURE_3LAYER, disabled_layers=frozenset({Layer.L3}))
    w.add_service(SECURE_SDK, no_l2, "no-l2")
    w.add_service(SECURE_SDK, no_l3, "no-l3")
    assert w.publish(PARTNER, SECURE_SDK, _req(), "no-l2").accepted
    assert w.publish(PARTNER, SECURE_SDK, _req(), "no-l3").layer_rejected is Layer.L2
    # without L3 an unregistered app sails through
    assert w.publish(ATTACKER, SECURE_SDK, _req(), "no-l3").accepted


def test_layer3_is_what_enforces_revocation(world):
    no_l3 = world.provider_config(ProviderMode.SECURE_3LAYER, disabled_layers=frozenset({Layer.L3}))
    world.add_service(SECURE_SDK, no_l3, "no-l3")
    world.registry.revoke_partner(PARTNER, PARTNER_CLIENT_ID)
    assert world.publish(PARTNER, SECURE_SDK, _req()).reason == "REVOKED"
    assert world.publish(PARTNER, SECURE_SDK, _req(), "no-l3").accepted


def test_alternatives(world):
    alt_a = world.provider_config(ProviderMode.ALT_A_HARDCODED, hardcoded_hashes=frozenset({KEYS[PARTNER].cert_hash}))
    alt_b = world.provider_config(ProviderMode.ALT_B_NO_CERT)
    world.add_service(SECURE_SDK, alt_a, "a")
    world.add_service(SECURE_SDK, alt_b, "b")
    assert world.publish(PARTNER, SECURE_SDK, _req(), "a").accepted
    assert world.publish(ATTACKER, SECURE_SDK, _req(), "a").reason == "CERT_NOT_HARDCODED"
    assert world.publish(PARTNER, SECURE_SDK, _req(), "b").accepted
    assert world.registry.audit[-1].triple.cert_hash is None


def test_timings_cover_each_verified_call(world):
    svc = world.services[(SECURE_SDK, "publish")]
    for _ in range(3):
        world.publish(PARTNER, SECURE_SDK, _req())
    world.publish(ATTACKER, SECURE_SDK, _req())
    assert len(svc.verification_ns) == 4 and all(t > 0 for t in svc.verification_ns)


def test_redeploy_counter(world):
    svc = world.services[(SECURE_SDK, "publish")]
    svc.redeploy(svc.config)
    assert svc.redeploys == 1


APPS = ["a0", "a1", "a2"]
KEYS_BY_NAME = {"k0": SigningKey.from_label("k0"), "k1": SigningKey.from_label("k1")}
slot_st = st.tuples(st.sampled_from(APPS + ["gone"]), st.sampled_from(["c0", "c1"]),
                    st.sampled_from(["k0", "k1"]), st.booleans())


@settings(max_examples=150, deadline=None)
@given(
    installed=st.fixed_dictionaries({a: st.sampled_from(["k0", "k1"]) for a in APPS}),
    slots=st.lists(slot_st, max_size=4),
    caller=st.sampled_from(APPS),
    client=st.sampled_from(["c0", "c1"]),
)
def test_secure_mode_agrees_with_reference(installed, slots, caller, client):
    w = build_world()
    reg = Registry(PROVIDER_CREDENTIAL)
    model: list[Slot] = []
    for pkg, cid, kname, revoked in slots:
        if any(s.package == pkg and s.client == cid and s.status == "ACTIVE" for s in model):
            continue
        reg.register_partner(pkg, KEYS_BY_NAME[kname].cert_hash, cid)
        if revoked:
            reg.revoke_partner(pkg, cid)
        model.append(Slot(pkg, cid, key_material(kname), "REVOKED" if revoked else "ACTIVE"))
    for pkg, kname in installed.items():
        w.install(pkg, KEYS_BY_NAME[kname])
    w.add_service(SECURE_SDK, w.provider_config(ProviderMode.SECURE_3LAYER, registry=LocalRegistryClient(reg)), "s")
    out = w.publish(caller, SECURE_SDK, PublishRequest("x", None, client), "s")
    accepted, layer, reason = secure_verdict(caller, key_material(installed[caller]), client, model)
    assert out.accepted == accepted
    assert (out.layer_rejected.value if out.layer_rejected else None) == layer
    assert out.reason == reason
    if accepted:
        assert out.attributed_partner == (caller, client)

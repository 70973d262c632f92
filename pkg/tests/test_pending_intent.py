import logging

import pytest
from hypothesis import given, strategies as st

from pisim.binder import Kernel
from pisim.device import Device, SigningKey
from pisim.errors import HandleInvalid
from pisim.pending_intent import (
    Mutability,
    PendingIntentManager,
    WrappedIntent,
    get_creator_package,
    get_creator_uid,
)

APPS = ["creator", "a", "b", "c", "d", "e"]


@pytest.fixture
def env():
    d = Device()
    for pkg in APPS:
        d.install_app(pkg, SigningKey.from_label(pkg))
    k = Kernel(d)
    return k, PendingIntentManager(k)


def _intent():
    return WrappedIntent("OPEN", {"track": "7"}, "creator")


def test_creator_fields(env):
    k, pim = env
    tok = pim.create_pending_intent(k.mint_handle("creator"), _intent(), Mutability.IMMUTABLE)
    assert get_creator_package(tok) == "creator"
    assert get_creator_uid(tok) == k.device.get_app("creator").uid


def test_send_runs_as_creator_whoever_presents(env):
    k, pim = env
    tok = pim.create_pending_intent(k.mint_handle("creator"), _intent(), Mutability.IMMUTABLE)
    rec = pim.send(tok, k.mint_handle("a"))
    assert rec.executed_as_package == "creator"
    assert rec.executed_as_uid == tok.creator_uid
    assert rec.presenter_uid == k.device.get_app("a").uid
    assert rec.effective_action == "OPEN"
    assert pim.dispatch_log == [rec]


def test_fill_in_only_for_mutable(env, caplog):
    k, pim = env
    c, p = k.mint_handle("creator"), k.mint_handle("a")
    imm = pim.create_pending_intent(c, _intent(), Mutability.IMMUTABLE)
    mut = pim.create_pending_intent(c, _intent(), Mutability.MUTABLE)
    with caplog.at_level(logging.WARNING, logger="pisim.pending_intent"):
        r1 = pim.send(imm, p, {"track": "999", "extra": "x"})
    assert dict(r1.effective_extras) == {"track": "7"}
    assert "fill-in ignored" in caplog.text
    r2 = pim.send(mut, p, {"track": "999"})
    assert dict(r2.effective_extras) == {"track": "999"}
    # both still execute as the creator
    assert r1.executed_as_package == r2.executed_as_package == "creator"


def test_mutability_must_be_declared(env):
    k, pim = env
    with pytest.raises(TypeError):
        pim.create_pending_intent(k.mint_handle("creator"), _intent(), None)
    with pytest.raises(TypeError):
        pim.create_pending_intent(k.mint_handle("creator"), _intent(), "IMMUTABLE")


def test_tokens_are_frozen_and_extras_read_only(env):
    k, pim = env
    tok = pim.create_pending_intent(k.mint_handle("creator"), _intent(), Mutability.MUTABLE)
    with pytest.raises(AttributeError):
        tok.creator_package = "a"
    with pytest.raises(TypeError):
        tok._sealed.extras["track"] = "1"
    assert "_sealed" not in repr(tok)


def test_token_ids_are_unique(env):
    k, pim = env
    ids = [pim.create_pending_intent(k.mint_handle("creator"), _intent(), Mutability.IMMUTABLE).token_id
           for _ in range(5)]
    assert ids == sorted(set(ids))


def test_uninstalled_creator_cannot_mint_and_dead_presenter_cannot_send(env):
    k, pim = env
    h = k.mint_handle("e")
    tok = pim.create_pending_intent(k.mint_handle("creator"), _intent(), Mutability.IMMUTABLE)
    k.device.uninstall_app("e")
    with pytest.raises(HandleInvalid):
        pim.create_pending_intent(h, _intent(), Mutability.IMMUTABLE)
    with pytest.raises(HandleInvalid):
        pim.send(tok, h)


@given(chain=st.lists(st.sampled_from(APPS[1:5]), min_size=1, max_size=30),
       mut=st.sampled_from(list(Mutability)))
def test_creator_survives_any_hand_off_chain(chain, mut):
    d = Device()
    for pkg in APPS:
        d.install_app(pkg, SigningKey.from_label(pkg))
    k = Kernel(d)
    pim = PendingIntentManager(k)
    tok = pim.create_pending_intent(k.mint_handle("creator"), _intent(), mut)
    held = tok
    for holder in chain:
        # hand-off is just passing the reference; the holder then presents it
        rec = pim.send(held, k.mint_handle(holder))
        assert held is tok
        assert rec.executed_as_package == "creator"
        assert rec.presenter_uid == d.get_app(holder).uid

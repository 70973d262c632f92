import pytest
from hypothesis import settings, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from oracles import InstallTable
from pisim.binder import (
    Connection,
    Kernel,
    ProcessHandle,
    Transaction,
    get_calling_uid,
)
from pisim.device import Device, SigningKey
from pisim.errors import (
    CallingIdentityOutOfScope,
    DuplicateService,
    HandleInvalid,
    HandlerError,
    NoCallback,
    NotExported,
    ServiceNotFound,
)


def _echo_uid(txn):
    return get_calling_uid(txn)


@pytest.fixture
def k():
    d = Device()
    for pkg in ("svc", "alice", "mallory"):
        d.install_app(pkg, SigningKey.from_label(pkg))
    kern = Kernel(d)
    kern.register_service(kern.mint_handle("svc"), "echo", True, _echo_uid)
    return kern


def test_kernel_objects_cannot_be_constructed_outside_the_kernel(k):
    h = k.mint_handle("alice")
    with pytest.raises(TypeError):
        ProcessHandle(object(), k, 10000)
    with pytest.raises(TypeError):
        Transaction(object(), h, None, None)
    with pytest.raises(TypeError):
        Connection(None, h, None)


def test_handles_and_transactions_are_read_only(k):
    h = k.mint_handle("mallory")
    with pytest.raises(AttributeError):
        h._uid = k.device.get_app("alice").uid
    conn = k.bind_service(h, "svc", "echo")
    with pytest.raises(AttributeError):
        conn.caller = k.mint_handle("alice")


def test_calling_uid_is_the_callers_own(k):
    for pkg in ("alice", "mallory"):
        conn = k.bind_service(k.mint_handle(pkg), "svc", "echo")
        assert k.transact(conn, {"uid": 1, "claim": "alice"}) == k.device.get_app(pkg).uid


def test_calling_uid_is_out_of_scope_after_the_handler_returns(k):
    kept = []
    k.register_service(k.mint_handle("svc"), "keep", True, kept.append)
    k.transact(k.bind_service(k.mint_handle("alice"), "svc", "keep"), None)
    (txn,) = kept
    assert not txn.in_scope
    with pytest.raises(CallingIdentityOutOfScope):
        txn.calling_uid


def test_service_errors(k):
    h = k.mint_handle("alice")
    with pytest.raises(ServiceNotFound):
        k.bind_service(h, "svc", "nope")
    with pytest.raises(DuplicateService):
        k.register_service(k.mint_handle("svc"), "echo", True, _echo_uid)
    k.register_service(k.mint_handle("svc"), "private", False, _echo_uid)
    with pytest.raises(NotExported):
        k.bind_service(h, "svc", "private")
    # the provider itself may bind its own unexported service
    conn = k.bind_service(k.mint_handle("svc"), "svc", "private")
    assert k.transact(conn, None) == k.device.get_app("svc").uid


def test_dead_handles_are_refused(k):
    h = k.mint_handle("alice")
    conn = k.bind_service(h, "svc", "echo")
    k.device.uninstall_app("alice")
    assert not h.valid
    with pytest.raises(HandleInvalid):
        k.transact(conn, None)
    k.device.install_app("alice", SigningKey.from_label("alice"))
    with pytest.raises(HandleInvalid):
        k.transact(conn, None)
    fresh = k.bind_service(k.mint_handle("alice"), "svc", "echo")
    assert k.transact(fresh, None) == k.device.get_app("alice").uid


def test_handles_from_another_kernel_are_refused(k):
    other = Kernel(k.device)
    with pytest.raises(HandleInvalid):
        k.package_of(other.mint_handle("alice"))


def test_handler_failure_is_wrapped(k):
    def boom(txn):
        raise RuntimeError("bad")

    k.register_service(k.mint_handle("svc"), "boom", True, boom)
    with pytest.raises(HandlerError):
        k.transact(k.bind_service(k.mint_handle("alice"), "svc", "boom"), None)
    assert k.transaction_count == 1


def test_callbacks(k):
    conn = k.bind_service(k.mint_handle("alice"), "svc", "echo")
    with pytest.raises(NoCallback):
        k.invoke_callback(conn, "hi")
    got = []
    k.register_callback(conn, got.append)
    k.invoke_callback(conn, "hi")
    assert got == ["hi"]


PKGS = ["p0", "p1", "p2", "p3"]


class KernelMachine(RuleBasedStateMachine):
    """Random install/uninstall/bind/transact against a plain install table."""

    def __init__(self):
        super().__init__()
        self.device = Device()
        self.device.install_app("svc", SigningKey.from_label("svc"))
        self.kernel = Kernel(self.device)
        self.kernel.register_service(self.kernel.mint_handle("svc"), "echo", True, _echo_uid)
        self.table = InstallTable(next_uid=10001)
        self.conns = []  # (connection, uid it was minted for)

    @rule(pkg=st.sampled_from(PKGS))
    def install(self, pkg):
        if pkg not in self.table.uids:
            assert self.device.install_app(pkg, SigningKey.from_label(pkg)) == self.table.install(pkg)

    @rule(pkg=st.sampled_from(PKGS))
    def uninstall(self, pkg):
        if pkg in self.table.uids:
            self.device.uninstall_app(pkg)
            self.table.uninstall(pkg)

    @rule(pkg=st.sampled_from(PKGS))
    def bind(self, pkg):
        if pkg in self.table.uids:
            conn = self.kernel.bind_service(self.kernel.mint_handle(pkg), "svc", "echo")
            self.conns.append((conn, self.table.uids[pkg]))

    @precondition(lambda self: self.conns)
    @rule(i=st.integers(min_value=0), forged=st.integers(min_value=0, max_value=20000))
    def transact(self, i, forged):
        conn, uid = self.conns[i % len(self.conns)]
        if self.table.package_for(uid) is None:
            with pytest.raises(HandleInvalid):
                self.kernel.transact(conn, {"uid": forged})
        else:
            assert self.kernel.transact(conn, {"uid": forged}) == uid

    @invariant()
    def uid_index_matches_table(self):
        for pkg, uid in self.table.uids.items():
            assert self.device.get_packages_for_uid(uid) == [pkg]


TestKernelMachine = KernelMachine.TestCase
TestKernelMachine.settings = settings(max_examples=60, stateful_step_count=40, deadline=None)

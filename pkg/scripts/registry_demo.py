#!/usr/bin/env python3
"""Start the registry over HTTP, onboard a partner, and point a provider at it.

Shows the three-layer check accepting the partner, rejecting the attacker, and
flipping to reject right after revocation, all without touching the provider.
"""
import argparse
import tempfile
from pathlib import Path

from pisim.registry import Registry
from pisim.registry_http import HttpRegistryClient, make_server, serve_in_thread, wall_clock_ms
from pisim.sdk import ProviderMode, PublishRequest
from pisim.world import ATTACKER, KEYS, PARTNER, PARTNER_CLIENT_ID, SECURE_SDK, build_world


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--db", type=Path, default=Path(tempfile.gettempdir()) / "pisim-registry-demo.json")
    ap.add_argument("--credential", default="demo-credential")
    args = ap.parse_args()

    server = make_server(Registry(args.credential, wall_clock_ms), db_path=args.db)
    serve_in_thread(server)
    client = HttpRegistryClient(server.url)
    print(f"registry at {server.url}, db {args.db}")

    world = build_world()
    client.register_partner(args.credential, PARTNER, KEYS[PARTNER].cert_hash, PARTNER_CLIENT_ID)
    cfg = world.provider_config(ProviderMode.SECURE_3LAYER, registry=client, provider_credential=args.credential)
    world.add_service(SECURE_SDK, cfg, "publish-http")

    def call(who):
        out = world.publish(who, SECURE_SDK, PublishRequest("hello", None, PARTNER_CLIENT_ID), "publish-http")
        verdict = "ACCEPT" if out.accepted else f"REJECT at {out.layer_rejected.value} ({out.reason})"
        print(f"  {who:<20} -> {verdict}")

    print("before revocation:")
    call(PARTNER)
    call(ATTACKER)
    client.revoke_partner(args.credential, PARTNER, PARTNER_CLIENT_ID)
    print("after revocation:")
    call(PARTNER)
    print("audit trail:")
    for e in client.list_audit(args.credential):
        print(f"  {e.timestamp} {e.triple.package_name:<20} {e.verdict.value} {e.reason.value}")
    server.shutdown()
    server.server_close()


if __name__ == "__main__":
    main()

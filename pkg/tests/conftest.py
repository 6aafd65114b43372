import sys

import pytest

from ledgergate import crypto


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Surface the acceptance checklist after the test report (the lines are
    emitted under fd-level capture, so this is where they stay visible)."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "CHECKLIST", None) if module else None
    if lines:
        terminalreporter.section("acceptance checklist")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def key_cache():
    """Session-wide key pairs keyed by (scheme, label).

    RSA key generation is the only slow primitive in the suite; reusing
    pairs keeps the randomized tests fast without weakening them (key
    identity is never what is under test).
    """
    cache = {}

    def get(scheme: str, label: str) -> crypto.KeyPair:
        k = (scheme, label)
        if k not in cache:
            if scheme == crypto.ED25519:
                cache[k] = crypto.ed25519_from_seed(f"test:{label}".encode())
            else:
                cache[k] = crypto.generate_keypair(scheme)
        return cache[k]

    return get

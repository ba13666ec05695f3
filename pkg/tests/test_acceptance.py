"""End-to-end acceptance run: every property check at its stated tolerance.

Each test executes one registered property and prints a PASS/FAIL line
with the check's own measurement detail. The three Monte-Carlo properties
take minutes apiece; everything else is seconds.
"""

import pytest

from tokenwalk import CHECK_NAMES, run_checks


@pytest.mark.parametrize("name", CHECK_NAMES)
def test_acceptance(name, capfd):
    res = run_checks(seed=0, names={name})[0]
    status = "PASS" if res.passed else "FAIL"
    # bypass output capture so each criterion shows one line under -v
    with capfd.disabled():
        print(f"{status} {res.name} ({res.detail}) [{res.seconds:.1f}s]",
              flush=True)
    assert res.passed, res.detail

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mocert.model import parse_mdp

M1_TEXT = """\
@initial s0
@label goal t
s0 alpha t 7/10
s0 alpha b 3/10
s0 beta t 1/5
s0 beta b 4/5
t stay t 1
b stay b 1
"""

# The five-state running example: from s0 one action splits evenly between
# a two-state cycle (s3, s4) and a "safe" self-loop state s1; s2 is the goal
# and can be revisited from s1.
FIG2_TEXT = """\
@initial s0
@label safe s0 s1
@label goal s2
s0 b s3 1/2
s0 b s1 1/2
s1 loop s1 1
s1 c s2 1
s2 loop s2 1
s2 back s1 1
s3 cyc s4 1
s3 d s2 1
s4 cyc s3 1
s4 a s2 1
"""


@pytest.fixture
def m1():
    return parse_mdp(M1_TEXT)


@pytest.fixture
def fig2():
    return parse_mdp(FIG2_TEXT)


@pytest.fixture
def m1_rfm(m1):
    from mocert.model import ReachabilityFormMdp

    return ReachabilityFormMdp(m1, frozenset({"t", "b"}), (frozenset({"t"}),))


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULT_LINES", ())
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.line(line)

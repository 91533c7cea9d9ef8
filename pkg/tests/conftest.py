import numpy as np
import pytest

from etmti.model import Population, TagClass, TagRecord


class TableHasher:
    """Hash stand-in that looks slots up in a ``{seed: {tag_id: slot}}`` table."""

    def __init__(self, table):
        self.table = table

    def __call__(self, lo, hi, seed, f):
        ids = (np.asarray(hi, dtype=object) << 64) | np.asarray(lo, dtype=object)
        out = np.array([self.table[seed][int(i)] for i in ids], dtype=np.int64)
        assert out.size == 0 or (out.min() >= 1 and out.max() <= f)
        return out


class ScriptedSeeds:
    """Stands in for a Generator: ``integers`` hands out a fixed list of seeds in order."""

    def __init__(self, seeds):
        self.seeds = list(seeds)

    def integers(self, *args, **kwargs):
        return self.seeds.pop(0)


def make_population(known, unknown=(), missing=()):
    k = [TagRecord(i, TagClass.KNOWN, present=i not in missing) for i in known]
    u = [TagRecord(i, TagClass.UNKNOWN) for i in unknown]
    return Population(k, u)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0].split()[0])):
        terminalreporter.write_line(line)

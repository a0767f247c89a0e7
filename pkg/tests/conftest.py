"""
Shared fixtures for the dpmc test suite.
"""

import os
from pathlib import Path

import pytest

from dpmc.abstraction import (
    ATRUE,
    AbstractionMap,
    aconst,
    app,
    asym,
    symb,
    symbol_for_op,
    symbol_for_term,
)
from dpmc.btor2 import read_btor2
from dpmc.config import _get_default_config
from dpmc.errors import TooLarge
from dpmc.ir import bv, var
from dpmc.oracle import CounterModel, bv_valid_exhaustive
from dpmc.propagation import PropagationState

DATA_DIR = Path(__file__).resolve().parent / "data"

# lemmas with more free bits than this are left to the rule validation
AUDIT_MAX_BITS = 20


def check_golden(path: Path, text: str):
    """Compare text with a frozen file; DPMC_UPDATE_GOLDEN=1 rewrites it.

    A missing file is written and the test fails, so it gets committed.
    """
    if os.environ.get("DPMC_UPDATE_GOLDEN") == "1":
        path.write_text(text, encoding="utf-8")
        return
    if not path.exists():
        path.write_text(text, encoding="utf-8")
        pytest.fail(f"golden file {path.name} was missing and has been written; commit it")
    assert path.read_text(encoding="utf-8") == text


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def fig2():
    """Two 2-bit registers x, y from zero; y <= x holds in every reachable state."""
    return read_btor2(DATA_DIR / "fig2.btor2")


@pytest.fixture
def bad_init():
    return read_btor2(DATA_DIR / "bad-init.btor2")


@pytest.fixture
def config():
    return _get_default_config()


@pytest.fixture
def prop_off_config():
    cfg = _get_default_config()
    cfg["engine"]["mode"] = "prop-off"
    return cfg


@pytest.fixture(scope="session")
def audited_lemmas() -> set:
    return set()


def lemma_counter_model(lemma):
    """Bit-level counter-model of a propagation lemma at its own widths, if any."""
    amap = AbstractionMap()
    for s in symb(lemma):
        amap.register(s.origin, s)
    try:
        verdict = bv_valid_exhaustive(amap.gamma(lemma), max_bits=AUDIT_MAX_BITS)
    except TooLarge:
        return None
    return verdict if isinstance(verdict, CounterModel) else None


@pytest.fixture(autouse=True)
def audit_propagation_lemmas(monkeypatch, audited_lemmas):
    """Every lemma propagation emits during a test must be valid bit-precisely."""
    emitted = []
    emit = PropagationState._emit

    def recording(self, lemma, rule_id):
        emitted.append((lemma, rule_id))
        emit(self, lemma, rule_id)

    monkeypatch.setattr(PropagationState, "_emit", recording)
    yield emitted
    for lemma, rule_id in emitted:
        if lemma is ATRUE or lemma in audited_lemmas:
            continue
        audited_lemmas.add(lemma)
        found = lemma_counter_model(lemma)
        assert found is None, f"[{rule_id}] {lemma!r} fails under {found}"


class Sig:
    """Abstract node builders over one width, for hand-written queries."""

    def __init__(self, width: int = 2):
        self.width = width

    def v(self, name: str):
        return asym(symbol_for_term(var(name, bv(self.width))))

    def c(self, value: int):
        return aconst(value, self.width)

    def f(self, kind, *args):
        return app(symbol_for_op(kind, self.width), *args)


@pytest.fixture
def sig():
    return Sig(2)


@pytest.fixture
def golden():
    return check_golden


@pytest.fixture
def lemma_auditor():
    return lemma_counter_model

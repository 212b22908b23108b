import logging

import numpy as np

from topobc.channel import SnrPoint, matched_beam, null_beam, sample_realization
from topobc.layered import Layer, Role, SymbolSpec
from topobc.schemes import Block, SchemeOutcome, decode_block, orient, scheme_alpha
from topobc.state_model import TOPO_1A, Number

logger = logging.getLogger(__name__)


def baseline_zero_forcing(alpha: Number, snr: SnrPoint, rng: np.random.Generator, strong_user: int = 1) -> SchemeOutcome:
    """Perfect CSIT for both users: a on g-null, b on h-null."""
    a = scheme_alpha(alpha)
    block = Block(
        [SymbolSpec("a", Role.USER1, prelog=1.0), SymbolSpec("b", Role.USER2, prelog=a)],
        snr,
        a,
    )
    ch = sample_realization(rng)
    block.transmit(block.signal({"a": null_beam(ch.g), "b": null_beam(ch.h)}), ch, TOPO_1A)

    r1, r2, diagnostics, _ = decode_block(
        block,
        {1: [Layer("A", ("a",), Role.USER1)], 2: [Layer("B", ("b",), Role.USER2)]},
    )
    return orient(SchemeOutcome("zf", r1, r2, block.length, diagnostics), strong_user)


def baseline_single_user(alpha: Number, snr: SnrPoint, rng: np.random.Generator, strong_user: int = 1) -> SchemeOutcome:
    """Serve only the strong user, beamformed at full power."""
    a = scheme_alpha(alpha)
    block = Block([SymbolSpec("a", Role.USER1, prelog=1.0)], snr, a)
    ch = sample_realization(rng)
    block.transmit(block.signal({"a": matched_beam(ch.h)}), ch, TOPO_1A)

    r1, r2, diagnostics, _ = decode_block(block, {1: [Layer("A", ("a",), Role.USER1)], 2: []})
    return orient(SchemeOutcome("su", r1, r2, block.length, diagnostics), strong_user)

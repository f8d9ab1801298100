"""Deterministic, seekable uniform streams for replicated simulations.

Streams are built on the counter-based Philox generator, so any block of
draws can be produced directly from its address without generating the draws
before it. An experiment uses one stream per randomness source (noise, one
perturbation stream per distribution), each addressed by
(master_seed, stream_tag).

Within a stream, draws are laid out iteration-major. For an experiment with
``n_reps`` replicates consuming ``words_per_rep`` draws per replicate per
iteration, the draws for iteration k occupy word offsets

    [k * n_reps * words_per_rep, (k + 1) * n_reps * words_per_rep)

and replicate r owns the ``words_per_rep`` consecutive draws starting at
``k * n_reps * words_per_rep + r * words_per_rep``. Because every address is
absolute, splitting the replicate range into chunks (or across workers) in
any way reproduces bit-identical draws, and any single replicate can be
regenerated in isolation.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

__all__ = [
    "NOISE_STREAM",
    "BERNOULLI_STREAM",
    "SEGMENTED_UNIFORM_STREAM",
    "uniform_block",
]

NOISE_STREAM = 0
BERNOULLI_STREAM = 1
SEGMENTED_UNIFORM_STREAM = 2

# Philox emits four 64-bit words per counter increment, and one float64 draw
# consumes one word; advance() moves the counter, so offsets that are not
# multiples of four need a short discard.
_WORDS_PER_TICK = 4


def _generator_at(master_seed: int, stream_tag: int, word_offset: int) -> Generator:
    bit_gen = Philox(seed=SeedSequence(entropy=(master_seed, stream_tag)))
    ticks, remainder = divmod(word_offset, _WORDS_PER_TICK)
    if ticks:
        bit_gen.advance(ticks)
    gen = Generator(bit_gen)
    if remainder:
        gen.random(remainder)
    return gen


def uniform_block(
    master_seed: int,
    stream_tag: int,
    *,
    n_reps: int,
    words_per_rep: int,
    iteration: int,
    start: int,
    stop: int,
) -> np.ndarray:
    """Uniform draws for replicates [start, stop) at one iteration.

    Returns an array of shape (stop - start, words_per_rep) whose values
    depend only on the stream address, never on how the replicate range is
    partitioned into calls.
    """
    if not 0 <= start <= stop <= n_reps:
        raise ValueError("replicate range must satisfy 0 <= start <= stop <= n_reps")
    offset = words_per_rep * (iteration * n_reps + start)
    count = (stop - start) * words_per_rep
    gen = _generator_at(master_seed, stream_tag, offset)
    return gen.random(count).reshape(stop - start, words_per_rep)

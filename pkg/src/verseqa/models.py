"""Question/candidate scoring models.

Three architectures, each mapping a pair of embedded token sequences to a
probability in (0, 1):

* ``RnnPairModel`` — two LSTMs (one per side), final hidden states
  concatenated into a sigmoid output layer.
* ``CnnPairModel`` — a shared relu filter bank with max-over-positions
  pooling per side, dropout on the pooled vectors during training.
* ``BidafModel`` — shared encoding LSTM, bidirectional attention between
  the two sequences, a modeling LSTM over the combined representation,
  sigmoid readout.

All LSTMs are unidirectional. Trailing PAD (all-zero) rows never affect
outputs: encoding stops at the true sequence length.
"""

from __future__ import annotations

import numpy as np

from .tensor import ParameterSet, ShapeError, Tensor, concat, concat_all


def _xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def _true_length(seq: Tensor) -> int:
    """Number of rows up to and including the last non-zero row."""
    nonzero = np.any(seq.data != 0.0, axis=1)
    idx = np.nonzero(nonzero)[0]
    return 0 if idx.size == 0 else int(idx[-1]) + 1


class LstmCell:
    """Single-layer LSTM parameters; each gate weight is [d_in+d_h, d_h]."""

    GATES = ("i", "f", "o", "c")

    def __init__(self, d_in: int, d_h: int, params: ParameterSet, prefix: str,
                 rng: np.random.Generator | None = None):
        self.d_in = d_in
        self.d_h = d_h
        self.W: dict[str, Tensor] = {}
        self.b: dict[str, Tensor] = {}
        for g in self.GATES:
            w = _xavier(rng, d_in + d_h, d_h) if rng is not None \
                else np.zeros((d_in + d_h, d_h))
            bias = np.zeros((1, d_h))
            if g == "f":
                bias += 1.0  # open forget gate at init
            self.W[g] = params.add(f"{prefix}.W_{g}", Tensor(w))
            self.b[g] = params.add(f"{prefix}.b_{g}", Tensor(bias))

    def zero_state(self) -> tuple[Tensor, Tensor]:
        return Tensor(np.zeros((1, self.d_h))), Tensor(np.zeros((1, self.d_h)))

    def step(self, state: tuple[Tensor, Tensor], x: Tensor) -> tuple[Tensor, Tensor]:
        """One recurrence step: gates sigmoid, candidate tanh."""
        c_prev, h_prev = state
        if x.shape != (1, self.d_in):
            raise ShapeError(f"expected input shape (1, {self.d_in}), got {x.shape}")
        z = concat(x, h_prev, axis=1)
        i = (z @ self.W["i"] + self.b["i"]).sigmoid()
        f = (z @ self.W["f"] + self.b["f"]).sigmoid()
        o = (z @ self.W["o"] + self.b["o"]).sigmoid()
        c_tilde = (z @ self.W["c"] + self.b["c"]).tanh()
        c = f * c_prev + i * c_tilde
        h = o * c.tanh()
        return c, h

    def encode(self, seq: Tensor, length: int | None = None) -> Tensor:
        """Final hidden state after folding over the first ``length`` rows.

        ``length`` defaults to the true (pre-PAD) length; zero-length input
        yields the zero vector.
        """
        if length is None:
            length = _true_length(seq)
        state = self.zero_state()
        for t in range(length):
            state = self.step(state, seq.rows(t, t + 1))
        return state[1]

    def encode_states(self, seq: Tensor, length: int | None = None) -> Tensor:
        """All hidden states as a [length, d_h] tensor (length >= 1 enforced)."""
        if length is None:
            length = _true_length(seq)
        length = max(length, 1)
        state = self.zero_state()
        rows = []
        for t in range(length):
            state = self.step(state, seq.rows(t, t + 1))
            rows.append(state[1])
        return concat_all(rows, axis=0)


def lstm_step(cell: LstmCell, state: tuple[Tensor, Tensor],
              x: Tensor) -> tuple[Tensor, Tensor]:
    return cell.step(state, x)


def encode_lstm(cell: LstmCell, seq: Tensor, length: int | None = None) -> Tensor:
    return cell.encode(seq, length)


class RnnPairModel:
    kind = "rnn"

    def __init__(self, d_in: int, d_h: int = 100, seed: int = 0,
                 zero_init: bool = False):
        self.d_in = d_in
        self.d_h = d_h
        self.params = ParameterSet()
        rng = None if zero_init else np.random.default_rng(seed)
        self.q_cell = LstmCell(d_in, d_h, self.params, "q_cell", rng)
        self.a_cell = LstmCell(d_in, d_h, self.params, "a_cell", rng)
        w = np.zeros((2 * d_h, 1)) if zero_init else _xavier(rng, 2 * d_h, 1)
        self.w_out = self.params.add("out.W", Tensor(w))
        self.b_out = self.params.add("out.b", Tensor(np.zeros((1, 1))))

    def config(self) -> dict:
        return {"d_in": self.d_in, "d_h": self.d_h}

    def forward(self, q_emb: Tensor, a_emb: Tensor, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        h_q = self.q_cell.encode(q_emb)
        h_a = self.a_cell.encode(a_emb)
        m = concat(h_q, h_a, axis=1)
        return (m @ self.w_out + self.b_out).sigmoid()

    def input_layout(self) -> dict[str, tuple]:
        layout = {}
        for prefix in ("q_cell", "a_cell"):
            for g in LstmCell.GATES:
                layout[f"{prefix}.W_{g}"] = ("lstm_input", self.d_h)
        return layout


class CnnPairModel:
    kind = "cnn"

    def __init__(self, d_in: int, n_filters: int = 100, window: int = 3,
                 dropout: float = 0.5, seed: int = 0, zero_init: bool = False):
        if window < 1:
            raise ValueError("window must be >= 1")
        if not (0.0 <= dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")
        self.d_in = d_in
        self.n_filters = n_filters
        self.window = window
        self.dropout = dropout
        self.params = ParameterSet()
        rng = None if zero_init else np.random.default_rng(seed)
        w = np.zeros((window * d_in, n_filters)) if zero_init \
            else _xavier(rng, window * d_in, n_filters)
        self.w_conv = self.params.add("conv.W", Tensor(w))
        self.b_conv = self.params.add("conv.b", Tensor(np.zeros((1, n_filters))))
        wo = np.zeros((2 * n_filters, 1)) if zero_init else _xavier(rng, 2 * n_filters, 1)
        self.w_out = self.params.add("out.W", Tensor(wo))
        self.b_out = self.params.add("out.b", Tensor(np.zeros((1, 1))))

    def config(self) -> dict:
        return {"d_in": self.d_in, "n_filters": self.n_filters,
                "window": self.window, "dropout": self.dropout}

    def _pool(self, seq: Tensor) -> Tensor:
        if seq.shape[0] < self.window:
            pad = np.zeros((self.window - seq.shape[0], self.d_in))
            seq = concat(seq, Tensor(pad), axis=0)
        length = max(_true_length(seq), self.window)  # pad up to one window
        feats = []
        for i in range(length - self.window + 1):
            win = seq.rows(i, i + self.window).reshape(1, self.window * self.d_in)
            feats.append((win @ self.w_conv + self.b_conv).relu())
        stacked = concat_all(feats, axis=0)
        return stacked.max(axis=0).reshape(1, self.n_filters)

    def forward(self, q_emb: Tensor, a_emb: Tensor, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        q_v = self._pool(q_emb)
        a_v = self._pool(a_emb)
        if training and self.dropout > 0.0:
            if rng is None:
                raise ValueError("training with dropout requires an rng")
            keep = 1.0 - self.dropout
            # inverted dropout: scale kept units so inference needs no rescale
            q_v = q_v * Tensor((rng.random((1, self.n_filters)) < keep) / keep)
            a_v = a_v * Tensor((rng.random((1, self.n_filters)) < keep) / keep)
        m = concat(q_v, a_v, axis=1)
        return (m @ self.w_out + self.b_out).sigmoid()

    def input_layout(self) -> dict[str, tuple]:
        return {"conv.W": ("conv_input", self.window)}


def bidaf_attention(q_enc: Tensor, a_enc: Tensor, w_alpha: Tensor
                    ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Bidirectional attention between a candidate and a question encoding.

    Similarity: S[j, k] = w . [a_j | q_k | a_j*q_k].  Per-candidate-word
    attention averages question vectors with softmax rows of S; the reverse
    direction pools candidate words with softmax over per-row maxima and
    tiles the result. Returns (S, attended_q, tiled_a, combined) where
    combined[j] = [a_j | attq_j | a_j*attq_j | a_j*tila_j].
    """
    t_a, d_h = a_enc.shape
    t_q = q_enc.shape[0]
    if q_enc.shape[1] != d_h:
        raise ShapeError(f"encoding dims differ: {q_enc.shape} vs {a_enc.shape}")
    if w_alpha.shape != (3 * d_h, 1):
        raise ShapeError(f"similarity weights must be ({3 * d_h}, 1), got {w_alpha.shape}")

    w1 = w_alpha.rows(0, d_h)
    w2 = w_alpha.rows(d_h, 2 * d_h)
    w3 = w_alpha.rows(2 * d_h, 3 * d_h)
    ones_a = Tensor(np.ones((t_a, 1)))
    ones_q = Tensor(np.ones((1, t_q)))

    s_a = (a_enc @ w1) @ ones_q                      # a-term tiled over columns
    s_q = ones_a @ (q_enc @ w2).transpose()          # q-term tiled over rows
    s_prod = (a_enc * (ones_a @ w3.transpose())) @ q_enc.transpose()
    sim = s_a + s_q + s_prod                         # [t_a, t_q]

    att_q = sim.softmax() @ q_enc                    # [t_a, d_h]
    row_max = sim.max(axis=1).reshape(1, t_a)
    pooled_a = row_max.softmax() @ a_enc             # [1, d_h]
    til_a = ones_a @ pooled_a                        # [t_a, d_h]

    combined = concat_all([a_enc, att_q, a_enc * att_q, a_enc * til_a], axis=1)
    return sim, att_q, til_a, combined


class BidafModel:
    kind = "bidaf"

    def __init__(self, d_in: int, d_h: int = 100, seed: int = 0,
                 zero_init: bool = False, readout: str = "final"):
        if readout not in ("final", "maxpool"):
            raise ValueError(f"unknown readout: {readout}")
        self.d_in = d_in
        self.d_h = d_h
        self.readout = readout
        self.params = ParameterSet()
        rng = None if zero_init else np.random.default_rng(seed)
        self.enc_cell = LstmCell(d_in, d_h, self.params, "enc_cell", rng)
        wa = np.zeros((3 * d_h, 1)) if zero_init else _xavier(rng, 3 * d_h, 1)
        self.w_alpha = self.params.add("attn.w", Tensor(wa))
        self.model_cell = LstmCell(4 * d_h, d_h, self.params, "model_cell", rng)
        wo = np.zeros((d_h, 1)) if zero_init else _xavier(rng, d_h, 1)
        self.w_out = self.params.add("out.W", Tensor(wo))
        self.b_out = self.params.add("out.b", Tensor(np.zeros((1, 1))))

    def config(self) -> dict:
        return {"d_in": self.d_in, "d_h": self.d_h, "readout": self.readout}

    def forward(self, q_emb: Tensor, a_emb: Tensor, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        q_enc = self.enc_cell.encode_states(q_emb)
        a_enc = self.enc_cell.encode_states(a_emb)
        _, _, _, combined = bidaf_attention(q_enc, a_enc, self.w_alpha)
        if self.readout == "final":
            m = self.model_cell.encode(combined, length=combined.shape[0])
        else:
            states = self.model_cell.encode_states(combined, length=combined.shape[0])
            m = states.max(axis=0).reshape(1, self.d_h)
        return (m @ self.w_out + self.b_out).sigmoid()

    def input_layout(self) -> dict[str, tuple]:
        return {f"enc_cell.W_{g}": ("lstm_input", self.d_h) for g in LstmCell.GATES}


MODEL_KINDS = {
    "rnn": RnnPairModel,
    "cnn": CnnPairModel,
    "bidaf": BidafModel,
}


def build_model(kind: str, seed: int = 0, **config):
    """Construct a model by kind name; config keys match each constructor."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind: {kind!r}")
    return MODEL_KINDS[kind](seed=seed, **config)

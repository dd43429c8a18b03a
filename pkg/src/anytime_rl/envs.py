"""Synthetic verifiable-reasoning environments.

Two environments are provided:

* ``NeedleSearchEnv`` — find a hidden integer target in [0, N). Each policy
  probe gets one environment feedback token (LO / HI / HIT), creating a
  generation-verification gap: verifying a candidate is one token, finding it
  takes search. Binary search solves it in ~2*log2(N) tokens.
* ``ScriptedEnv`` — a fully enumerable environment driven by an explicit
  per-question answer-reward table, with no feedback tokens. Small enough
  that objectives and gradients can be computed by exact enumeration.

Feedback tokens are environment-origin: they count toward the token budget
(budgets are purely positional) but never receive policy-gradient credit.

Token id conventions
    NeedleSearch: probes 0..N-1, STOP = N, LO = N+1, HI = N+2, HIT = N+3.
    Scripted:     symbols 0..k-1, STOP = k.
Thinking actions are exactly the policy-origin tokens (probes/symbols + stop),
so action ids coincide with token ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Token, TokenOrigin, TruncatedView


@dataclass(frozen=True)
class EnvSpec:
    """Static sizes an environment exposes to policies and oracles."""

    vocab_size: int
    n_answers: int
    max_len: int
    think_feature_dim: int
    summary_feature_dim: int
    n_thinking_actions: int
    stop_token: int


@dataclass(frozen=True)
class NeedleSearchInstance:
    target: int
    n: int

    def __post_init__(self):
        if not 0 <= self.target < self.n:
            raise ValueError(f"target {self.target} outside [0, {self.n})")


@dataclass(frozen=True)
class ScriptedInstance:
    question_id: int
    answer_rewards: tuple[int, ...]  # reward in {0,1} per answer id

    def __post_init__(self):
        if any(r not in (0, 1) for r in self.answer_rewards):
            raise ValueError("scripted rewards must be 0 or 1")


class NeedleSearchEnv:
    """Hidden-target search over [0, N) with LO/HI/HIT feedback.

    The thinking state is the feasible interval [lo, hi] implied by the
    feedback so far, plus an absorbing hit flag; states are one-hot encoded
    (N(N+1)/2 interval states + 1 hit state). The summary context encodes
    (hit flag, relevant probe, truncation marker) as concatenated bits.
    """

    def __init__(self, n: int = 16, max_len: int = 32):
        if n < 1:
            raise ValueError("search space must be nonempty")
        self.n = n
        self.max_len = max_len
        self.stop_token = n
        self.lo_token = n + 1
        self.hi_token = n + 2
        self.hit_token = n + 3
        self.n_answers = n
        self.n_thinking_actions = n + 1  # probes + stop
        self.vocab_size = n + 4
        # interval states (lo <= hi) + one absorbing hit state
        self._n_intervals = n * (n + 1) // 2
        self.think_feature_dim = self._n_intervals + 1
        # [hit, probe one-hot, no-probe, marker]
        self.summary_feature_dim = n + 3
        # triangular row offsets: interval (lo, hi) -> offset[lo] + (hi - lo)
        self._row_offset = np.zeros(n, dtype=int)
        for lo in range(1, n):
            self._row_offset[lo] = self._row_offset[lo - 1] + (n - (lo - 1))

    def spec(self) -> EnvSpec:
        return EnvSpec(
            vocab_size=self.vocab_size,
            n_answers=self.n_answers,
            max_len=self.max_len,
            think_feature_dim=self.think_feature_dim,
            summary_feature_dim=self.summary_feature_dim,
            n_thinking_actions=self.n_thinking_actions,
            stop_token=self.stop_token,
        )

    # -- questions ---------------------------------------------------------

    def questions(self) -> list[tuple[int, NeedleSearchInstance]]:
        """All instances; question id is the target itself (stable, replayable)."""
        return [(t, NeedleSearchInstance(target=t, n=self.n)) for t in range(self.n)]

    def instance_for(self, question_id: int) -> NeedleSearchInstance:
        return NeedleSearchInstance(target=question_id, n=self.n)

    def sample_question(self, rng: np.random.Generator) -> tuple[int, NeedleSearchInstance]:
        target = int(rng.integers(0, self.n))
        return target, NeedleSearchInstance(target=target, n=self.n)

    # -- dynamics ----------------------------------------------------------

    def env_response(self, instance: NeedleSearchInstance, probe: int) -> int | None:
        """Feedback token for a probe; exactly one per probe."""
        if probe == self.stop_token or not 0 <= probe < self.n:
            raise ValueError(f"probe must be a non-stop policy symbol, got {probe}")
        if probe < instance.target:
            return self.lo_token
        if probe > instance.target:
            return self.hi_token
        return self.hit_token

    def verify(self, instance: NeedleSearchInstance, answer: int) -> int:
        if not 0 <= answer < self.n:
            raise ValueError(f"answer {answer} outside answer space [0, {self.n})")
        return 1 if answer == instance.target else 0

    # -- thinking state ----------------------------------------------------
    # state tuple: (lo, hi, hit, last_probe, summary_probe)
    # summary_probe is the probe preceding HIT once hit, else the last probe.

    def initial_think_state(self, instance: NeedleSearchInstance):
        return (0, self.n - 1, False, -1, -1)

    def advance_think_state(self, instance: NeedleSearchInstance, state, token: Token):
        lo, hi, hit, last_probe, summary_probe = state
        if token.origin is TokenOrigin.POLICY:
            if token.id == self.stop_token:
                return state
            if not hit:
                summary_probe = token.id
            return (lo, hi, hit, token.id, summary_probe)
        if hit:
            return state
        if token.id == self.hit_token:
            return (lo, hi, True, last_probe, summary_probe)
        if last_probe >= 0:
            if token.id == self.lo_token:
                lo = max(lo, last_probe + 1)
            elif token.id == self.hi_token:
                hi = min(hi, last_probe - 1)
        # arbitrary (non-dynamics) prefixes may be inconsistent; clamp
        lo = min(lo, self.n - 1)
        hi = max(hi, 0)
        if hi < lo:
            hi = lo
        return (lo, hi, hit, last_probe, summary_probe)

    def think_state_index(self, state) -> int:
        lo, hi, hit, _, _ = state
        if hit:
            return self._n_intervals
        return int(self._row_offset[lo]) + (hi - lo)

    def replay_think_state(self, instance: NeedleSearchInstance, prefix: tuple[Token, ...]):
        state = self.initial_think_state(instance)
        for tok in prefix:
            state = self.advance_think_state(instance, state, tok)
        return state

    def thinking_features(self, instance: NeedleSearchInstance, prefix: tuple[Token, ...]) -> np.ndarray:
        feats = np.zeros(self.think_feature_dim)
        feats[self.think_state_index(self.replay_think_state(instance, prefix))] = 1.0
        return feats

    # -- summary context ---------------------------------------------------

    def summary_state_of(self, state, last_token_id: int, truncated: bool) -> tuple[bool, int, bool]:
        _, _, hit, _, summary_probe = state
        return (hit, summary_probe, truncated)

    def summary_state(self, instance: NeedleSearchInstance, view: TruncatedView) -> tuple[bool, int, bool]:
        """(hit flag, relevant probe or -1, truncation marker) for a view."""
        state = self.replay_think_state(instance, view.prefix)
        last = view.prefix[-1].id if view.prefix else -1
        return self.summary_state_of(state, last, view.truncated)

    def summary_features_from_state(self, state: tuple[bool, int, bool]) -> np.ndarray:
        hit, probe, marker = state
        feats = np.zeros(self.summary_feature_dim)
        if hit:
            feats[0] = 1.0
        if probe >= 0:
            feats[1 + probe] = 1.0
        else:
            feats[1 + self.n] = 1.0  # designated null encoding
        if marker:
            feats[2 + self.n] = 1.0
        return feats

    def summary_features(self, instance: NeedleSearchInstance, view: TruncatedView) -> np.ndarray:
        return self.summary_features_from_state(self.summary_state(instance, view))

    # -- oracle summary support ---------------------------------------------

    def oracle_state_of(self, state) -> tuple[int, int, bool]:
        lo, hi, hit, _, _ = state
        return (lo, hi, hit)

    def feasible_interval(self, instance: NeedleSearchInstance, view: TruncatedView) -> tuple[int, int, bool]:
        return self.oracle_state_of(self.replay_think_state(instance, view.prefix))

    def oracle_answer_distribution(self, instance: NeedleSearchInstance, view: TruncatedView) -> np.ndarray:
        """Optimal-summary answer distribution: the verified probe once HIT is
        in view, otherwise uniform over the feasible interval."""
        probs = np.zeros(self.n)
        lo, hi, hit = self.feasible_interval(instance, view)
        if hit:
            probs[instance.target] = 1.0
        else:
            probs[lo : hi + 1] = 1.0 / (hi - lo + 1)
        return probs

    def oracle_sampler_for(self, instance: NeedleSearchInstance, oracle_state: tuple[int, int, bool]):
        """Vectorized sampler us -> answers for the oracle summary.

        The coupling puts the correct answer on u < 1/w (w = feasible width),
        so for a fixed u correctness is monotone under interval shrinkage:
        nested views of one trace evaluated with shared uniforms can never
        see their reward decrease with budget.
        """
        lo, hi, hit = oracle_state
        target = instance.target
        if hit:
            return lambda us: np.full(np.atleast_1d(us).shape, target, dtype=int)
        w = hi - lo + 1
        others = np.array([a for a in range(lo, hi + 1) if a != target], dtype=int)
        fallback = target if lo <= target <= hi else lo

        def draw(us: np.ndarray) -> np.ndarray:
            us = np.atleast_1d(np.asarray(us, dtype=float))
            answers = np.full(us.shape, fallback, dtype=int)
            miss = us * w >= 1.0
            if others.size and miss.any():
                scaled = (us[miss] - 1.0 / w) / (1.0 - 1.0 / w)
                idx = np.minimum((scaled * others.size).astype(int), others.size - 1)
                answers[miss] = others[idx]
            return answers

        return draw

    def oracle_sampler(self, instance: NeedleSearchInstance, view: TruncatedView):
        return self.oracle_sampler_for(instance, self.feasible_interval(instance, view))

    def oracle_sample_answer(self, instance: NeedleSearchInstance, view: TruncatedView, u: float) -> int:
        return int(self.oracle_sampler(instance, view)(u)[0])


class ScriptedEnv:
    """Table-driven environment for exact enumeration oracles.

    Questions carry an explicit answer->reward table; traces are strings over
    a small symbol alphabet with no feedback tokens. Unlike NeedleSearch
    (whose instance is hidden behind the verifier), the scripted question is
    observable context: thinking contexts are one-hot over (question, prefix
    string), summary contexts over (question, last symbol in view, marker).
    """

    def __init__(self, tables: list[tuple[int, ...]], n_symbols: int = 2, max_len: int = 6):
        if n_symbols < 1:
            raise ValueError("need at least one policy symbol")
        if not tables:
            raise ValueError("need at least one question")
        n_answers = len(tables[0])
        if any(len(t) != n_answers for t in tables):
            raise ValueError("all questions must cover the same answer space")
        self.n_symbols = n_symbols
        self.max_len = max_len
        self.stop_token = n_symbols
        self.n_answers = n_answers
        self.n_questions = len(tables)
        self.n_thinking_actions = n_symbols + 1
        self.vocab_size = n_symbols + 1
        self._tables = [tuple(int(r) for r in t) for t in tables]
        # prefix index offsets by length: sum_{l<L} k^l
        self._offsets = np.zeros(max_len + 1, dtype=int)
        for length in range(1, max_len + 1):
            self._offsets[length] = self._offsets[length - 1] + n_symbols ** (length - 1)
        # decisions happen at prefix lengths 0..max_len-1, one block per question
        self._prefix_states = int(self._offsets[max_len])
        self.think_feature_dim = self.n_questions * self._prefix_states
        # per question: [last-symbol one-hot: none/sym_0../sym_{k-1}/stop, marker bit]
        self._summary_block = n_symbols + 3
        self.summary_feature_dim = self.n_questions * self._summary_block

    def spec(self) -> EnvSpec:
        return EnvSpec(
            vocab_size=self.vocab_size,
            n_answers=self.n_answers,
            max_len=self.max_len,
            think_feature_dim=self.think_feature_dim,
            summary_feature_dim=self.summary_feature_dim,
            n_thinking_actions=self.n_thinking_actions,
            stop_token=self.stop_token,
        )

    def questions(self) -> list[tuple[int, ScriptedInstance]]:
        return [
            (qid, ScriptedInstance(question_id=qid, answer_rewards=t))
            for qid, t in enumerate(self._tables)
        ]

    def instance_for(self, question_id: int) -> ScriptedInstance:
        return ScriptedInstance(question_id=question_id, answer_rewards=self._tables[question_id])

    def sample_question(self, rng: np.random.Generator) -> tuple[int, ScriptedInstance]:
        qid = int(rng.integers(0, len(self._tables)))
        return qid, ScriptedInstance(question_id=qid, answer_rewards=self._tables[qid])

    def env_response(self, instance: ScriptedInstance, probe: int) -> int | None:
        if probe == self.stop_token or not 0 <= probe < self.n_symbols:
            raise ValueError(f"probe must be a non-stop policy symbol, got {probe}")
        return None

    def verify(self, instance: ScriptedInstance, answer: int) -> int:
        if not 0 <= answer < self.n_answers:
            raise ValueError(f"answer {answer} outside answer space [0, {self.n_answers})")
        return instance.answer_rewards[answer]

    # -- thinking state: (question, length, lex rank) over symbol strings ----

    def initial_think_state(self, instance: ScriptedInstance):
        return (instance.question_id, 0, 0)

    def advance_think_state(self, instance: ScriptedInstance, state, token: Token):
        qid, length, rank = state
        if token.id == self.stop_token or token.origin is TokenOrigin.ENV:
            return state
        return (qid, length + 1, rank * self.n_symbols + token.id)

    def think_state_index(self, state) -> int:
        # decisions only happen before the cap, so length < max_len here
        qid, length, rank = state
        if length >= self.max_len:
            raise ValueError(f"no thinking state at prefix length {length} >= cap {self.max_len}")
        return qid * self._prefix_states + int(self._offsets[length]) + rank

    def replay_think_state(self, instance: ScriptedInstance, prefix: tuple[Token, ...]):
        state = self.initial_think_state(instance)
        for tok in prefix:
            state = self.advance_think_state(instance, state, tok)
        return state

    def thinking_features(self, instance: ScriptedInstance, prefix: tuple[Token, ...]) -> np.ndarray:
        feats = np.zeros(self.think_feature_dim)
        feats[self.think_state_index(self.replay_think_state(instance, prefix))] = 1.0
        return feats

    # -- summary context ----------------------------------------------------

    def summary_state_of(self, state, last_token_id: int, truncated: bool) -> tuple[int, int, bool]:
        return (state[0], last_token_id, truncated)

    def summary_state(self, instance: ScriptedInstance, view: TruncatedView) -> tuple[int, int, bool]:
        last = -1 if not view.prefix else view.prefix[-1].id
        return (instance.question_id, last, view.truncated)

    def summary_features_from_state(self, state: tuple[int, int, bool]) -> np.ndarray:
        qid, last, marker = state
        feats = np.zeros(self.summary_feature_dim)
        base = qid * self._summary_block
        slot = 0 if last < 0 else last + 1  # none, sym_0.., stop
        feats[base + slot] = 1.0
        if marker:
            feats[base + self._summary_block - 1] = 1.0
        return feats

    def summary_features(self, instance: ScriptedInstance, view: TruncatedView) -> np.ndarray:
        return self.summary_features_from_state(self.summary_state(instance, view))

    # -- oracle summary ------------------------------------------------------

    def oracle_state_of(self, state) -> int:
        return 0  # the best scripted answer is view-independent

    def oracle_answer_distribution(self, instance: ScriptedInstance, view: TruncatedView) -> np.ndarray:
        probs = np.zeros(self.n_answers)
        best = next((a for a, r in enumerate(instance.answer_rewards) if r == 1), 0)
        probs[best] = 1.0
        return probs

    def oracle_sampler_for(self, instance: ScriptedInstance, oracle_state):
        best = next((a for a, r in enumerate(instance.answer_rewards) if r == 1), 0)
        return lambda us: np.full(np.atleast_1d(us).shape, best, dtype=int)

    def oracle_sampler(self, instance: ScriptedInstance, view: TruncatedView):
        return self.oracle_sampler_for(instance, 0)

    def oracle_sample_answer(self, instance: ScriptedInstance, view: TruncatedView, u: float) -> int:
        return int(self.oracle_sampler(instance, view)(u)[0])


def budget_cut_states(env, instance, tokens: tuple[Token, ...], cuts) -> list[tuple]:
    """(think state, last token id, truncated) after each cut, in one pass.

    cuts must be nondecreasing token counts; the state walk is shared across
    nested cuts instead of replaying the prefix per budget.
    """
    out = []
    state = env.initial_think_state(instance)
    pos = 0
    n = len(tokens)
    previous = -1
    for cut in cuts:
        cut = int(cut)
        if cut < previous:
            raise ValueError("budget cuts must be nondecreasing")
        previous = cut
        stop_at = min(cut, n)
        while pos < stop_at:
            state = env.advance_think_state(instance, state, tokens[pos])
            pos += 1
        last = tokens[pos - 1].id if pos > 0 else -1
        out.append((state, last, cut < n))
    return out


def reward_vector(env, instance) -> np.ndarray:
    """verify(instance, answer) for every answer id."""
    return np.array([env.verify(instance, a) for a in range(env.n_answers)], dtype=float)


def make_policy_token(token_id: int) -> Token:
    return Token(id=token_id, origin=TokenOrigin.POLICY)


def make_env_token(token_id: int) -> Token:
    return Token(id=token_id, origin=TokenOrigin.ENV)


def env_to_config(env) -> dict:
    """JSON-friendly description of an environment (checkpoint metadata)."""
    if isinstance(env, NeedleSearchEnv):
        return {"kind": "needle", "n": env.n, "max_len": env.max_len}
    if isinstance(env, ScriptedEnv):
        return {
            "kind": "scripted",
            "n_symbols": env.n_symbols,
            "max_len": env.max_len,
            "tables": [list(inst.answer_rewards) for _, inst in env.questions()],
        }
    raise TypeError(f"unknown environment type {type(env).__name__}")


def env_from_config(config: dict):
    kind = config.get("kind")
    if kind == "needle":
        return NeedleSearchEnv(n=int(config["n"]), max_len=int(config["max_len"]))
    if kind == "scripted":
        return ScriptedEnv(
            tables=[tuple(t) for t in config["tables"]],
            n_symbols=int(config["n_symbols"]),
            max_len=int(config["max_len"]),
        )
    raise ValueError(f"unknown environment kind {kind!r}")


def load_scripted_env(path: str) -> ScriptedEnv:
    """Load a scripted environment from its table file.

    Format (flat key=value plus question blocks, '#' comments)::

        symbols = 2
        max_len = 6
        answers = 2

        question 0
        reward 0 = 1
        reward 1 = 0

    Every question block must assign a reward to every answer id.
    """
    n_symbols = max_len = n_answers = None
    tables: dict[int, dict[int, int]] = {}
    current: dict[int, int] | None = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("question"):
                qid = int(line.split()[1])
                if qid in tables:
                    raise ValueError(f"{path}:{lineno}: duplicate question {qid}")
                current = {}
                tables[qid] = current
            elif line.startswith("reward"):
                if current is None:
                    raise ValueError(f"{path}:{lineno}: reward outside a question block")
                head, value = line.split("=")
                answer = int(head.split()[1])
                current[answer] = int(value)
            elif "=" in line:
                key, value = (part.strip() for part in line.split("=", 1))
                if key == "symbols":
                    n_symbols = int(value)
                elif key == "max_len":
                    max_len = int(value)
                elif key == "answers":
                    n_answers = int(value)
                else:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            else:
                raise ValueError(f"{path}:{lineno}: unparseable line {line!r}")
    if n_symbols is None or max_len is None or n_answers is None:
        raise ValueError(f"{path}: missing one of symbols/max_len/answers")
    if not tables:
        raise ValueError(f"{path}: no questions defined")
    ordered = []
    for qid in range(len(tables)):
        if qid not in tables:
            raise ValueError(f"{path}: question ids must be contiguous from 0, missing {qid}")
        block = tables[qid]
        missing = [a for a in range(n_answers) if a not in block]
        if missing:
            raise ValueError(f"{path}: question {qid} missing rewards for answers {missing}")
        ordered.append(tuple(block[a] for a in range(n_answers)))
    return ScriptedEnv(tables=ordered, n_symbols=n_symbols, max_len=max_len)


def save_scripted_env(env: ScriptedEnv, path: str) -> None:
    """Write a scripted environment in the format read by load_scripted_env."""
    lines = [
        f"symbols = {env.n_symbols}",
        f"max_len = {env.max_len}",
        f"answers = {env.n_answers}",
        "",
    ]
    for qid, instance in env.questions():
        lines.append(f"question {qid}")
        for answer, reward in enumerate(instance.answer_rewards):
            lines.append(f"reward {answer} = {reward}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))

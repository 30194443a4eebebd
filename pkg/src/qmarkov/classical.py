"""Exact joint-probability engines for classical hidden processes.

Covers same-time hidden Markov processes, backward hidden Markov processes,
time-consecutive hidden processes, generalized hidden processes, and the
lifting of a hidden Markov process to a Markov chain on product alphabets.

Markov operators on finite alphabets are represented as row-stochastic
matrices acting on functions by right multiplication: ``(P f)(h) =
sum_j P[h, j] f(j)``.  All alphabets are finite, all tables exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .config import MASS_TOL, CapExceededError, table_cap


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# validated probability data
# ---------------------------------------------------------------------------

def probability_vector(p, name: str = "probability vector") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional")
    if p.min() < -1e-12:
        raise ValueError(f"{name} has a negative weight {p.min():.3e}")
    if abs(p.sum() - 1.0) > MASS_TOL:
        raise ValueError(f"{name} sums to {p.sum():.12f}, expected 1")
    return _freeze(np.clip(p, 0.0, None))


def stochastic_matrix(m, name: str = "stochastic matrix") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional")
    if m.min() < -1e-12:
        raise ValueError(f"{name} has a negative entry {m.min():.3e}")
    sums = m.sum(axis=1)
    bad = np.abs(sums - 1.0).max()
    if bad > MASS_TOL:
        raise ValueError(f"{name} has a row summing to 1{bad:+.3e} (zero rows are an error)")
    return _freeze(np.clip(m, 0.0, None))


@dataclass(frozen=True)
class ClassicalHMM:
    """Hidden Markov process data: initial law, hidden transitions, emissions.

    ``transitions[n]`` maps hidden step n to step n+1 (shape
    hidden_sizes[n] x hidden_sizes[n+1]); ``emissions[n]`` conditions the
    observation at step n on the hidden state at the same step (shape
    hidden_sizes[n] x obs_sizes[n]).  Homogeneous models repeat one matrix.
    """

    initial: np.ndarray
    transitions: tuple
    emissions: tuple

    def __init__(self, initial, transitions, emissions):
        initial = probability_vector(initial, "initial distribution")
        transitions = tuple(stochastic_matrix(t, f"transition[{i}]") for i, t in enumerate(transitions))
        emissions = tuple(stochastic_matrix(b, f"emission[{i}]") for i, b in enumerate(emissions))
        if not emissions:
            raise ValueError("at least one emission matrix is required")
        sizes = [len(initial)]
        for t in transitions:
            if t.shape[0] != sizes[-1]:
                raise ValueError(f"transition chain breaks: {t.shape[0]} rows after size {sizes[-1]}")
            sizes.append(t.shape[1])
        for n, b in enumerate(emissions):
            if n >= len(sizes):
                raise ValueError("more emission steps than hidden steps")
            if b.shape[0] != sizes[n]:
                raise ValueError(f"emission[{n}] has {b.shape[0]} rows, hidden size is {sizes[n]}")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "emissions", emissions)

    @classmethod
    def homogeneous(cls, initial, transition, emission, horizon: int) -> "ClassicalHMM":
        """Model with one transition/emission matrix reused for steps 0..horizon."""
        return cls(initial, [transition] * horizon, [emission] * (horizon + 1))

    @property
    def horizon(self) -> int:
        """Largest step index n usable in a length-(n+1) path."""
        return len(self.emissions) - 1

    def hidden_sizes(self) -> list:
        sizes = [len(self.initial)]
        for t in self.transitions:
            sizes.append(t.shape[1])
        return sizes

    def obs_sizes(self) -> list:
        return [b.shape[1] for b in self.emissions]

    def transition(self, n: int) -> np.ndarray:
        return self.transitions[n]

    def emission(self, n: int) -> np.ndarray:
        return self.emissions[n]


@dataclass(frozen=True)
class JointLaw:
    """Dense exact probability table over finite paths.

    ``probs`` has one axis per site, in site order; sums to 1.
    """

    alphabet_sizes: tuple
    probs: np.ndarray

    def __init__(self, probs, clamp: bool = True):
        p = np.asarray(probs, dtype=float)
        if clamp:
            tiny = (p < 0) & (p > -1e-10)
            if tiny.any():
                p = np.where(tiny, 0.0, p)
        if p.min() < 0:
            raise ValueError(f"joint law has negative entry {p.min():.3e}")
        if abs(p.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"joint law mass is {p.sum():.12f}, expected 1")
        object.__setattr__(self, "alphabet_sizes", tuple(p.shape))
        object.__setattr__(self, "probs", _freeze(p))

    @property
    def n_sites(self) -> int:
        return self.probs.ndim

    def prob(self, path) -> float:
        return float(self.probs[tuple(path)])

    def total_mass(self) -> float:
        return float(self.probs.sum())

    def marginal(self, sites) -> np.ndarray:
        """Dense marginal table over the given (ordered) subset of sites."""
        sites = list(sites)
        drop = tuple(i for i in range(self.n_sites) if i not in sites)
        out = self.probs.sum(axis=drop) if drop else self.probs
        order = np.argsort(np.argsort(sites))
        return out.transpose(tuple(order)) if list(order) != list(range(len(sites))) else out

    def marginalize_last(self, k: int = 1) -> "JointLaw":
        """Sum out the last ``k`` sites."""
        p = self.probs
        for _ in range(k):
            p = p.sum(axis=-1)
        return JointLaw(p, clamp=False)

    def paths(self):
        return itertools.product(*(range(s) for s in self.alphabet_sizes))


def _check_table_size(sizes, cap: int | None = None) -> None:
    cap = table_cap() if cap is None else cap
    total = int(np.prod([int(s) for s in sizes], dtype=object))
    if total > cap:
        raise CapExceededError(f"dense table with {total} entries exceeds cap {cap}")


# ---------------------------------------------------------------------------
# same-time hidden Markov process
# ---------------------------------------------------------------------------

def hmm_joint_prob(model: ClassicalHMM, hidden_path, obs_path) -> float:
    """Joint probability p0_{j0} prod p_{j(m-1) jm} prod b_m(jm, km)."""
    hidden_path = list(hidden_path)
    obs_path = list(obs_path)
    if len(hidden_path) != len(obs_path):
        raise ValueError("hidden and observation paths must have equal length")
    n = len(hidden_path) - 1
    if n < 0 or n > model.horizon:
        raise ValueError(f"path length {n + 1} outside model horizon {model.horizon + 1}")
    p = model.initial[hidden_path[0]]
    for m in range(1, n + 1):
        p *= model.transition(m - 1)[hidden_path[m - 1], hidden_path[m]]
    for m in range(n + 1):
        p *= model.emission(m)[hidden_path[m], obs_path[m]]
    return float(p)


def hmm_joint_law(model: ClassicalHMM, n: int, cap: int | None = None) -> JointLaw:
    """Dense law over interleaved sites (H_0, O_0, ..., H_n, O_n)."""
    if n > model.horizon:
        raise ValueError(f"horizon {n} exceeds model horizon {model.horizon}")
    hs, os_ = model.hidden_sizes(), model.obs_sizes()
    sizes = []
    for m in range(n + 1):
        sizes += [hs[m], os_[m]]
    _check_table_size(sizes, cap)
    arr = np.einsum("h,hk->hk", model.initial, model.emission(0))
    for m in range(1, n + 1):
        arr = np.einsum("...h,hj,jk->...hjk", arr, model.transition(m - 1), model.emission(m))
    return JointLaw(arr)


def observable_marginal(model: ClassicalHMM, obs_path) -> float:
    """P(O_0..O_n = obs_path) by the forward recursion, O(n d^2)."""
    obs_path = list(obs_path)
    n = len(obs_path) - 1
    if n < 0 or n > model.horizon:
        raise ValueError(f"path length {n + 1} outside model horizon {model.horizon + 1}")
    alpha = model.initial * model.emission(0)[:, obs_path[0]]
    for m in range(1, n + 1):
        alpha = (alpha @ model.transition(m - 1)) * model.emission(m)[:, obs_path[m]]
    return float(alpha.sum())


def hidden_chain_law(model: ClassicalHMM, n: int, cap: int | None = None) -> JointLaw:
    """Dense law of the bare hidden Markov chain over sites H_0..H_n."""
    sizes = model.hidden_sizes()[: n + 1]
    _check_table_size(sizes, cap)
    arr = model.initial
    for m in range(1, n + 1):
        arr = np.einsum("...h,hj->...hj", arr, model.transition(m - 1))
    return JointLaw(arr)


# ---------------------------------------------------------------------------
# Markov chains on product alphabets (the lifting theorem)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkovChainModel:
    """A (generally non-homogeneous) Markov chain on finite state spaces.

    ``transitions[m]`` maps step m to step m+1.  ``joint_functions``
    evaluates P_0(a_0 P_1(a_1 ... P_n(a_n))) by backward recursion, the
    nested form of the finite-dimensional joint expectations.
    """

    initial: np.ndarray
    transitions: tuple

    def __init__(self, initial, transitions):
        initial = probability_vector(initial, "chain initial distribution")
        transitions = tuple(stochastic_matrix(t, f"chain transition[{i}]") for i, t in enumerate(transitions))
        sizes = [len(initial)]
        for t in transitions:
            if t.shape[0] != sizes[-1]:
                raise ValueError("chain transition shapes do not chain")
            sizes.append(t.shape[1])
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transitions", transitions)

    def state_sizes(self) -> list:
        sizes = [len(self.initial)]
        for t in self.transitions:
            sizes.append(t.shape[1])
        return sizes

    def joint_functions(self, functions) -> float:
        """Backward evaluation of the nested joint expectation on per-site functions."""
        functions = [np.asarray(f, dtype=float) for f in functions]
        sizes = self.state_sizes()
        for m, f in enumerate(functions):
            if f.shape != (sizes[m],):
                raise ValueError(f"function at site {m} has shape {f.shape}, expected ({sizes[m]},)")
        v = functions[-1]
        for m in range(len(functions) - 2, -1, -1):
            v = functions[m] * (self.transitions[m] @ v)
        return float(self.initial @ v)

    def path_prob(self, path) -> float:
        path = list(path)
        p = self.initial[path[0]]
        for m in range(1, len(path)):
            p *= self.transitions[m - 1][path[m - 1], path[m]]
        return float(p)

    def joint_law(self, n: int, cap: int | None = None) -> JointLaw:
        sizes = self.state_sizes()[: n + 1]
        _check_table_size(sizes, cap)
        arr = self.initial
        for m in range(1, n + 1):
            arr = np.einsum("...h,hj->...hj", arr, self.transitions[m - 1])
        return JointLaw(arr)


@dataclass(frozen=True)
class LiftedMarkovChain:
    """Markov chain on product alphabets realizing a hidden Markov process.

    Site 0 carries (H_0, O_0); site m >= 1 carries (H_m, O_{m-1}).  The
    step-m transition is P_{H(m-1)} (x) B_{O(m-1)} and ignores the O
    component of the source state.
    """

    chain: MarkovChainModel
    hidden_sizes: tuple
    obs_sizes: tuple

    def joint_prob(self, hidden_path, obs_path) -> float:
        """Evaluate the lifted nested formula on point indicator functions.

        The site functions are g_0 (x) 1 at site 0, g_m (x) f_{m-1} at sites
        1..n, and 1 (x) f_n at site n+1; the result reproduces the hidden
        Markov process joint probability and is independent of the auxiliary
        O_0 distribution used to build the chain.
        """
        hidden_path = list(hidden_path)
        obs_path = list(obs_path)
        if len(hidden_path) != len(obs_path):
            raise ValueError("hidden and observation paths must have equal length")
        n = len(hidden_path) - 1
        if n + 2 > len(self.chain.state_sizes()):
            raise ValueError("lifted chain horizon too short for this path")
        funcs = []
        for m in range(n + 2):
            dh = self.hidden_sizes[m] if m <= n + 1 and m < len(self.hidden_sizes) else 1
            do = self.obs_sizes[0] if m == 0 else self.obs_sizes[m - 1]
            g = np.zeros(dh)
            if m <= n:
                g[hidden_path[m]] = 1.0
            else:
                g[:] = 1.0
            f = np.zeros(do)
            if m == 0:
                f[:] = 1.0
            else:
                f[obs_path[m - 1]] = 1.0
            funcs.append(np.kron(g, f))
        return self.chain.joint_functions(funcs)


def lift_to_markov(model: ClassicalHMM, p_O0, horizon: int | None = None) -> LiftedMarkovChain:
    """Lift a hidden Markov process to a Markov chain on product alphabets.

    ``p_O0`` is an arbitrary distribution over the step-0 observation
    alphabet; the evaluated joint expectations do not depend on it.
    """
    p_O0 = probability_vector(p_O0, "p_O0")
    hs, os_ = model.hidden_sizes(), model.obs_sizes()
    if len(p_O0) != os_[0]:
        raise ValueError(f"p_O0 has size {len(p_O0)}, expected {os_[0]}")
    n = model.horizon if horizon is None else horizon
    # extend one step beyond the evaluation horizon: site n+1 carries (H_{n+1}, O_n)
    hs = hs + [hs[-1]]
    transitions_ext = list(model.transitions) + [np.eye(hs[-1])[: hs[min(n, len(hs) - 1)]]]

    initial = np.kron(model.initial, p_O0)
    transitions = []
    for m in range(1, n + 2):
        dh_src = hs[m - 1]
        do_src = os_[0] if m == 1 else os_[m - 2]
        p_h = model.transitions[m - 1] if m - 1 < len(model.transitions) else np.eye(dh_src)
        b_o = model.emissions[m - 1]
        t = np.kron(p_h, b_o)  # (dh_src*dh_dst is wrong axis order) -- build explicitly below
        dh_dst, do_dst = p_h.shape[1], b_o.shape[1]
        t = np.zeros((dh_src * do_src, dh_dst * do_dst))
        for h in range(dh_src):
            row = np.kron(p_h[h], b_o[h])
            for o in range(do_src):
                t[h * do_src + o] = row
        transitions.append(t)
    chain = MarkovChainModel(initial, transitions)
    return LiftedMarkovChain(chain, tuple(hs), tuple(os_))


# ---------------------------------------------------------------------------
# backward and time-consecutive hidden processes
# ---------------------------------------------------------------------------

def backward_hmp_joint(initial, p_O0H0, obs_ops, hid_ops, hidden_path, obs_path) -> float:
    """Joint probability of a backward hidden Markov process.

    ``obs_ops[n]`` conditions O_{n+1} on H_n, ``hid_ops[n]`` conditions
    H_{n+1} on H_n; the step transition expectation factorizes as
    E(f (x) g)(h) = obs_op(h, .) f * hid_op(h, .) g.  Expanding the nested
    formula on point indicators gives

        p0(h_0) B(h_0, o_0) prod_{m>=1} obs_ops[m-1](h_{m-1}, o_m)
                                        hid_ops[m-1](h_{m-1}, h_m)
    """
    initial = probability_vector(initial, "initial")
    b0 = stochastic_matrix(p_O0H0, "P_O0H0")
    obs_ops = [stochastic_matrix(c, f"obs_op[{i}]") for i, c in enumerate(obs_ops)]
    hid_ops = [stochastic_matrix(a, f"hid_op[{i}]") for i, a in enumerate(hid_ops)]
    hidden_path = list(hidden_path)
    obs_path = list(obs_path)
    if len(hidden_path) != len(obs_path):
        raise ValueError("hidden and observation paths must have equal length")
    n = len(hidden_path) - 1
    if n > len(obs_ops) or n > len(hid_ops):
        raise ValueError("not enough step operators for this path length")
    p = initial[hidden_path[0]] * b0[hidden_path[0], obs_path[0]]
    for m in range(1, n + 1):
        p *= obs_ops[m - 1][hidden_path[m - 1], obs_path[m]]
        p *= hid_ops[m - 1][hidden_path[m - 1], hidden_path[m]]
    return float(p)


def backward_hmp_joint_law(initial, p_O0H0, obs_ops, hid_ops, n: int, cap: int | None = None) -> JointLaw:
    """Dense backward-HMP law over interleaved sites (H_0, O_0, ..., H_n, O_n)."""
    initial = probability_vector(initial, "initial")
    b0 = stochastic_matrix(p_O0H0, "P_O0H0")
    dh = len(initial)
    sizes = [dh, b0.shape[1]]
    for m in range(1, n + 1):
        sizes += [np.asarray(hid_ops[m - 1]).shape[1], np.asarray(obs_ops[m - 1]).shape[1]]
    _check_table_size(sizes, cap)
    arr = np.einsum("h,hk->hk", initial, b0)
    for m in range(1, n + 1):
        a = stochastic_matrix(hid_ops[m - 1], f"hid_op[{m - 1}]")
        c = stochastic_matrix(obs_ops[m - 1], f"obs_op[{m - 1}]")
        arr = np.einsum("...ho,hj,hk->...hojk", arr, a, c)
    return JointLaw(arr)


def time_consecutive_joint(hidden_law: JointLaw, emissions, hidden_path, obs_path) -> float:
    """Time-consecutive hidden process: O_m conditioned on H_{m-1}.

    ``hidden_law`` is an arbitrary joint law of the hidden process (not
    required to be Markov); ``emissions[m]`` conditions O_m on H_{m-1},
    with the convention H_{-1} := H_0 for m = 0.
    """
    emissions = [stochastic_matrix(e, f"emission[{i}]") for i, e in enumerate(emissions)]
    hidden_path = list(hidden_path)
    obs_path = list(obs_path)
    if len(hidden_path) != len(obs_path):
        raise ValueError("hidden and observation paths must have equal length")
    n = len(hidden_path) - 1
    if n + 1 > hidden_law.n_sites or n + 1 > len(emissions):
        raise ValueError("path longer than hidden law / emission horizon")
    p = hidden_law.marginal(range(n + 1))[tuple(hidden_path)] if n + 1 < hidden_law.n_sites \
        else hidden_law.prob(hidden_path)
    p = float(p)
    for m in range(n + 1):
        prev = hidden_path[0] if m == 0 else hidden_path[m - 1]
        p *= emissions[m][prev, obs_path[m]]
    return p


def time_consecutive_joint_law(hidden_law: JointLaw, emissions, cap: int | None = None) -> JointLaw:
    """Dense time-consecutive law over interleaved sites (H_0, O_0, ..., H_n, O_n)."""
    n = hidden_law.n_sites - 1
    emissions = [stochastic_matrix(e, f"emission[{i}]") for i, e in enumerate(emissions[: n + 1])]
    sizes = []
    for m in range(n + 1):
        sizes += [hidden_law.alphabet_sizes[m], emissions[m].shape[1]]
    _check_table_size(sizes, cap)
    arr = hidden_law.probs
    # interleave observation axes after each hidden axis, conditioning on the previous hidden axis
    out = arr
    for m in range(n, -1, -1):
        cond_axis = 0 if m == 0 else m - 1
        e = emissions[m]
        # multiply in an O_m axis placed right after hidden axis m
        out = np.moveaxis(
            np.expand_dims(out, axis=out.ndim) * e[(...,) + (np.newaxis,) * (out.ndim - 1 - cond_axis)].reshape(
                tuple(e.shape[0] if i == cond_axis else 1 for i in range(out.ndim)) + (e.shape[1],)
            ),
            out.ndim,
            m + 1,
        )
    return JointLaw(out)


# ---------------------------------------------------------------------------
# generalized hidden processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneralizedHiddenSpec:
    """Generalized hidden process: hidden law, index maps, general Markov operators.

    ``markov_ops[m]`` is a row-stochastic matrix of shape (dH, dO * dH)
    realizing a general Markov operator B-hat: L^inf(S_O) (x) L^inf(S_H) ->
    L^inf(S_H); column index is o * dH + h (observation-major).
    ``index_map[m]`` relocates the m-th factor onto hidden site
    index_map[m] (not necessarily one-to-one).
    """

    hidden_law: JointLaw
    index_map: tuple
    markov_ops: tuple

    def __init__(self, hidden_law: JointLaw, index_map, markov_ops):
        index_map = tuple(int(i) for i in index_map)
        n = len(index_map) - 1
        if n + 1 > hidden_law.n_sites:
            raise ValueError("index map longer than hidden law")
        for m, s in enumerate(index_map):
            if not 0 <= s <= n:
                raise ValueError(f"index_map[{m}] = {s} outside 0..{n}")
        ops = tuple(stochastic_matrix(b, f"markov_op[{i}]") for i, b in enumerate(markov_ops))
        if len(ops) != n + 1:
            raise ValueError("one Markov operator per step is required")
        sizes = hidden_law.alphabet_sizes
        for m, b in enumerate(ops):
            dh = sizes[index_map[m]]
            if b.shape[0] != dh or b.shape[1] % dh != 0:
                raise ValueError(f"markov_op[{m}] shape {b.shape} incompatible with hidden size {dh}")
        object.__setattr__(self, "hidden_law", hidden_law)
        object.__setattr__(self, "index_map", index_map)
        object.__setattr__(self, "markov_ops", ops)

    def obs_size(self, m: int) -> int:
        dh = self.hidden_law.alphabet_sizes[self.index_map[m]]
        return self.markov_ops[m].shape[1] // dh


def generalized_hidden_joint(spec: GeneralizedHiddenSpec, hidden_path, obs_path) -> float:
    """Evaluate P_H( prod_m j_{H_{map[m]}}( B-hat_m(f_m (x) g_m) ) ) on point indicators."""
    hidden_path = list(hidden_path)
    obs_path = list(obs_path)
    n = len(spec.index_map) - 1
    if len(hidden_path) != n + 1 or len(obs_path) != n + 1:
        raise ValueError(f"paths must have length {n + 1}")
    sizes = spec.hidden_law.alphabet_sizes
    # per-site accumulated functions of the hidden variable
    site_funcs = [np.ones(sizes[s]) for s in range(spec.hidden_law.n_sites)]
    for m in range(n + 1):
        s = spec.index_map[m]
        dh = sizes[s]
        col = obs_path[m] * dh + hidden_path[m]
        if not 0 <= col < spec.markov_ops[m].shape[1]:
            raise IndexError(f"path indices out of range at step {m}")
        site_funcs[s] = site_funcs[s] * spec.markov_ops[m][:, col]
    arr = spec.hidden_law.probs
    letters = "abcdefghijklmnopqrstuvwxyz"[: arr.ndim]
    operands = [arr] + site_funcs
    subscript = letters + "," + ",".join(letters[i] for i in range(arr.ndim)) + "->"
    return float(np.einsum(subscript, *operands))


# ---------------------------------------------------------------------------
# Markov factorization test (conditional-independence identity)
# ---------------------------------------------------------------------------

def markov_factorization_violation(law: JointLaw) -> float:
    """Max violation of the cross-multiplied Markov conditional-independence identity.

    For every step m and states (a, b, c):
    p(prefix sum, X_{m-1}=a, X_m=b, X_{m+1}=c) * p(X_{m-1}=a... reduces to the
    3-site identity p012(a,b,c) * p1(b) = p01(a,b) * p12(b,c) applied to the
    consecutive 3-site marginals of the law; 0 exactly iff the law is
    consistent with a (generally non-homogeneous) Markov chain.
    """
    worst = 0.0
    for m in range(law.n_sites - 2):
        p3 = law.marginal([m, m + 1, m + 2])
        p01 = p3.sum(axis=2)
        p12 = p3.sum(axis=0)
        p1 = p3.sum(axis=(0, 2))
        lhs = p3 * p1[None, :, None]
        rhs = p01[:, :, None] * p12[None, :, :]
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst

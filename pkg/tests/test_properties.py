import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import closed_loop_transfer
from qmem.builder import CONFIG1_CONNECTIONS, CONFIG2_CONNECTIONS, MemorySpec, make_cavity, qubit_config
from qmem.linear import dfs_decompose, passivity_residuals, to_state_space, transfer_function
from qmem.netdsl import format_network, parse
from qmem.slh import AdjacencyMap, AlgebraicLoopError, feedback_reduce, parallel_sum
from qmem.sim import propagate

rates = st.floats(0.05, 3.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(rates, min_size=4, max_size=4), st.sampled_from([CONFIG1_CONNECTIONS, CONFIG2_CONNECTIONS]))
def test_reduction_stays_passive(k, conns):
    model = parallel_sum([make_cavity(k[0], k[1], name="p"), make_cavity(k[2], k[3], name="c")])
    red = feedback_reduce(model, AdjacencyMap(conns))
    assert max(passivity_residuals(to_state_space(red)).values()) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.lists(rates, min_size=4, max_size=4),
       st.permutations(range(4)), st.integers(1, 3), st.floats(-2, 2))
def test_reduction_matches_oracle_for_random_wiring(k, perm, n_links, w):
    outs = perm[:n_links]
    ins = sorted(set(range(4)) - set(outs))[:n_links]
    conns = tuple(zip(outs, ins))
    model = parallel_sum([make_cavity(k[0], k[1], name="p"), make_cavity(k[2], k[3], name="c")])
    try:
        red = feedback_reduce(model, AdjacencyMap(conns))
    except AlgebraicLoopError:
        return
    s = 0.3 + 1j * w
    S = np.eye(4, dtype=complex)
    K = np.zeros((4, 2), dtype=complex)
    K[0, 0], K[1, 0], K[2, 1], K[3, 1] = np.sqrt(k)
    ref = closed_loop_transfer(S, K, np.zeros((2, 2)), conns, s)
    np.testing.assert_allclose(transfer_function(to_state_space(red), s), ref, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0))
def test_storage_always_has_one_dfs_mode(gamma):
    dec = dfs_decompose(to_state_space(qubit_config(MemorySpec(gamma=gamma), 2)))
    assert dec.dfs_indices == [1]


@settings(max_examples=25, deadline=None)
@given(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
       st.sampled_from([0.05, 0.1, 0.25]))
def test_free_evolution_energy_balance(c1, c2, dt):
    ss = to_state_space(qubit_config(MemorySpec(), 1))
    traj = propagate(ss, [], [c1, c2], (0.0, 4.0), dt)
    assert abs(traj.energy_residual()) < 1e-10 * max(1.0, abs(c1) ** 2 + abs(c2) ** 2)


names = st.from_regex(r"[a-z][a-z0-9_]{0,5}", fullmatch=True).filter(
    lambda s: s not in {"param", "cavity", "couplings", "connect", "input", "output", "sqrt"})


@st.composite
def expressions(draw, depth=0):
    if depth > 2 or draw(st.booleans()):
        return repr(draw(st.floats(0.01, 100, allow_nan=False)))
    op = draw(st.sampled_from(["+", "-", "*", "/"]))
    left, right = draw(expressions(depth + 1)), draw(expressions(depth + 1))
    form = draw(st.sampled_from(["{} {} {}", "({} {} {})", "sqrt({}) {} {}"]))
    return form.format(left, op, right)


@settings(max_examples=60, deadline=None)
@given(names, expressions())
def test_format_parse_roundtrip(name, expr):
    desc = parse(f"param {name} = {expr}\n")
    assert parse(format_network(desc)) == desc

import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import ROOT
from pclbench.protocol import (
    New, ProtocolError, Receive, Send, SignAct, VerifyAct, basic_sequences, format_action,
    format_protocol, parse_protocol, permute_basic_sequences,
)
from pclbench.repro import fixture, fixture_text
from pclbench.syntax import DSLSemanticError, DSLSyntaxError

FIXTURES = ["cr", "dh_min", "hash3", "hash_typical", "perm", "q_prime", "sec_shared"]


def test_cr_roles(cr):
    init = cr.role("Init")
    assert [type(a) for a in init.actions] == [New, Send, Receive, VerifyAct, SignAct, Send]
    assert [format_action(a) for a in init.actions[:3]] == [
        "new m:nonce", "send X,Y,m", "receive Y,X,y,s"]
    resp = cr.role("Resp")
    assert resp.self_param.name == "Y"
    assert format_action(resp.actions[0]) == "receive X,Y,x"
    assert [type(a) for a in resp.actions] == [Receive, New, SignAct, Send, Receive, VerifyAct]


def test_empty_file_is_a_syntax_error_at_origin():
    with pytest.raises(DSLSyntaxError) as e:
        parse_protocol("")
    assert (e.value.line, e.value.col) == (1, 1)


def test_unbound_variable_is_named():
    with pytest.raises(DSLSemanticError) as e:
        parse_protocol("protocol P\nrole R(X, Y) {\n  send X, x;\n}\n")
    assert "x" in e.value.message
    assert e.value.line == 3


def test_bad_token_position():
    with pytest.raises(DSLSyntaxError) as e:
        parse_protocol("protocol P\nrole R(X, Y) {\n  send X Y;\n}\n")
    assert e.value.line == 3


@pytest.mark.parametrize("name", FIXTURES)
def test_round_trip(name):
    p = fixture(name)
    assert parse_protocol(format_protocol(p)) == p


@pytest.mark.parametrize("name", FIXTURES)
def test_packaged_fixtures_match_repository_copies(name):
    with open(os.path.join(ROOT, "fixtures", f"{name}.pcl")) as f:
        assert f.read() == fixture_text(name)


def test_cr_basic_sequences(cr):
    seqs = basic_sequences(cr, "Init")
    assert [bs.label for bs in seqs] == ["BS1", "BS2"]
    assert [format_action(a) for a in seqs[0].actions] == ["new m:nonce", "send X,Y,m"]
    assert [bs.label for bs in basic_sequences(cr)] == ["BS1", "BS2", "BS3", "BS4"]


def test_no_receive_means_one_sequence():
    p = parse_protocol("protocol P\nrole R(X, Y) {\n  new n:nonce;\n  send X, n;\n}\n")
    assert len(basic_sequences(p)) == 1


def test_q_prime_first_sequence():
    seqs = basic_sequences(fixture("q_prime"), "Rho")
    assert len(seqs) == 2
    assert [format_action(a) for a in seqs[0].actions] == ["receive enc{m}k(X,Y)", "send X,Y,m"]


def _check_decomposition(p):
    for role in p.roles:
        seqs = basic_sequences(role)
        body = tuple(a for bs in seqs for a in bs.actions)
        assert body == role.actions
        for bs in seqs:
            assert bs.start == 0 or isinstance(bs.actions[0], Receive)
            assert not any(isinstance(a, Receive) for a in bs.actions[1:])


@pytest.mark.parametrize("name", FIXTURES)
def test_decomposition_invariants(name):
    _check_decomposition(fixture(name))


def test_permutation_reverses_blocks():
    p1 = fixture("perm")
    p2 = permute_basic_sequences(p1, "Chain", (3, 2, 1))
    s1 = basic_sequences(p1, "Chain")
    s2 = basic_sequences(p2, "Chain")
    assert [bs.actions for bs in s2] == [bs.actions for bs in reversed(s1)]


def test_identity_permutation():
    p = fixture("perm")
    assert permute_basic_sequences(p, "Chain", (1, 2, 3)) == p


def test_permutation_that_unbinds_is_rejected(cr):
    # Init's second block uses m, generated in the first
    with pytest.raises(ProtocolError):
        permute_basic_sequences(cr, "Init", (2, 1))
    with pytest.raises(ProtocolError):
        permute_basic_sequences(cr, "Init", (1, 1))


# random roles: receives of fresh nonces, news, and sends of bound nonces
_STEP = st.sampled_from(["new", "send", "recv"])


def _role_text(steps):
    lines, bound, n = [], [], 0
    for s in steps:
        if s == "send" and bound:
            lines.append(f"  send X, Y, {bound[-1]};")
        elif s == "recv":
            n += 1
            lines.append(f"  receive Y, X, v{n}:nonce;")
            bound.append(f"v{n}")
        else:
            n += 1
            lines.append(f"  new v{n}:nonce;")
            bound.append(f"v{n}")
    return "protocol P\nsetup {\n  honest A B;\n}\nrole R(X, Y) {\n" + "\n".join(lines) + "\n}\n"


@given(st.lists(_STEP, min_size=1, max_size=12))
def test_random_roles_decompose_and_round_trip(steps):
    p = parse_protocol(_role_text(steps))
    _check_decomposition(p)
    assert parse_protocol(format_protocol(p)) == p
    n_recv = sum(isinstance(a, Receive) for a in p.roles[0].actions[1:])
    assert len(basic_sequences(p)) == n_recv + 1

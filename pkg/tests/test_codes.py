import json

import pytest

from statqec import gf2
from statqec.codes import (
    CssCode,
    build_repetition_code,
    build_toric_code,
    code_from_json,
    code_to_json,
    compute_distance_bruteforce,
    validate_css,
)
from statqec.errors import UnsupportedSize, ValidationError


def test_repetition_code_structure():
    code = build_repetition_code(5)
    params = validate_css(code)
    assert params.n == 5 and params.k == 1 and params.w == 2
    assert code.z_checks == ((0, 1), (1, 2), (2, 3), (3, 4), (0, 4))
    assert code.x_checks == ()
    assert code.logical_z == ((0,),)
    assert code.logical_x == ((0, 1, 2, 3, 4),)


def test_repetition_length_two_dedupes_checks():
    code = build_repetition_code(2)
    assert code.z_checks == ((0, 1),)
    assert validate_css(code).k == 1


def test_repetition_distance():
    assert compute_distance_bruteforce(build_repetition_code(5)) == 5
    assert compute_distance_bruteforce(build_repetition_code(3)) == 3


@pytest.mark.parametrize("L", [2, 3])
def test_toric_code_structure(L):
    code = build_toric_code(L)
    params = validate_css(code)
    assert params.n == 2 * L * L
    assert params.k == 2
    assert params.w == 4
    assert len(code.z_checks) == L * L  # redundant generator kept
    assert gf2.rank(code.z_check_masks) == L * L - 1
    assert gf2.rank(code.x_check_masks) == L * L - 1
    # product of all plaquettes is the identity
    total = 0
    for m in code.z_check_masks:
        total ^= m
    assert total == 0


@pytest.mark.parametrize("L,expected", [(2, 2), (3, 3)])
def test_toric_distance(L, expected):
    assert compute_distance_bruteforce(build_toric_code(L)) == expected


def test_distance_cap():
    with pytest.raises(UnsupportedSize):
        compute_distance_bruteforce(build_toric_code(4))


def test_validate_rejects_anticommuting_pair():
    code = build_toric_code(2)
    bad = CssCode(
        n_qubits=code.n_qubits,
        z_checks=code.z_checks,
        x_checks=((0, 1, 2),) + code.x_checks[1:],
        logical_z=code.logical_z,
        logical_x=code.logical_x,
    )
    with pytest.raises(ValidationError):
        validate_css(bad)


def test_validate_rejects_unsorted_support():
    bad = CssCode(5, ((1, 0),), (), ((0,),), ((0, 1, 2, 3, 4),))
    with pytest.raises(ValidationError):
        validate_css(bad)


def test_validate_rejects_dependent_logical():
    code = build_repetition_code(4)
    bad = CssCode(
        n_qubits=4,
        z_checks=code.z_checks,
        x_checks=(),
        logical_z=((0, 1),),  # equals the first z check: dependent and wrongly paired
        logical_x=code.logical_x,
    )
    with pytest.raises(ValidationError):
        validate_css(bad)


def test_json_roundtrip():
    code = build_toric_code(2)
    text = code_to_json(code)
    payload = json.loads(text)
    assert set(payload) == {"n", "z_checks", "x_checks", "logical_z", "logical_x"}
    assert code_from_json(text) == code


def test_json_rejects_garbage():
    with pytest.raises(ValidationError):
        code_from_json('{"n": 3}')
    with pytest.raises(ValidationError):
        code_from_json(json.dumps({
            "n": 2, "z_checks": [[0, 1]], "x_checks": [],
            "logical_z": [[0, 1]], "logical_x": [[0]],
        }))

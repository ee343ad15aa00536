import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minisph.variables import (INDEX, INDEX_DTYPE, SCALAR, VECTOR,
                               PermutationError, RegistrationError,
                               VariableRegistry, kernel_view)


def test_registry_auto_registers_identity_ids():
    reg = VariableRegistry(5, 2)
    assert np.array_equal(reg.view("id"), np.arange(5, dtype=INDEX_DTYPE))
    assert reg.view("id").dtype == INDEX_DTYPE


def test_register_shapes_and_dtypes():
    reg = VariableRegistry(4, 3, dtype=np.float32)
    assert reg.register_discrete("rho", SCALAR).data.shape == (4,)
    assert reg.register_discrete("x", VECTOR).data.shape == (4, 3)
    assert reg.register_discrete("flag", INDEX).data.dtype == INDEX_DTYPE
    assert reg.view("rho").dtype == np.float32
    with pytest.raises(ValueError):
        reg.register_discrete("bad", "tensor")


def test_duplicate_registration_rejected():
    reg = VariableRegistry(3, 2)
    reg.register_discrete("rho", SCALAR)
    with pytest.raises(RegistrationError):
        reg.register_discrete("rho", SCALAR)
    reg.register_singular("c0", 10.0)
    with pytest.raises(RegistrationError):
        reg.register_singular("c0", 20.0)


def test_singular_values_cast_to_run_precision():
    reg = VariableRegistry(1, 2, dtype=np.float32)
    reg.register_singular("c0", 10.0)
    reg.register_singular("g", (0.0, -9.81))
    assert reg.singular("c0").dtype == np.float32
    assert reg.singular("g").dtype == np.float32


def test_kernel_view_is_the_underlying_storage():
    reg = VariableRegistry(3, 2)
    var = reg.register_discrete("rho", SCALAR)
    view = kernel_view(var)
    view[1] = 7.0
    assert var.data[1] == 7.0
    assert view is var.data


def test_invalid_construction():
    with pytest.raises(ValueError):
        VariableRegistry(-1, 2)
    with pytest.raises(ValueError):
        VariableRegistry(3, 4)


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(8))))
def test_permutation_preserves_multiset_and_id_recovery(perm):
    reg = VariableRegistry(8, 2)
    rho = reg.register_discrete("rho", SCALAR).data
    rho[:] = np.arange(8, dtype=float) * 1.5
    x = reg.register_discrete("x", VECTOR).data
    x[:] = np.arange(16, dtype=float).reshape(8, 2)
    perm = np.asarray(perm)
    reg.apply_permutation(perm)
    assert sorted(reg.view("rho")) == sorted(np.arange(8) * 1.5)
    # undo by sorting on the carried original ids
    reg.apply_permutation(np.argsort(reg.view("id"), kind="stable"))
    assert np.array_equal(reg.view("rho"), np.arange(8) * 1.5)
    assert np.array_equal(reg.view("x"), np.arange(16.0).reshape(8, 2))
    assert np.array_equal(reg.view("id"), np.arange(8, dtype=INDEX_DTYPE))


def test_bad_permutations_rejected():
    reg = VariableRegistry(4, 2)
    with pytest.raises(PermutationError):
        reg.apply_permutation([0, 1, 2])          # wrong length
    with pytest.raises(PermutationError):
        reg.apply_permutation([0, 1, 1, 2])       # not a bijection
    with pytest.raises(PermutationError):
        reg.apply_permutation([0, 1, 2, 4])       # out of range


def test_exempt_names_stay_in_place():
    reg = VariableRegistry(3, 2)
    rho = reg.register_discrete("rho", SCALAR).data
    rho[:] = [1.0, 2.0, 3.0]
    keys = reg.register_discrete("keys", SCALAR).data
    keys[:] = [9.0, 8.0, 7.0]
    reg.apply_permutation([2, 0, 1], exempt_names=("keys",))
    assert np.array_equal(reg.view("rho"), [3.0, 1.0, 2.0])
    assert np.array_equal(reg.view("keys"), [9.0, 8.0, 7.0])

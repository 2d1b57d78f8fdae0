import os
import subprocess
import sys

import numpy as np
import pytest

from effhyp import _kernels, freqlab as fl, models, reduction as rd


def test_newton_compiled_and_interpreted_agree(rng):
    a2 = rng.uniform(1.0, 2.0, 500)
    b3 = rng.uniform(-1.0, 1.0, 500)
    t = rng.uniform(0, 0.1, 500) * a2 ** 1.5 / np.abs(b3)
    py = _kernels.newton_smooth_root(t, a2, b3, compiled=False)
    jit = _kernels.newton_smooth_root(t, a2, b3, compiled=True)
    assert py[2].all() and jit[2].all()
    assert np.allclose(py[0], jit[0], rtol=1e-14, atol=0)
    assert np.array_equal(py[1], jit[1])


def test_dp5_compiled_and_interpreted_agree():
    r = rd.reduced_from_dict(models.get("demo-scaled"))
    xi = 32.0
    s = float(np.sqrt(1 + xi ** 2))

    def balanced(tt):
        k0, k1, k2 = fl.companion_coeffs(r, tt, xi)
        return np.stack([k0 / s ** 2, k1 / s, k2])
    kc = fl._poly_fit(r.domain.T, balanced)
    assert kc is not None
    out = [_kernels.integrate_balanced(kc, s, np.eye(3), 0.0, r.domain.T, compiled=c) for c in (False, True)]
    (Ya, supa, na, sta), (Yb, supb, nb, stb) = out
    assert sta == stb == 0 and na == nb
    assert np.allclose(Ya, Yb, rtol=1e-12, atol=1e-14)
    assert np.allclose(supa, supb, rtol=1e-12)


def test_disable_switch():
    code = "from effhyp import _kernels; print(_kernels.HAVE_NUMBA, _kernels.DISABLED)"
    env = dict(os.environ, EFFHYP_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]


def test_models_registry():
    assert {"demo", "demo-scaled", "hyperbolic", "contrast", "factorizable"} <= set(models.names())
    a = models.get("demo")
    a["a2"] = "changed"
    assert models.get("demo")["a2"] != "changed"
    with pytest.raises(KeyError, match="known"):
        models.get("nope")

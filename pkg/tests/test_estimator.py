import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rfauth.estimator import OpenSetAuthorizer, check_frames
from rfauth.simulate import generate_corpus

TINY = dict(block_filters=(4, 4), feature_dim=16, hidden_width=8, epochs=1, batch_size=32)


@pytest.fixture(scope="module")
def data():
    c = generate_corpus(5, (30, 30), 20.0, seed=6)
    X = np.concatenate([c.samples[t] for t in range(5)])
    y = np.repeat(np.arange(5), 30)
    return X, y


def test_get_params_and_clone():
    est = OpenSetAuthorizer(arch="dclass", authorized=(1, 2), epochs=3)
    params = est.get_params()
    assert params["arch"] == "dclass" and params["epochs"] == 3 and params["authorized"] == (1, 2)
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(epochs=5)
    assert est.epochs == 5


def test_not_fitted():
    with pytest.raises(NotFittedError):
        OpenSetAuthorizer().predict(np.ones((2, 256), complex))


def test_check_frames_layouts():
    z = np.arange(512, dtype=float).reshape(1, 256, 2)
    a = check_frames(z)
    b = check_frames(np.transpose(z, (0, 2, 1)))
    np.testing.assert_array_equal(a, b)
    assert a[0, 1] == 2 + 3j
    for bad in (np.ones((2, 100), complex), np.ones((0, 256), complex), np.full((1, 256), np.nan + 0j)):
        with pytest.raises(ValueError):
            check_frames(bad)


@pytest.mark.parametrize("arch", ["disc", "dclass", "ova"])
def test_fit_predict_shapes(data, arch):
    X, y = data
    est = OpenSetAuthorizer(arch=arch, authorized=(0, 1, 2), random_state=1, **TINY).fit(X[y != 4], y[y != 4])
    pred = est.predict(X)
    assert pred.shape == (len(X),)
    allowed = {-1, 0} if arch == "disc" else {-1, 0, 1, 2}
    assert set(pred.tolist()) <= allowed
    width = {"disc": 1, "dclass": 4, "ova": 3}[arch]
    assert est.predict_proba(X).shape == (len(X), width)
    s = est.decision_function(X)
    assert s.shape == (len(X),) and np.all((s >= 0) & (s <= 1))
    assert 0.0 <= est.score(X, y) <= 1.0
    assert (est.threshold_ is None) == (arch == "dclass")
    assert est.n_params_ > 0 and len(est.history_) == 1


def test_authorized_inferred_from_outlier_label(data):
    X, y = data
    y = np.where(y >= 3, -1, y)
    est = OpenSetAuthorizer(arch="ova", random_state=0, **TINY).fit(X, y)
    assert est.classes_.tolist() == [0, 1, 2]


def test_fit_is_deterministic(data):
    X, y = data
    a = OpenSetAuthorizer(arch="ova", authorized=(0, 1), random_state=3, **TINY).fit(X, y)
    b = OpenSetAuthorizer(arch="ova", authorized=(0, 1), random_state=3, **TINY).fit(X, y)
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))


def test_fit_rejects_bad_input(data):
    X, y = data
    with pytest.raises(ValueError):
        OpenSetAuthorizer(**TINY).fit(X, y[:-1])
    with pytest.raises(ValueError):
        OpenSetAuthorizer(arch="ova", **TINY).fit(X, np.full(len(X), -1))


def test_disc_cannot_classify(data):
    est = OpenSetAuthorizer(arch="disc")
    with pytest.raises(ValueError):
        est.classify(np.zeros((2, 1)))

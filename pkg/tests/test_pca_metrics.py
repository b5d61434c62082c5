import numpy as np
import pytest

from oppmodel.numerics import accuracy, confusion_matrix, pca_fit, pca_project, per_class_recall


def test_line_gives_analytic_component():
    t = np.linspace(-3, 3, 50)
    model = pca_fit(np.column_stack([t, 2 * t]), 1)
    np.testing.assert_allclose(np.abs(model.components[0]), np.array([1, 2]) / np.sqrt(5), atol=1e-12)


def test_isotropic_and_orthonormal():
    X = np.random.default_rng(0).normal(size=(200_000, 3))
    model = pca_fit(X, 3)
    np.testing.assert_allclose(model.explained_variance, 1.0, atol=0.02)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(3), atol=1e-8)
    assert np.all(np.diff(model.explained_variance) <= 0)


def test_project_mean_is_origin_and_variance_bound():
    X = np.random.default_rng(1).normal(size=(100, 6)) @ np.diag([5, 4, 3, 2, 1, 0.5])
    model = pca_fit(X, 3)
    np.testing.assert_allclose(pca_project(model, model.mean[None, :]), 0, atol=1e-12)
    assert model.explained_variance.sum() <= X.var(axis=0, ddof=1).sum() + 1e-9
    Y = pca_project(model, X)
    np.testing.assert_allclose(Y.var(axis=0, ddof=1), model.explained_variance, rtol=1e-9)


@pytest.mark.parametrize("k", [0, 4])
def test_bad_k(k):
    with pytest.raises(ValueError):
        pca_fit(np.zeros((5, 3)), k)


def test_confusion_identities():
    labels = np.array([0, 1, 2, 3, 3, 1])
    cm = confusion_matrix(labels, labels, 4)
    assert np.array_equal(cm, np.diag([1, 2, 1, 2])) and accuracy(cm) == 1.0
    cm = confusion_matrix(np.zeros(6, int), labels, 4)
    assert np.count_nonzero(cm.sum(axis=0)) == 1
    np.testing.assert_array_equal(cm.sum(axis=1), np.bincount(labels, minlength=4))
    np.testing.assert_allclose(per_class_recall(cm), [1, 0, 0, 0])


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0], 4)
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0, 4], 4)

"""Shared fixtures: small graphs, kernels and on-disk sample files."""

import numpy as np
import pytest

from tokenwalk import (build_mhrw, erdos_renyi, make_synthetic_dataset_text,
                       serialize_edge_list, uniform_target)


@pytest.fixture(scope="session")
def er8_kernel():
    """The 8-node random-graph kernel used by the Monte-Carlo properties."""
    g = erdos_renyi(8, 0.35, seed=0)
    return build_mhrw(g, uniform_target(g.n))


@pytest.fixture(scope="session")
def dataset_text():
    return make_synthetic_dataset_text()


@pytest.fixture(scope="session")
def dataset_file(tmp_path_factory, dataset_text):
    path = tmp_path_factory.mktemp("data") / "sample.libsvm"
    path.write_text(dataset_text)
    return path


@pytest.fixture()
def graph_file(tmp_path):
    """Factory writing a Graph to an edge-list file, returning its path."""

    def write(g, name="graph.txt"):
        path = tmp_path / name
        path.write_text(serialize_edge_list(g))
        return path

    return write


def fd_gradient(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out


def fd_jacobian(f, x, h=1e-6):
    """Central finite-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * h))
    return np.stack(cols, axis=1)

"""Shared fixtures: small graphs and materialized dataset directories."""

import pytest

from gradflow.datagen import connected_sbm, ensure_standins, standin_graph


@pytest.fixture(scope="session")
def small_graph():
    """A 20-node connected, non-bipartite block-model graph."""
    return connected_sbm(seed=3)


@pytest.fixture(scope="session")
def cora_graph():
    """The citation-scale synthetic dataset, built in memory once."""
    return standin_graph("cora")


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    """All four bundled datasets written out as text files."""
    root = tmp_path_factory.mktemp("datasets")
    ensure_standins(root)
    return root

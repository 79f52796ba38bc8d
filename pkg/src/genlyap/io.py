"""MatrixMarket files and the plain-text directory manifest for systems."""

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sps

from .core import BilinearSystem

MANIFEST = "system.txt"


def write_matrix(path, M, comment=""):
    """Write M in MatrixMarket format: coordinate for sparse, array for dense."""
    path = Path(path)
    if not sps.issparse(M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
    scipy.io.mmwrite(path, M, comment=comment, precision=17)
    return path


def read_matrix(path):
    """Read a MatrixMarket file; coordinate files come back as CSR, array files as ndarray."""
    M = scipy.io.mmread(path)
    return M.tocsr() if sps.issparse(M) else np.asarray(M)


def _write_block_set(directory, blocks, header):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"# {header}"] if header else []
    for key, M in blocks:
        name = f"{key}.mtx"
        write_matrix(directory / name, M)
        lines.append(f"{key} {name}")
    (directory / MANIFEST).write_text("\n".join(lines) + "\n")
    return directory / MANIFEST


def write_system(sys, directory, header=""):
    """Serialize ``sys`` as ``A.mtx``, ``N1.mtx``.., ``B.mtx``, ``C.mtx`` plus a manifest.

    The manifest has one ``key filename`` pair per line, a ``symmetric``
    line, and ``#`` comment lines (the optional ``header`` goes first).
    """
    blocks = [("A", sys.A)]
    blocks += [(f"N{i + 1}", N) for i, N in enumerate(sys.N_list)]
    blocks.append(("B", sys.B))
    if sys.C is not None:
        blocks.append(("C", sys.C))
    path = _write_block_set(directory, blocks, header)
    with open(path, "a") as fh:
        fh.write(f"symmetric {int(bool(sys.symmetric))}\n")
    return path


def read_manifest(directory):
    entries = {}
    for line in (Path(directory) / MANIFEST).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(" ")
        entries[key] = value.strip()
    return entries


def read_system(directory):
    """Inverse of :func:`write_system`."""
    directory = Path(directory)
    entries = read_manifest(directory)
    if "A" not in entries or "B" not in entries:
        raise ValueError(f"manifest in {directory} lacks A or B")
    load = lambda key: read_matrix(directory / entries[key])  # noqa: E731
    N_keys = sorted((k for k in entries if k[:1] == "N" and k[1:].isdigit()), key=lambda k: int(k[1:]))
    C = load("C") if "C" in entries else None
    return BilinearSystem(
        load("A"),
        tuple(load(k) for k in N_keys),
        load("B"),
        C,
        symmetric=entries.get("symmetric", "0") == "1",
    )


def write_reduced_model(model, directory, header=""):
    """Write a reduced model (A, N_i, B, C) with the same manifest layout."""
    blocks = [("A", model.A)] + [(f"N{i + 1}", N) for i, N in enumerate(model.N_list)]
    blocks += [("B", model.B), ("C", model.C)]
    return _write_block_set(directory, blocks, header)

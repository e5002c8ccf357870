"""JSON documents for games and strategies, and atomic artifact writing.

Complex matrices are stored as {"re": rows, "im": rows}. Python's float repr
is the shortest string that parses back to the same double, so documents
round-trip bit-exactly.
"""
from __future__ import annotations

import hashlib
import json
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import qmat
from .game import FinitelyCorrelatedStrategy, PreparationGame
from .qmat import DensityMatrix

SCHEMA = "prepgame-game/1"
STRATEGY_SCHEMA = "prepgame-strategy/1"


class DocumentError(ValueError):
    """Malformed document; ``where`` names the offending field or line."""

    def __init__(self, where: str, msg: str):
        self.where = where
        super().__init__(f"{where}: {msg}")


# ---------------------------------------------------------------------------
# matrices

def matrix_to_json(m) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(obj, where: str, shape=None) -> np.ndarray:
    if not isinstance(obj, dict) or "re" not in obj:
        raise DocumentError(where, "expected an object with 're' (and optionally 'im') arrays")
    try:
        re = np.array(obj["re"], dtype=float)
        im = np.array(obj.get("im", np.zeros_like(re)), dtype=float)
    except (TypeError, ValueError) as e:
        raise DocumentError(where, f"non-numeric matrix entries ({e})") from None
    if re.shape != im.shape or re.ndim != 2:
        raise DocumentError(where, f"'re' {re.shape} and 'im' {im.shape} must be matching 2-d arrays")
    if shape is not None and re.shape != tuple(shape):
        raise DocumentError(where, f"shape {re.shape}, expected {tuple(shape)}")
    if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
        raise DocumentError(where, "non-finite entry")
    return re + 1j * im


# ---------------------------------------------------------------------------
# games

def game_to_dict(g: PreparationGame, provenance: dict | None = None) -> dict:
    doc = {
        "schema": SCHEMA,
        "dims": list(g.dims),
        "configs": [list(c) for c in g.configs],
        "povms": [
            {s: {o: matrix_to_json(e) for o, e in rnd[s].items()} for s in g.configs[k] if s in rnd}
            for k, rnd in enumerate(g.povms)
        ],
        "score": {s: float(v) for s, v in g.score.items()},
    }
    if provenance:
        doc["provenance"] = provenance
    return doc


def _need(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise DocumentError(f"{where}.{key}" if where else key, "missing field")
    val = doc[key]
    if not isinstance(val, kind):
        raise DocumentError(f"{where}.{key}" if where else key, f"expected {getattr(kind, '__name__', kind)}")
    return val


def game_from_dict(doc) -> PreparationGame:
    if not isinstance(doc, dict):
        raise DocumentError("<root>", "expected a JSON object")
    schema = doc.get("schema")
    if schema != SCHEMA:
        raise DocumentError("schema", f"expected {SCHEMA!r}, found {schema!r}")
    dims = _need(doc, "dims", list, "")
    if not dims or not all(isinstance(d, int) and d >= 1 for d in dims):
        raise DocumentError("dims", "expected a list of positive integers")
    d = int(np.prod(dims))
    configs = _need(doc, "configs", list, "")
    for k, c in enumerate(configs):
        if not isinstance(c, list) or not all(isinstance(s, str) for s in c):
            raise DocumentError(f"configs[{k}]", "expected a list of string labels")
    povms_doc = _need(doc, "povms", list, "")
    povms = []
    for k, rnd in enumerate(povms_doc):
        if not isinstance(rnd, dict):
            raise DocumentError(f"povms[{k}]", "expected an object keyed by configuration")
        out = {}
        for s, items in rnd.items():
            if not isinstance(items, dict):
                raise DocumentError(f"povms[{k}][{s!r}]", "expected an object keyed by outcome")
            out[s] = {o: matrix_from_json(e, f"povms[{k}][{s!r}][{o!r}]", (d, d)) for o, e in items.items()}
        povms.append(out)
    score = _need(doc, "score", dict, "")
    for s, v in score.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise DocumentError(f"score[{s!r}]", "expected a number")
    return PreparationGame(dims, configs, povms, score)


def _load_json(path) -> object:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentError(f"{path}:{e.lineno}:{e.colno}", e.msg) from None


def load_game(path) -> PreparationGame:
    return game_from_dict(_load_json(path))


def dumps_game(g: PreparationGame, provenance: dict | None = None) -> str:
    return json.dumps(game_to_dict(g, provenance), indent=1)


def save_game(path, g: PreparationGame, provenance: dict | None = None) -> None:
    write_atomic(path, dumps_game(g, provenance))


def games_equal(a: PreparationGame, b: PreparationGame) -> bool:
    """Bit-exact equality of every field."""
    if a.dims != b.dims or a.configs != b.configs or a.score != b.score or a.n != b.n:
        return False
    for ra, rb in zip(a.povms, b.povms):
        if ra.keys() != rb.keys():
            return False
        for s in ra:
            if ra[s].keys() != rb[s].keys():
                return False
            if any(not np.array_equal(ra[s][o], rb[s][o]) for o in ra[s]):
                return False
    return True


# ---------------------------------------------------------------------------
# strategies

def state_from_json(obj, dims, where: str) -> DensityMatrix:
    """A named state ("phi", "psi-theta(0.7)", ...) or a matrix object."""
    if isinstance(obj, str):
        try:
            rho = qmat.named_state(obj)
        except (KeyError, ValueError) as e:
            raise DocumentError(where, str(e)) from None
        return rho
    d = int(np.prod(dims))
    m = matrix_from_json(obj, where, (d, d))
    try:
        return DensityMatrix(tuple(dims), m)
    except ValueError as e:
        raise DocumentError(where, str(e)) from None


def strategy_from_dict(doc, dims):
    """Iid, FinCorr or Adaptive simulation strategy from a strategy document."""
    from .sim import Adaptive, FinCorr, Iid, build_interaction_strategy

    if not isinstance(doc, dict):
        raise DocumentError("<root>", "expected a JSON object")
    kind = doc.get("type")
    if kind == "iid":
        return Iid(state_from_json(doc.get("state"), dims, "state"))
    if kind == "fincorr":
        if "interaction" in doc:
            spec = doc["interaction"]
            target = state_from_json(spec.get("target", "psi-theta(0.7853981633974483)"), dims, "interaction.target")
            st = build_interaction_strategy(int(spec.get("d_A", 10)), float(spec.get("tau", 0.1)), target)
        else:
            D = _need(doc, "env_dim", int, "")
            kraus = _need(doc, "kraus", list, "")
            K = np.array([matrix_from_json(k, f"kraus[{i}]") for i, k in enumerate(kraus)])
            st = FinitelyCorrelatedStrategy(K, D, dims)
        env = None
        if "env" in doc:
            env = matrix_from_json(doc["env"], "env", (st.env_dim, st.env_dim))
        return FinCorr(st, env)
    if kind == "adaptive":
        table = {}
        for i, row in enumerate(_need(doc, "table", list, "")):
            where = f"table[{i}]"
            if not isinstance(row, dict) or "round" not in row or "config" not in row:
                raise DocumentError(where, "expected {round, config, state}")
            table[(int(row["round"]) - 1, row["config"])] = state_from_json(row.get("state"), dims, f"{where}.state")
        default = state_from_json(doc["default"], dims, "default") if "default" in doc else None
        return Adaptive(table, default)
    raise DocumentError("type", f"expected 'iid', 'fincorr' or 'adaptive', found {kind!r}")


def load_strategy(path, dims):
    return strategy_from_dict(_load_json(path), dims)


# ---------------------------------------------------------------------------
# artifacts

def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import clarabel
    import scipy

    from . import __version__

    return {
        "prepgame": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "clarabel": getattr(clarabel, "__version__", "unknown"),
    }


def provenance(command: str, argv, inputs=(), seeds=None, tolerances=None) -> dict:
    h = hashlib.sha256(json.dumps(list(argv)).encode())
    digests = {}
    for p in inputs:
        if p is not None and Path(p).exists():
            digests[str(p)] = file_digest(p)
            h.update(digests[str(p)].encode())
    return {
        "command": command,
        "argv": list(argv),
        "inputs_digest": h.hexdigest(),
        "inputs": digests,
        "seeds": seeds or {},
        "tolerances": tolerances or {},
        "versions": versions(),
        "platform": sys.platform,
    }


__all__ = [
    "DocumentError",
    "SCHEMA",
    "dumps_game",
    "game_from_dict",
    "game_to_dict",
    "games_equal",
    "load_game",
    "load_strategy",
    "matrix_from_json",
    "matrix_to_json",
    "provenance",
    "save_game",
    "state_from_json",
    "strategy_from_dict",
    "write_atomic",
]

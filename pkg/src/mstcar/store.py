"""On-disk persistence for sampler output and chain checkpoints.

A sample store is a directory: one flat little-endian binary file per
parameter group (row per stored iteration) plus a ``manifest.json``
describing shapes, thinning, burn-in and seed.  Checkpoints are a single
versioned binary file with an explicit header carrying dimensions and the
layout tag, so a chain can be resumed bit-exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

STORE_FORMAT_VERSION = 1
CHECKPOINT_MAGIC = b"MSTCARC1"
CHECKPOINT_VERSION = 1

# parameter-group name -> (per-row shape key, dtype)
_HYPER_GROUPS = ("beta", "tau2", "rho", "year_covs", "hyper_cov")


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(Path(path), text.encode("utf-8"))


class SampleStore:
    """Thinned post-burn-in draws with a deterministic on-disk layout.

    theta rows are stored at the thinned cadence, hyperparameters at every
    post-burn-in iteration; acceptance tallies cover the whole run.
    """

    def __init__(self, meta: dict):
        required = {"seed", "burn_in", "thin_theta", "n_iterations", "dims", "layout", "mode"}
        missing = required - set(meta)
        if missing:
            raise ValueError(f"store metadata missing keys: {sorted(missing)}")
        self.meta = dict(meta)
        self._rows: dict[str, list[np.ndarray]] = {name: [] for name in _HYPER_GROUPS}
        self._rows["theta"] = []
        self.theta_iterations: list[int] = []
        self.hyper_iterations: list[int] = []
        self.theta_acceptance: list[float] = []
        self.rho_acceptance: list[np.ndarray] = []

    # -- accumulation ------------------------------------------------------
    def append_hyper(self, iteration: int, beta, tau2, rho, year_covs, hyper_cov) -> None:
        self.hyper_iterations.append(int(iteration))
        self._rows["beta"].append(np.array(beta, dtype=float))
        self._rows["tau2"].append(np.array(tau2, dtype=float))
        self._rows["rho"].append(np.array(rho, dtype=float))
        self._rows["year_covs"].append(np.array(year_covs, dtype=float))
        self._rows["hyper_cov"].append(np.array(hyper_cov, dtype=float))

    def append_theta(self, iteration: int, theta) -> None:
        self.theta_iterations.append(int(iteration))
        self._rows["theta"].append(np.array(theta, dtype=float))

    def record_acceptance(self, theta_rate: float, rho_flags) -> None:
        self.theta_acceptance.append(float(theta_rate))
        self.rho_acceptance.append(np.array(rho_flags, dtype=float))

    # -- access ------------------------------------------------------------
    @property
    def n_theta_draws(self) -> int:
        return len(self._rows["theta"])

    @property
    def n_hyper_draws(self) -> int:
        return len(self._rows["beta"])

    def draws(self, name: str) -> np.ndarray:
        rows = self._rows[name]
        if not rows:
            dims = self.meta["dims"]
            shape = _row_shape(name, dims)
            return np.zeros((0,) + shape)
        return np.stack(rows)

    def theta_draws(self) -> np.ndarray:
        return self.draws("theta")

    def truncate_to_iteration(self, iteration: int) -> None:
        """Drop rows recorded after ``iteration`` (used when resuming)."""
        keep_t = sum(1 for it in self.theta_iterations if it <= iteration)
        keep_h = sum(1 for it in self.hyper_iterations if it <= iteration)
        self.theta_iterations = self.theta_iterations[:keep_t]
        self._rows["theta"] = self._rows["theta"][:keep_t]
        self.hyper_iterations = self.hyper_iterations[:keep_h]
        for name in _HYPER_GROUPS:
            self._rows[name] = self._rows[name][:keep_h]
        self.theta_acceptance = self.theta_acceptance[: iteration + 1]
        self.rho_acceptance = self.rho_acceptance[: iteration + 1]

    # -- persistence ---------------------------------------------------------
    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays: dict[str, dict] = {}
        for name in ("theta",) + _HYPER_GROUPS:
            stacked = self.draws(name)
            arrays[name] = self._write_array(directory, name, stacked)
        arrays["theta_iterations"] = self._write_array(
            directory, "theta_iterations", np.asarray(self.theta_iterations, dtype=np.int64))
        arrays["hyper_iterations"] = self._write_array(
            directory, "hyper_iterations", np.asarray(self.hyper_iterations, dtype=np.int64))
        arrays["theta_acceptance"] = self._write_array(
            directory, "theta_acceptance", np.asarray(self.theta_acceptance, dtype=float))
        rho_acc = (np.stack(self.rho_acceptance) if self.rho_acceptance
                   else np.zeros((0, self.meta["dims"]["n_groups"])))
        arrays["rho_acceptance"] = self._write_array(directory, "rho_acceptance", rho_acc)

        manifest = dict(self.meta)
        manifest["format_version"] = STORE_FORMAT_VERSION
        manifest["kind"] = "mstcar-sample-store"
        manifest["arrays"] = arrays
        atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))

    @staticmethod
    def _write_array(directory: Path, name: str, arr: np.ndarray) -> dict:
        dtype = "<i8" if arr.dtype.kind == "i" else "<f8"
        payload = np.ascontiguousarray(arr).astype(dtype).tobytes()
        _atomic_write_bytes(directory / f"{name}.bin", payload)
        return {"file": f"{name}.bin", "dtype": dtype, "shape": list(arr.shape)}

    @classmethod
    def load(cls, directory: str | Path) -> "SampleStore":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no sample store at {directory} (missing manifest.json)")
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("kind") != "mstcar-sample-store":
            raise ValueError(f"{manifest_path} is not a sample-store manifest")
        if manifest.get("format_version") != STORE_FORMAT_VERSION:
            raise ValueError(f"unsupported store format version {manifest.get('format_version')}")
        descriptors = manifest.pop("arrays")
        meta = {k: v for k, v in manifest.items() if k not in ("format_version", "kind")}
        store = cls(meta)
        loaded = {
            name: _read_array(directory / desc["file"], desc)
            for name, desc in descriptors.items()
        }
        for name in ("theta",) + _HYPER_GROUPS:
            store._rows[name] = [row for row in loaded[name]]
        store.theta_iterations = [int(v) for v in loaded["theta_iterations"]]
        store.hyper_iterations = [int(v) for v in loaded["hyper_iterations"]]
        store.theta_acceptance = [float(v) for v in loaded["theta_acceptance"]]
        store.rho_acceptance = [row for row in loaded["rho_acceptance"]]
        return store


def _row_shape(name: str, dims: dict) -> tuple[int, ...]:
    ns, ng, nt = dims["n_regions"], dims["n_groups"], dims["n_times"]
    return {
        "theta": (ns, nt, ng),
        "beta": (nt, ng),
        "tau2": (ng,),
        "rho": (ng,),
        "year_covs": (nt, ng, ng),
        "hyper_cov": (ng, ng),
    }[name]


def _read_array(path: Path, desc: dict) -> np.ndarray:
    raw = np.frombuffer(path.read_bytes(), dtype=desc["dtype"])
    return raw.reshape(desc["shape"]).copy()


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, *, iteration: int, layout: str,
                    dims: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a resumable chain snapshot (versioned, little-endian doubles)."""
    ordered = sorted(arrays)
    header = {
        "version": CHECKPOINT_VERSION,
        "iteration": int(iteration),
        "layout": layout,
        "dims": dims,
        "arrays": [{"name": n, "shape": list(np.asarray(arrays[n]).shape)} for n in ordered],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += np.uint32(CHECKPOINT_VERSION).astype("<u4").tobytes()
    blob += np.uint32(len(header_bytes)).astype("<u4").tobytes()
    blob += header_bytes
    for name in ordered:
        blob += np.ascontiguousarray(arrays[name], dtype="<f8").tobytes()
    _atomic_write_bytes(Path(path), bytes(blob))


def load_checkpoint(path: str | Path) -> dict:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a chain checkpoint")
    version = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header_len = int(np.frombuffer(raw[12:16], dtype="<u4")[0])
    header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    offset = 16 + header_len
    arrays = {}
    for desc in header["arrays"]:
        size = int(np.prod(desc["shape"])) if desc["shape"] else 1
        data = np.frombuffer(raw[offset:offset + 8 * size], dtype="<f8")
        arrays[desc["name"]] = data.reshape(desc["shape"]).copy()
        offset += 8 * size
    return {
        "iteration": header["iteration"],
        "layout": header["layout"],
        "dims": header["dims"],
        "arrays": arrays,
    }

"""One complete component-based topology optimization run plus image output.

The inner loop alternates density projection, equilibrium solve, sensitivity
evaluation and one optimizer step until the compliance settles or the
iteration budget runs out.  The outcome is a :class:`SolutionRecord` holding
the final design, its rendered bitmap and the convergence trace.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .fem import (
    DensityField,
    FieldConfig,
    MaterialModel,
    Mesh,
    SingularStateError,
    assemble_and_solve,
    element_density,
    make_mesh,
    sensitivities,
)
from .geometry import Component, DesignDomain, DesignVector, design_bounds
from .mma import DEFAULT_BOX, MmaParams, MmaState, mma_step


@dataclass(frozen=True)
class EdgeSupport:
    """Fully fixed nodes along a grid line.

    ``axis="x"`` pins nodes whose x coordinate equals ``value`` with the y
    coordinate in ``[lo, hi]``; ``axis="y"`` the transposed reading.
    """

    axis: str
    value: float
    lo: float
    hi: float


@dataclass(frozen=True)
class PointLoad:
    """Concentrated nodal load; snaps to the nearest mesh node."""

    x: float
    y: float
    direction: str  # "x" | "y"
    magnitude: float


@dataclass
class CaseConfig:
    """Everything one optimization case needs: domain, mesh, BCs, limits."""

    name: str
    domain: DesignDomain
    nx: int
    ny: int
    volume_limit: float
    material: MaterialModel = field(default_factory=MaterialModel)
    supports: list[EdgeSupport] = field(default_factory=list)
    loads: list[PointLoad] = field(default_factory=list)
    init_grid: tuple[int, int] = (4, 2)
    render_scale: int = 4
    max_iterations: int = 200
    # Per-iteration relative-compliance window.  The sampled max-composition
    # field floors the plateau jitter near 1e-3, so the window tolerance sits
    # above that floor; tighter values are configurable but never fire.
    conv_tol: float = 5e-3
    conv_window: int = 5
    p: int = 6
    alpha: float = 1e-3
    fd_step: float = 1e-6

    def __post_init__(self) -> None:
        if not 0.0 < self.volume_limit <= 1.0:
            raise ValueError(f"volume limit must lie in (0, 1], got {self.volume_limit}")

    @property
    def hx(self) -> float:
        return self.domain.width / self.nx

    @property
    def hy(self) -> float:
        return self.domain.height / self.ny

    def field_config(self) -> FieldConfig:
        return FieldConfig.for_mesh(self.hx, self.hy, p=self.p, alpha=self.alpha)

    def build_mesh(self) -> Mesh:
        fixed = []
        for sup in self.supports:
            fixed.extend(self._support_nodes(sup))
        fixed_dofs = np.array(sorted({d for n in fixed for d in (2 * n, 2 * n + 1)}), dtype=np.int64)
        load_entries = []
        for ld in self.loads:
            node = self._nearest_node(ld.x, ld.y)
            load_entries.append((node, 0 if ld.direction == "x" else 1, ld.magnitude))
        return make_mesh(self.domain, self.nx, self.ny, fixed_dofs, load_entries)

    def _nearest_node(self, x: float, y: float) -> int:
        ix = int(round(x / self.hx))
        iy = int(round(y / self.hy))
        ix = min(max(ix, 0), self.nx)
        iy = min(max(iy, 0), self.ny)
        return iy * (self.nx + 1) + ix

    def _support_nodes(self, sup: EdgeSupport) -> list[int]:
        nodes = []
        if sup.axis == "x":
            ix = int(round(sup.value / self.hx))
            for iy in range(self.ny + 1):
                y = iy * self.hy
                if sup.lo - 1e-9 <= y <= sup.hi + 1e-9:
                    nodes.append(iy * (self.nx + 1) + ix)
        elif sup.axis == "y":
            iy = int(round(sup.value / self.hy))
            for ix in range(self.nx + 1):
                x = ix * self.hx
                if sup.lo - 1e-9 <= x <= sup.hi + 1e-9:
                    nodes.append(iy * (self.nx + 1) + ix)
        else:
            raise ValueError(f"unknown support axis {sup.axis!r}")
        return nodes

    def support_node_ids(self) -> list[int]:
        out: list[int] = []
        for sup in self.supports:
            out.extend(self._support_nodes(sup))
        return sorted(set(out))

    def load_node_ids(self) -> list[int]:
        return [self._nearest_node(ld.x, ld.y) for ld in self.loads]


@dataclass
class SolutionRecord:
    """Outcome of one optimization run."""

    mma_params: MmaParams
    design: DesignVector
    compliance: float
    volume_fraction: float
    trace: list[tuple[float, float]]  # (compliance, volume fraction) per iteration
    image: np.ndarray  # uint8 grayscale, row 0 at the top
    converged: bool
    label: str = "unlabeled"

    def to_json(self, image_path: str = "") -> str:
        payload = {
            "version": 1,
            "mma_params": {
                "albefa": self.mma_params.albefa,
                "asyinit": self.mma_params.asyinit,
                "asyincr": self.mma_params.asyincr,
                "asydecr": self.mma_params.asydecr,
            },
            "compliance": self.compliance,
            "volume_fraction": self.volume_fraction,
            "converged": self.converged,
            "label": self.label,
            "trace_compliance": [c for c, _ in self.trace],
            "trace_volume": [v for _, v in self.trace],
            "design": self.design.to_text(),
            "image": image_path,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str, image: np.ndarray | None = None) -> "SolutionRecord":
        d = json.loads(text)
        params = MmaParams(**d["mma_params"])
        design = DesignVector.from_text(d["design"])
        trace = list(zip(d["trace_compliance"], d["trace_volume"]))
        if image is None:
            image = np.zeros((0, 0), dtype=np.uint8)
        return cls(
            mma_params=params,
            design=design,
            compliance=d["compliance"],
            volume_fraction=d["volume_fraction"],
            trace=trace,
            image=image,
            converged=d["converged"],
            label=d["label"],
        )


def initial_layout(cfg: CaseConfig) -> DesignVector:
    """Deterministic starting structure: a grid of crossing component pairs.

    Cells whose center falls outside the active region are skipped so every
    component center stays inside it.
    """
    gx, gy = cfg.init_grid
    dw, dh = cfg.domain.width, cfg.domain.height
    cw, ch = dw / gx, dh / gy
    half_len = 0.45 * math.hypot(cw, ch)
    tilt = math.atan2(ch, cw)
    thick = 0.05 * dh
    comps = []
    for j in range(gy):
        for i in range(gx):
            cx = (i + 0.5) * cw
            cy = (j + 0.5) * ch
            if not bool(cfg.domain.active(cx, cy)):
                continue
            for theta in (tilt, -tilt):
                comps.append(Component(cx, cy, half_len, thick, thick, thick, theta))
    lo, hi = design_bounds(cfg.domain, len(comps))
    return DesignVector(comps, p=cfg.p, lower=lo, upper=hi)


def render(design: DesignVector, cfg: CaseConfig) -> np.ndarray:
    """Rasterize the exact material indicator at ``render_scale`` px/element.

    White (255) marks pixels whose center sees a strictly positive structure
    field inside the active region; everything else, including boundary
    pixels, is black.
    """
    w = cfg.render_scale * cfg.nx
    h = cfg.render_scale * cfg.ny
    px = (np.arange(w) + 0.5) * (cfg.domain.width / w)
    py = cfg.domain.height - (np.arange(h) + 0.5) * (cfg.domain.height / h)
    xs = np.tile(px, h)
    ys = np.repeat(py, w)
    phi, _ = kernels.phi_max(design.param_array(), xs, ys, design.p)
    solid = (phi > 0.0) & cfg.domain.active(xs, ys)
    return np.where(solid.reshape(h, w), 255, 0).astype(np.uint8)


def run_mmc(cfg: CaseConfig, params: MmaParams) -> SolutionRecord:
    """Full inner optimization at the given optimizer constants.

    Converged means the relative compliance change stayed below ``conv_tol``
    for ``conv_window`` consecutive iterations with the volume bound met to
    within 1%.  An equilibrium failure ends the run immediately with the
    record labeled infeasible.
    """
    params.validate()
    if not DEFAULT_BOX.contains(params):
        warnings.warn(f"optimizer constants {params} outside the standard tuning box", stacklevel=2)
    mesh = cfg.build_mesh()
    fcfg = cfg.field_config()
    d0 = initial_layout(cfg)
    lo, hi = design_bounds(cfg.domain, d0.n)
    x = np.clip(d0.flatten(), lo, hi)
    state = MmaState.fresh(lo, hi)

    trace: list[tuple[float, float]] = []
    streak = 0
    converged = False
    failed = False
    for it in range(cfg.max_iterations):
        dens = element_density(x, mesh, fcfg)
        try:
            sol = assemble_and_solve(dens.rho, mesh, cfg.material)
        except SingularStateError:
            failed = True
            break
        trace.append((sol.compliance, sol.volume_fraction))
        if len(trace) >= 2:
            prev_c = trace[-2][0]
            rel = abs(sol.compliance - prev_c) / max(abs(sol.compliance), 1e-12)
            streak = streak + 1 if rel < cfg.conv_tol else 0
            if streak >= cfg.conv_window and sol.volume_fraction <= cfg.volume_limit * 1.01:
                converged = True
                break
        if it == cfg.max_iterations - 1:
            break
        dC, dV = sensitivities(x, mesh, cfg.material, fcfg, sol, dens)
        step = mma_step(x, sol.compliance, dC, sol.volume_fraction - cfg.volume_limit, dV, state, params)
        x = step.x
        state = step.state

    if not trace:
        # Failure before the first evaluation completed.
        trace.append((math.inf, 0.0))
    design = DesignVector.unflatten(x, p=cfg.p, lower=lo, upper=hi)
    image = render(design, cfg)
    compliance = math.inf if failed else trace[-1][0]
    return SolutionRecord(
        mma_params=params,
        design=design,
        compliance=compliance,
        volume_fraction=trace[-1][1],
        trace=trace,
        image=image,
        converged=converged and not failed,
        label="infeasible" if failed else "unlabeled",
    )


def write_pgm(image: np.ndarray, path) -> None:
    """Binary PGM (P5, maxval 255)."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("image must be 2-D grayscale")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return pixels.reshape(h, w).copy()


def save_record(record: SolutionRecord, stem) -> tuple[Path, Path]:
    """Write ``<stem>.json`` and ``<stem>.pgm``; returns the two paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    img_path = stem.with_suffix(".pgm")
    rec_path = stem.with_suffix(".json")
    write_pgm(record.image, img_path)
    rec_path.write_text(record.to_json(image_path=img_path.name) + "\n")
    return rec_path, img_path


def load_record(rec_path) -> SolutionRecord:
    rec_path = Path(rec_path)
    text = rec_path.read_text()
    payload = json.loads(text)
    image = read_pgm(rec_path.parent / payload["image"]) if payload.get("image") else None
    return SolutionRecord.from_json(text, image=image)

"""Input/output function pairs on uniform grids and their on-disk format."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .binio import FormatError, Reader, Writer
from .grf import GrfConfig, sample_grf
from .pde import make_darcy_coefficient, solve_burgers, solve_darcy

DATASET_MAGIC = b"IFND"
DATASET_VERSION = 1
PROBLEM_TAGS = {"burgers": 0, "darcy": 1}
TAG_PROBLEMS = {v: k for k, v in PROBLEM_TAGS.items()}


@dataclass
class Sample:
    input: np.ndarray
    output: np.ndarray

    def __post_init__(self):
        self.input = np.asarray(self.input, dtype=np.float64)
        self.output = np.asarray(self.output, dtype=np.float64)
        if self.input.shape != self.output.shape:
            raise ValueError(
                f"input/output shapes differ: {self.input.shape} vs {self.output.shape}"
            )


@dataclass
class Dataset:
    samples: list
    problem: str
    config_text: str = ""

    def __post_init__(self):
        if self.problem not in PROBLEM_TAGS:
            raise ValueError(f"unknown problem tag {self.problem!r}")
        shapes = {s.input.shape for s in self.samples}
        if len(shapes) > 1:
            raise ValueError(f"samples disagree on shape: {sorted(shapes)}")

    def __len__(self):
        return len(self.samples)


def write_dataset(ds, path):
    w = Writer()
    w.raw(DATASET_MAGIC)
    w.u32(DATASET_VERSION)
    w.u8(PROBLEM_TAGS[ds.problem])
    w.u64(len(ds.samples))
    for s in ds.samples:
        w.u8(s.input.ndim)
        for n in s.input.shape:
            w.u64(n)
        w.array_f64(s.input)
        w.array_f64(s.output)
    w.text(ds.config_text)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def read_dataset(path):
    with open(path, "rb") as fh:
        r = Reader(fh.read())
    r.expect_magic(DATASET_MAGIC)
    version = r.u32("version")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version} at offset 4")
    tag = r.u8("problem tag")
    if tag not in TAG_PROBLEMS:
        raise FormatError(f"unknown problem tag {tag} at offset 8")
    count = r.u64("sample count")
    samples = []
    for _ in range(count):
        rank = r.u8("sample rank")
        shape = tuple(r.u64("extent") for _ in range(rank))
        n = int(np.prod(shape)) if shape else 1
        inp = r.array_f64(n, shape, "input payload")
        out = r.array_f64(n, shape, "output payload")
        samples.append(Sample(inp, out))
    text = r.text("config snapshot")
    r.done()
    return Dataset(samples, TAG_PROBLEMS[tag], text)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def sample_seed(base_seed, index):
    """Independent, reproducible per-sample seed material."""
    return [int(base_seed), int(index)]


def subsample_stride(master, target, inclusive):
    """Stride mapping a master grid onto a coarser aligned one."""
    if inclusive:
        if target < 2 or (master - 1) % (target - 1) != 0:
            raise ValueError(
                f"target {target} does not align with inclusive master grid {master}"
            )
        return (master - 1) // (target - 1)
    if target < 1 or master % target != 0:
        raise ValueError(f"target {target} does not divide periodic master grid {master}")
    return master // target


def generate_burgers(grf_cfg, viscosity, t_final, count, base_seed, resolution,
                     config_text=""):
    """Initial conditions from the GRF, solved at the master resolution,
    stored subsampled to ``resolution``."""
    stride = subsample_stride(grf_cfg.resolution, resolution, inclusive=False)
    samples = []
    for i in range(count):
        cfg = replace(grf_cfg, seed=sample_seed(base_seed, i))
        u0 = sample_grf(cfg, dims=1)
        u1 = solve_burgers(u0, viscosity, t_final)
        samples.append(Sample(u0[::stride, None], u1[::stride, None]))
    return Dataset(samples, "burgers", config_text)


def generate_darcy(grf_cfg, hi, lo, count, base_seed, resolution, config_text=""):
    """Thresholded-GRF coefficients solved at the master resolution,
    stored subsampled to ``resolution`` (grids include the boundary)."""
    stride = subsample_stride(grf_cfg.resolution, resolution, inclusive=True)
    samples = []
    for i in range(count):
        cfg = replace(grf_cfg, seed=sample_seed(base_seed, i))
        coeff = make_darcy_coefficient(sample_grf(cfg, dims=2), hi, lo)
        u = solve_darcy(coeff)
        samples.append(Sample(coeff[::stride, ::stride, None], u[::stride, ::stride, None]))
    return Dataset(samples, "darcy", config_text)

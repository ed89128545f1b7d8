"""Sparse SDPA (.dat-s) export/import and an external-solver bridge.

A program ``min c^T x, A x = b, x in K`` is written in SDPA's matrix form
``max F0 . Y  s.t.  F_i . Y = c_i,  Y >= 0`` with ``Y = x``, ``F0 = -c`` and
``F_i`` = row ``i`` of ``A``.  Non-negative variables form one LP block
(negative block size), free variables are split into a difference of two
LP entries, and zero-cone variables are dropped.
"""

from __future__ import annotations

import os
import re
import subprocess
import tempfile
from typing import List, Optional, Tuple

import numpy as np

from . import solver as so

ENV_VAR = "SOSMOMENT_SDPA"
SQRT2 = np.sqrt(2.0)


def _layout(cp: so.ConicProgram):
    """Map every program column to (block, i, j, factor) entries of Y."""
    lp_cols: List[Tuple[int, float]] = []  # (column, sign) per LP entry
    psd_blocks = []  # (start, n)
    for start, cone in zip(cp.offsets(), cp.cones):
        if cone.kind == so.NONNEG:
            lp_cols += [(start + i, 1.0) for i in range(cone.dim)]
        elif cone.kind == so.FREE:
            for i in range(cone.dim):
                lp_cols += [(start + i, 1.0), (start + i, -1.0)]
        elif cone.kind == so.PSD and cone.size:
            psd_blocks.append((start, cone.size))
    return lp_cols, psd_blocks


def _entries(vec: np.ndarray, lp_cols, psd_blocks):
    """Yield (block, i, j, value) with 1-based indices for a coefficient vector."""
    blk = 0
    for start, n in psd_blocks:
        blk += 1
        iu = np.triu_indices(n)
        seg = vec[start:start + n * (n + 1) // 2]
        for k in np.nonzero(seg)[0]:
            i, j = int(iu[0][k]), int(iu[1][k])
            val = seg[k] if i == j else seg[k] / SQRT2
            yield blk, i + 1, j + 1, float(val)
    if lp_cols:
        blk += 1
        for pos, (col, sign) in enumerate(lp_cols):
            val = sign * vec[col]
            if val != 0.0:
                yield blk, pos + 1, pos + 1, float(val)


def export_sdpa(cp: so.ConicProgram, path) -> None:
    lp_cols, psd_blocks = _layout(cp)
    sizes = [n for _, n in psd_blocks] + ([-len(lp_cols)] if lp_cols else [])
    sign = 1.0 if cp.sense == "min" else -1.0
    lines = [
        f'"sosmoment export sense={cp.sense}',
        f"{cp.num_constraints} = mDIM",
        f"{len(sizes)} = nBLOCK",
        " ".join(str(s) for s in sizes) + " = bLOCKsTRUCT",
        " ".join(f"{v:.17g}" for v in cp.b) if cp.num_constraints else "",
    ]
    for blk, i, j, val in _entries(-sign * cp.c, lp_cols, psd_blocks):
        lines.append(f"0 {blk} {i} {j} {val:.17g}")
    for r in range(cp.num_constraints):
        for blk, i, j, val in _entries(cp.A[r], lp_cols, psd_blocks):
            lines.append(f"{r + 1} {blk} {i} {j} {val:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _numbers(text: str) -> List[float]:
    return [float(t) for t in re.split(r"[\s,{}()=]+", text) if t]


def import_sdpa(path) -> so.ConicProgram:
    """Read a sparse SDPA file as ``min``/``max`` over PSD and non-negative blocks."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    sense = "max"
    body = []
    for line in raw:
        s = line.strip()
        if s.startswith('"') or s.startswith("*"):
            m = re.search(r"sense=(min|max)", s)
            if m:
                sense = m.group(1)
            continue
        if s:
            body.append(s)
    if len(body) < 3:
        raise ValueError("truncated SDPA file")
    mdim = int(_numbers(body[0].split("=")[0])[0])
    nblock = int(_numbers(body[1].split("=")[0])[0])
    sizes = [int(v) for v in _numbers(body[2].split("=")[0])][:nblock]
    pos = 3
    cvec: List[float] = []
    while len(cvec) < mdim:
        cvec += _numbers(body[pos])
        pos += 1
    cones, offsets, total = [], [], 0
    for s in sizes:
        cone = so.Cone(so.PSD, s) if s > 0 else so.Cone(so.NONNEG, -s)
        cones.append(cone)
        offsets.append(total)
        total += cone.dim
    F = np.zeros((mdim + 1, total))
    for line in body[pos:]:
        parts = line.split()
        k, blk, i, j = (int(p) for p in parts[:4])
        val = float(parts[4])
        cone, off = cones[blk - 1], offsets[blk - 1]
        i, j = min(i, j) - 1, max(i, j) - 1
        if cone.kind == so.NONNEG:
            if i != j:
                raise ValueError("off-diagonal entry in an LP block")
            F[k, off + i] += val
        else:
            n = cone.size
            idx = i * n - i * (i - 1) // 2 + (j - i)
            F[k, off + idx] += val if i == j else val * SQRT2
    sign = 1.0 if sense == "min" else -1.0
    return so.ConicProgram(c=-sign * F[0], A=F[1:], b=np.array(cvec[:mdim]), cones=cones, sense=sense)


# ----------------------------------------------------------------------
# external solver bridge

_PHASE = {
    "pdOPT": so.OPTIMAL,
    "pUNBD": so.INFEASIBLE,
    "pFEAS_dINF": so.INFEASIBLE,
    "dUNBD": so.DUAL_INFEASIBLE,
    "pINF_dFEAS": so.DUAL_INFEASIBLE,
}


def _braced(text: str, key: str) -> Optional[str]:
    m = re.search(re.escape(key) + r"\s*=\s*", text)
    if not m:
        return None
    start = text.find("{", m.end())
    if start < 0:
        return None
    depth = 0
    for pos in range(start, len(text)):
        if text[pos] == "{":
            depth += 1
        elif text[pos] == "}":
            depth -= 1
            if depth == 0:
                return text[start:pos + 1]
    return None


def _scalar(text: str, key: str) -> Optional[float]:
    m = re.search(re.escape(key) + r"\s*=\s*([-+0-9.eE]+)", text)
    return float(m.group(1)) if m else None


def _split_blocks(text: str) -> List[str]:
    """Top-level ``{...}`` groups inside an outer pair of braces."""
    inner = text.strip()[1:-1]
    out, depth, start = [], 0, None
    for pos, ch in enumerate(inner):
        if ch == "{":
            if depth == 0:
                start = pos
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                out.append(inner[start:pos + 1])
    return out


def parse_sdpa_output(cp: so.ConicProgram, text: str) -> so.Solution:
    """Map an SDPA result file back onto the columns of ``cp``."""
    lp_cols, psd_blocks = _layout(cp)
    phase = re.search(r"phase\.value\s*=\s*(\w+)", text)
    status = _PHASE.get(phase.group(1), so.NUMERICAL_LIMIT) if phase else so.NUMERICAL_LIMIT
    sign = 1.0 if cp.sense == "min" else -1.0
    x = np.zeros(cp.num_vars)
    ymat = _braced(text, "yMat")
    if ymat is not None:
        blocks = _split_blocks(ymat)
        for (start, n), blk in zip(psd_blocks, blocks):
            vals = np.array(_numbers(blk)).reshape(n, n)
            x[start:start + n * (n + 1) // 2] = so.svec(0.5 * (vals + vals.T))
        if lp_cols and len(blocks) > len(psd_blocks):
            diag = _numbers(blocks[len(psd_blocks)])
            for (col, s), v in zip(lp_cols, diag):
                x[col] += s * v
    xvec = _braced(text, "xVec")
    y = -np.array(_numbers(xvec)) if xvec is not None else np.zeros(cp.num_constraints)
    if y.size != cp.num_constraints:
        y = np.zeros(cp.num_constraints)
    s = sign * cp.c - cp.A.T @ y
    pobj = float(cp.c @ x)
    dval = _scalar(text, "objValPrimal")
    dobj = sign * (-dval) if dval is not None else float("nan")
    res = {"primal": float(np.linalg.norm(cp.A @ x - cp.b) / (1 + np.linalg.norm(cp.b))),
           "dual": float("nan"), "gap": abs(pobj - dobj), "rel_gap": abs(pobj - dobj) / (1 + abs(pobj))}
    return so.Solution(status, x, y, s, pobj, dobj, res, 0, "external SDPA solver")


def solve_external(cp: so.ConicProgram, executable: Optional[str] = None, timeout: float = 600.0) -> so.Solution:
    """Run ``<executable> in.dat-s out.txt`` and parse the result."""
    exe = executable or os.environ.get(ENV_VAR)
    if not exe:
        raise so.SolverError(f"no external solver configured; set {ENV_VAR}")
    with tempfile.TemporaryDirectory() as tmp:
        src = os.path.join(tmp, "problem.dat-s")
        out = os.path.join(tmp, "result.out")
        export_sdpa(cp, src)
        proc = subprocess.run([exe, src, out], capture_output=True, text=True, timeout=timeout)
        if proc.returncode != 0 or not os.path.exists(out):
            raise so.SolverError(f"external solver failed ({proc.returncode}): {proc.stderr.strip()[:400]}")
        with open(out) as fh:
            return parse_sdpa_output(cp, fh.read())

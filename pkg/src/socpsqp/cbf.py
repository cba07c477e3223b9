"""Conic Benchmark Format reader (SOCP subset) and the mapping onto the
native problem type, including the rotated-cone transformation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import EQ, LE, ConeProblem, ConeSpec, LinearRow

_SUPPORTED = {"VER", "OBJSENSE", "VAR", "INT", "CON",
              "OBJACOORD", "OBJBCOORD", "ACOORD", "BCOORD"}
_VAR_CONES = {"F", "L+", "L-", "L=", "Q", "QR"}
_CON_CONES = {"L+", "L-", "L=", "Q", "QR"}


class CbfSyntaxError(ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnsupportedFeatureError(ValueError):
    pass


@dataclass
class CbfModel:
    version: int = 1
    objsense: str = "MIN"
    num_vars: int = 0
    var_groups: list = field(default_factory=list)
    num_cons: int = 0
    con_groups: list = field(default_factory=list)
    integers: list = field(default_factory=list)
    obja: dict = field(default_factory=dict)
    objb: float = 0.0
    acoord: dict = field(default_factory=dict)
    bcoord: dict = field(default_factory=dict)


class _Lines:
    def __init__(self, text):
        self.raw = text.splitlines()
        self.pos = 0

    def next_content(self):
        while self.pos < len(self.raw):
            self.pos += 1
            line = self.raw[self.pos - 1].split("#", 1)[0].strip()
            if line:
                return self.pos, line
        return None, None


def parse_cbf(text):
    """Parse CBF text (versions 1-3, SOCP keyword subset) into a CbfModel.

    PSD blocks and other unsupported keywords raise UnsupportedFeatureError;
    malformed content raises CbfSyntaxError with its line number.
    """
    model = CbfModel()
    lines = _Lines(text)
    seen_ver = False
    while True:
        line_no, line = lines.next_content()
        if line is None:
            break
        keyword = line.split()[0]
        if keyword not in _SUPPORTED:
            if keyword.isupper():
                raise UnsupportedFeatureError(f"unsupported CBF keyword {keyword!r} (line {line_no})")
            raise CbfSyntaxError(line_no, f"expected a keyword, found {line!r}")
        if keyword == "VER":
            no, val = lines.next_content()
            model.version = _int(no, val)
            if model.version not in (1, 2, 3):
                raise CbfSyntaxError(no, f"unsupported CBF version {model.version}")
            seen_ver = True
        elif keyword == "OBJSENSE":
            no, val = lines.next_content()
            if val not in ("MIN", "MAX"):
                raise CbfSyntaxError(no, f"objective sense must be MIN or MAX, got {val!r}")
            model.objsense = val
        elif keyword in ("VAR", "CON"):
            no, val = lines.next_content()
            total, ngroups = _ints(no, val, 2)
            groups = []
            count = 0
            for _ in range(ngroups):
                no, val = lines.next_content()
                parts = val.split() if val else []
                if len(parts) != 2:
                    raise CbfSyntaxError(no or line_no, "expected 'CONE size'")
                cone, size = parts[0], _int(no, parts[1])
                allowed = _VAR_CONES if keyword == "VAR" else _CON_CONES
                if cone not in allowed:
                    raise UnsupportedFeatureError(
                        f"unsupported {keyword} cone {cone!r} (line {no})")
                if size < 1 or (cone == "Q" and size < 2) or (cone == "QR" and size < 3):
                    raise CbfSyntaxError(no, f"invalid size {size} for cone {cone}")
                groups.append((cone, size))
                count += size
            if count != total:
                raise CbfSyntaxError(line_no, f"group sizes sum to {count}, expected {total}")
            if keyword == "VAR":
                model.num_vars, model.var_groups = total, groups
            else:
                model.num_cons, model.con_groups = total, groups
        elif keyword == "INT":
            no, val = lines.next_content()
            k = _int(no, val)
            for _ in range(k):
                no, val = lines.next_content()
                j = _int(no, val)
                _check_var(model, j, no)
                model.integers.append(j)
        elif keyword == "OBJACOORD":
            no, val = lines.next_content()
            for _ in range(_int(no, val)):
                no, val = lines.next_content()
                parts = (val or "").split()
                if len(parts) != 2:
                    raise CbfSyntaxError(no or line_no, "expected 'var value'")
                j = _int(no, parts[0])
                _check_var(model, j, no)
                model.obja[j] = model.obja.get(j, 0.0) + _float(no, parts[1])
        elif keyword == "OBJBCOORD":
            no, val = lines.next_content()
            model.objb = _float(no, val)
        elif keyword == "ACOORD":
            no, val = lines.next_content()
            for _ in range(_int(no, val)):
                no, val = lines.next_content()
                parts = (val or "").split()
                if len(parts) != 3:
                    raise CbfSyntaxError(no or line_no, "expected 'con var value'")
                i, j = _int(no, parts[0]), _int(no, parts[1])
                _check_con(model, i, no)
                _check_var(model, j, no)
                model.acoord[(i, j)] = model.acoord.get((i, j), 0.0) + _float(no, parts[2])
        elif keyword == "BCOORD":
            no, val = lines.next_content()
            for _ in range(_int(no, val)):
                no, val = lines.next_content()
                parts = (val or "").split()
                if len(parts) != 2:
                    raise CbfSyntaxError(no or line_no, "expected 'con value'")
                i = _int(no, parts[0])
                _check_con(model, i, no)
                model.bcoord[i] = model.bcoord.get(i, 0.0) + _float(no, parts[1])
    if not seen_ver:
        raise CbfSyntaxError(1, "missing VER block")
    return model


def _int(line_no, text):
    try:
        return int(text)
    except (TypeError, ValueError):
        raise CbfSyntaxError(line_no or 0, f"expected an integer, got {text!r}") from None


def _ints(line_no, text, k):
    parts = (text or "").split()
    if len(parts) != k:
        raise CbfSyntaxError(line_no or 0, f"expected {k} integers")
    return tuple(_int(line_no, p) for p in parts)


def _float(line_no, text):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise CbfSyntaxError(line_no or 0, f"expected a number, got {text!r}") from None


def _check_var(model, j, line_no):
    if not 0 <= j < model.num_vars:
        raise CbfSyntaxError(line_no or 0, f"variable index {j} out of range")


def _check_con(model, i, line_no):
    if not 0 <= i < model.num_cons:
        raise CbfSyntaxError(line_no or 0, f"constraint index {i} out of range")


_SQ2 = 1.0 / math.sqrt(2.0)


def to_cone_problem(model):
    """Map a parsed model onto the native form.

    Rotated groups (p, q, xbar) become standard cones through the orthogonal
    substitution u0 = (p+q)/sqrt(2), u1 = (p-q)/sqrt(2) on fresh variables
    tied by equality rows; affine cone constraints get fresh variables the
    same way.  Maximization negates the objective (the constant objb is not
    carried).  Integer markers are relaxed.
    """
    n = model.num_vars
    rows = []
    cones = []
    lower = []
    upper = []

    pos = 0
    for cone, size in model.var_groups:
        idx = list(range(pos, pos + size))
        pos += size
        lo, up = {
            "L+": (0.0, np.inf),
            "L-": (-np.inf, 0.0),
            "L=": (0.0, 0.0),
        }.get(cone, (-np.inf, np.inf))
        lower.extend([lo] * size)
        upper.extend([up] * size)
        if cone == "Q":
            cones.append(("direct", idx))
        elif cone == "QR":
            cones.append(("rotated", idx))

    fresh = [n]

    def new_var():
        lower.append(-np.inf)
        upper.append(np.inf)
        fresh[0] += 1
        return fresh[0] - 1

    cone_specs = []
    for kind, idx in cones:
        if kind == "direct":
            cone_specs.append(ConeSpec(tuple(idx)))
        else:
            p_i, q_i = idx[0], idx[1]
            u0, u1 = new_var(), new_var()
            rows.append(LinearRow([p_i, q_i, u0], [_SQ2, _SQ2, -1.0], 0.0, EQ))
            rows.append(LinearRow([p_i, q_i, u1], [_SQ2, -_SQ2, -1.0], 0.0, EQ))
            cone_specs.append(ConeSpec(tuple([u0, u1] + idx[2:])))

    # constraint rows: entries of A x + b per cone group
    row_entries = {}
    for (i, j), v in model.acoord.items():
        row_entries.setdefault(i, []).append((j, v))

    def affine(i):
        ent = sorted(row_entries.get(i, []))
        idx = [j for j, _ in ent]
        val = [v for _, v in ent]
        return idx, val, model.bcoord.get(i, 0.0)

    ci = 0
    for cone, size in model.con_groups:
        if cone in ("L+", "L-", "L="):
            for k in range(size):
                idx, val, bi = affine(ci + k)
                if cone == "L+":
                    rows.append(LinearRow(idx, [-v for v in val], bi, LE))
                elif cone == "L-":
                    rows.append(LinearRow(idx, val, -bi, LE))
                else:
                    rows.append(LinearRow(idx, val, -bi, EQ))
        elif cone == "Q":
            u = [new_var() for _ in range(size)]
            for k in range(size):
                idx, val, bi = affine(ci + k)
                rows.append(LinearRow(idx + [u[k]], val + [-1.0], -bi, EQ))
            cone_specs.append(ConeSpec(tuple(u)))
        else:  # QR constraint group
            u = [new_var() for _ in range(size)]
            ip, vp, bp = affine(ci)
            iq, vq, bq = affine(ci + 1)
            plus = _combine(ip, vp, iq, vq, _SQ2, _SQ2)
            minus = _combine(ip, vp, iq, vq, _SQ2, -_SQ2)
            rows.append(LinearRow(plus[0] + [u[0]], plus[1] + [-1.0], -_SQ2 * (bp + bq), EQ))
            rows.append(LinearRow(minus[0] + [u[1]], minus[1] + [-1.0], -_SQ2 * (bp - bq), EQ))
            for k in range(2, size):
                idx, val, bi = affine(ci + k)
                rows.append(LinearRow(idx + [u[k]], val + [-1.0], -bi, EQ))
            cone_specs.append(ConeSpec(tuple(u)))
        ci += size

    total = fresh[0]
    c = np.zeros(total)
    for j, v in model.obja.items():
        c[j] = v
    if model.objsense == "MAX":
        c = -c
    return ConeProblem(total, c, rows, np.array(lower), np.array(upper), cone_specs)


def _combine(i1, v1, i2, v2, w1, w2):
    acc = {}
    for j, v in zip(i1, v1):
        acc[j] = acc.get(j, 0.0) + w1 * v
    for j, v in zip(i2, v2):
        acc[j] = acc.get(j, 0.0) + w2 * v
    idx = sorted(acc)
    return idx, [acc[j] for j in idx]

"""Independent brute-force re-statements of the rule sets, written without importing the package's filters.

Each oracle works from raw tuples ``(label, xc, yc, w, h, conf)`` so it shares
no code with the implementation beyond the blacklist file.
"""
import math
from itertools import combinations
from pathlib import Path

import numpy as np

W, H, TAU = 1280, 720, 15

_BLACKLIST_FILE = Path(__file__).resolve().parents[1] / "src" / "subject_forge" / "data" / "blacklist.txt"


def blacklist():
    raw = [l.strip() for l in _BLACKLIST_FILE.read_text().splitlines() if l.strip()]
    # plural table entries match their singular label too
    return set(raw) | {r[:-1] for r in raw if r.endswith("s")}


def corners(b):
    _, xc, yc, w, h, _ = b
    r = lambda v: math.floor(v + 0.5)
    x1, x2 = r((xc - w / 2) * W), r((xc + w / 2) * W)
    y1, y2 = r((yc - h / 2) * H), r((yc + h / 2) * H)
    x1, x2 = max(0, min(W, x1)), max(0, min(W, x2))
    y1, y2 = max(0, min(H, y1)), max(0, min(H, y2))
    return x1, y1, x2, y2


def degenerate(b):
    x1, y1, x2, y2 = corners(b)
    return x2 <= x1 or y2 <= y1


def sides(b):
    x1, y1, x2, y2 = corners(b)
    out = set()
    if y1 <= TAU:
        out.add("top")
    if H - y2 <= TAU:
        out.add("bottom")
    if x1 <= TAU:
        out.add("left")
    if W - x2 <= TAU:
        out.add("right")
    return out


def pixel_iou(a, b):
    ax1, ay1, ax2, ay2 = corners(a)
    bx1, by1, bx2, by2 = corners(b)
    ix = max(0, min(ax2, bx2) - max(ax1, bx1))
    iy = max(0, min(ay2, by2) - max(ay1, by1))
    inter = ix * iy
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union else 0.0


def area(b):
    return b[3] * b[4]


def single_ok(boxes):
    if len(boxes) != 1:
        return False
    b = boxes[0]
    A = area(b)
    if not (0.2 <= A <= 0.8):
        return False
    if b[5] < 0.85:
        return False
    if degenerate(b):
        return False
    s = sides(b)
    if "top" in s and "bottom" in s and A > 0.7:
        return False
    return True


def border_minimum(s, precedence="all"):
    rows = []
    if "bottom" in s and ("left" in s or "right" in s):
        rows.append(0.87)
    if ("top" in s and "bottom" in s and "left" in s) or ("top" in s and "bottom" in s and "right" in s):
        rows.append(0.88)
    if "top" in s and "bottom" in s:
        rows.append(0.87)
    if not rows:
        return 0.0
    return rows[0] if precedence == "first_match" else max(rows)


def three_ok(boxes, precedence="all"):
    if len(boxes) != 3:
        return False
    if any(degenerate(b) for b in boxes):
        return False
    for a, b in combinations(boxes, 2):
        if pixel_iou(a, b) > 0.2:
            return False
    if sum(area(b) for b in boxes) < 0.2:
        return False
    for b in boxes:
        if b[5] < 0.8:
            return False
        s = sides(b)
        if "top" in s and "bottom" not in s:
            return False
        if b[5] < border_minimum(s, precedence):
            return False
    return True


def mixed_result(boxes, bl=None):
    """Returns the surviving boxes, or None when the frame is discarded."""
    bl = blacklist() if bl is None else bl
    step = [b for b in boxes if 0.01 <= area(b) <= 0.60]
    step = [b for b in step if b[0] not in bl]
    step = [b for b in step if b[5] >= 0.5]
    step = [b for b in step if not (b[0] == "person" and b[5] < 0.8)]
    persons = len([b for b in step if b[0] == "person"])
    if persons < 1 or persons > 3:
        return None
    keep = []
    for i, b in enumerate(step):
        rivals = [c for c in step if c[0] == b[0]]
        best = max(area(c) for c in rivals)
        first_best = next(j for j, c in enumerate(step) if c[0] == b[0] and area(c) == best)
        if i == first_best:
            keep.append(b)
    if not (1 <= len(keep) <= 5):
        return None
    if len(keep) == 1 and not (0.20 <= area(keep[0]) <= 0.60):
        return None
    return keep


def best_pair(E):
    """Exhaustive argmax of 1 - <e_i, e_j>, ties to the smallest (i, j), using exact summation."""
    n = len(E)
    best = None
    for i in range(n):
        for j in range(i + 1, n):
            d = 1.0 - math.fsum(float(x) * float(y) for x, y in zip(E[i], E[j]))
            if best is None or d > best[0]:
                best = (d, i, j)
    return best[1], best[2]


# fuzzing ------------------------------------------------------------------

LABELS = ["person", "dog", "cat", "chair", "car", "bench", "armchair", "bicycle", "horse", "table"]

# values sitting exactly on the thresholds make ties and boundary cases common
_AREA_SNAP = [0.01, 0.05, 0.2, 0.6, 0.7, 0.8]
_CONF_SNAP = [0.5, 0.8, 0.85, 0.87, 0.88]


def fuzz_box(rng, label=None):
    label = label or str(rng.choice(LABELS))
    if rng.random() < 0.3:
        A = float(rng.choice(_AREA_SNAP))
        w = float(rng.uniform(max(A, 0.05), 1.0))
        h = A / w
        if h > 1.0:
            w, h = math.sqrt(A), math.sqrt(A)
    else:
        w, h = float(rng.uniform(0.02, 1.0)), float(rng.uniform(0.02, 1.0))
    if rng.random() < 0.3:  # hug an edge so border rules fire
        xc = float(rng.choice([w / 2, 1 - w / 2, rng.uniform(0, 1)]))
        yc = float(rng.choice([h / 2, 1 - h / 2, 0.5]))
    else:
        xc, yc = float(rng.uniform(0, 1)), float(rng.uniform(0, 1))
    xc, yc = min(max(xc, 0.0), 1.0), min(max(yc, 0.0), 1.0)
    conf = float(rng.choice(_CONF_SNAP)) if rng.random() < 0.35 else float(rng.uniform(0.3, 1.0))
    return (label, xc, yc, w, h, conf)


def fuzz_frame(rng, kind):
    if kind == "single":
        n = 1 if rng.random() < 0.85 else int(rng.integers(0, 3))
        return [fuzz_box(rng, "person") for _ in range(n)]
    if kind == "three":
        n = 3 if rng.random() < 0.9 else int(rng.choice([2, 4]))
        boxes = []
        for k in range(n):
            b = fuzz_box(rng, "person")
            if rng.random() < 0.6:  # spread columns so IoU often passes
                w = min(b[3], 0.3)
                b = (b[0], (k + 0.5) / n, b[2], w, b[4], b[5])
            boxes.append(b)
        return boxes
    n = int(rng.integers(0, 8))
    boxes = [fuzz_box(rng) for _ in range(n)]
    if rng.random() < 0.5:
        boxes.append(fuzz_box(rng, "person"))
    return boxes

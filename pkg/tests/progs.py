"""Program builders and independent oracles shared by the test modules."""

from __future__ import annotations

import numpy as np

from pointercad.grammar import (
    Arc,
    Chamfer,
    Circle,
    EPart,
    Extrude,
    Fillet,
    FrameSpec,
    Line,
    Loop,
    Point2,
    PointerRef,
    Profile,
    Program,
    Sketch,
)
from pointercad.kernel.surfaces import Line3

# base plane, frame direction and the world axes of the sketch (u, v) for
# a sketch normal to each world axis
AXIS_PLANES = {0: ("Right", "X+", (1, 2)), 1: ("Front", "Y+", (2, 0)), 2: ("Top", "Z+", (0, 1))}

WORLD = ((-1.0, -1.0, -1.0), 2.0)


def rect_profile(x0, y0, x1, y1) -> Profile:
    pts = [Point2(x0, y0), Point2(x1, y0), Point2(x1, y1), Point2(x0, y1)]
    return Profile((Loop(tuple(Line(p) for p in pts)),))


def circle_profile(cx, cy, r) -> Profile:
    return Profile((Loop((Circle(Point2(cx, cy), r),)),))


def base_sketch(axis: int, profiles, hint=(0.0, 0.0), scale=1.0, rotation=0.0) -> Sketch:
    plane, direction, _ = AXIS_PLANES[axis]
    return Sketch(PointerRef("base_plane", plane), FrameSpec(direction, Point2(*hint), rotation, scale), tuple(profiles))


def box_part(lo, hi, axis: int, op: str, origin, size) -> EPart:
    """Axis-aligned box [lo, hi] (world units) sketched on the base plane normal to ``axis``.

    The box must straddle that plane: lo[axis] <= 0 <= hi[axis].
    """
    a, b = AXIS_PLANES[axis][2]
    x0, y0 = (lo[a] - origin[a]) / size, (lo[b] - origin[b]) / size
    x1, y1 = (hi[a] - origin[a]) / size, (hi[b] - origin[b]) / size
    sk = base_sketch(axis, [rect_profile(x0, y0, x1, y1)])
    return EPart((sk,), Extrude(hi[axis] / size, -lo[axis] / size, op))


def unit_cube_program() -> Program:
    """[0, 1]^3 in the world box [-1, 1]^3."""
    o, L = WORLD
    return Program((box_part((0, 0, 0), (1, 1, 1), 2, "New", o, L),), o, L)


def cube_with_hole(diameter: float) -> Program:
    """Unit cube minus a through-hole along z of the given diameter, centred at (0.5, 0.5)."""
    o, L = WORLD
    hole = EPart(
        (base_sketch(2, [circle_profile(0.75, 0.75, diameter / 2 / L)]),),
        Extrude(0.6, 0.1, "Cut"),
    )
    return Program(unit_cube_program().steps + (hole,), o, L)


def find_edge(solid, predicate) -> str:
    for e in solid.edges:
        if isinstance(e.curve, Line3) and predicate(e.curve):
            return e.stable_id
    raise LookupError("no matching edge")


def vertical_edge_at(solid, x, y) -> str:
    def ok(c):
        d = c.direction
        return abs(abs(d[2]) - 1) < 1e-9 and abs(c.start[0] - x) < 1e-9 and abs(c.start[1] - y) < 1e-9

    return find_edge(solid, ok)


def blended_cube(solid, kind: str, value: float) -> Program:
    """Unit cube with the vertical edge at x = y = 1 chamfered or filleted (world ``value``)."""
    o, L = WORLD
    ref = PointerRef("edge", vertical_edge_at(solid, 1.0, 1.0))
    step = Chamfer(value / L, (ref,)) if kind == "chamfer" else Fillet(value / L, (ref,))
    return Program(unit_cube_program().steps + (step,), o, L)


# ---------------------------------------------------------------------------
# random grammar-valid programs on the quantization grid
# ---------------------------------------------------------------------------


def _grid(rng, q, lo=0, hi=None):
    top = 2**q - 1
    return int(rng.integers(lo, top + 1 if hi is None else hi + 1))


def random_program(rng: np.random.Generator, q: int) -> Program:
    """A structurally valid program whose values all sit exactly on the q-bit grid."""
    top = 2**q - 1

    def nv(lo=0):
        return _grid(rng, q, lo) / top

    def ag(lo=0, hi=None):
        return (_grid(rng, q, lo, hi) * 360.0 / top) % 360.0

    def ref(kind):
        if kind == "base_plane":
            return PointerRef(kind, str(rng.choice(["Right", "Front", "Top"])))
        a, b = rng.integers(1000, 9000, size=2)
        return PointerRef(kind, f"F{a}" if kind == "face" else f"F{a}~F{b}")

    def point(snap_p=0.3):
        snap = ref("edge") if rng.random() < snap_p else None
        return Point2(nv(), nv(), snap)

    def loop():
        if rng.random() < 0.25:
            return Loop((Circle(point(), nv(1)),))
        n = int(rng.integers(2, 6))
        while True:
            pts = [point(0.2) for _ in range(n)]
            if all((pts[i].x, pts[i].y) != (pts[(i + 1) % n].x, pts[(i + 1) % n].y) for i in range(n)):
                break
        return Loop(tuple(Arc(p, ag(1, top - 1), str(rng.choice(["CW", "CCW"]))) if rng.random() < 0.3 else Line(p) for p in pts))

    def sketch():
        kind = "base_plane" if rng.random() < 0.5 else "face"
        frame = FrameSpec(str(rng.choice(["X+", "X-", "Y+", "Y-", "Z+", "Z-"])), point(), ag(), 2.0 * nv(1))
        profiles = tuple(Profile(tuple(loop() for _ in range(int(rng.integers(1, 3))))) for _ in range(int(rng.integers(1, 3))))
        return Sketch(ref(kind), frame, profiles)

    def epart(first):
        e_pos = nv(1)
        op = "New" if first else str(rng.choice(["New", "Join", "Cut", "Intersect"]))
        return EPart(tuple(sketch() for _ in range(int(rng.integers(1, 3)))), Extrude(e_pos, nv(), op))

    steps = [epart(True)]
    for _ in range(int(rng.integers(0, 4))):
        r = rng.random()
        if r < 0.6:
            steps.append(epart(False))
        else:
            edges = tuple(ref("edge") for _ in range(int(rng.integers(1, 4))))
            steps.append(Chamfer(nv(1), edges) if r < 0.8 else Fillet(nv(1), edges))
    origin = tuple(float(v) for v in rng.uniform(-5, 5, 3))
    return Program(tuple(steps), origin, float(rng.uniform(0.5, 10)))


# ---------------------------------------------------------------------------
# voxel oracle for axis-aligned box programs
# ---------------------------------------------------------------------------


def voxel_volume(boxes, res: int = 256, lo=-1.0, hi=1.0) -> float:
    """Volume of a sequence of ``(op, box_lo, box_hi)`` booleans on a res^3 grid of voxel centres."""
    h = (hi - lo) / res
    c = lo + h * (np.arange(res) + 0.5)
    occ = None
    for op, blo, bhi in boxes:
        masks = [(c >= blo[i]) & (c <= bhi[i]) for i in range(3)]
        inside = masks[0][:, None, None] & masks[1][None, :, None] & masks[2][None, None, :]
        if occ is None or op == "New":
            occ = inside if occ is None else occ | inside
        elif op == "Join":
            occ |= inside
        elif op == "Cut":
            occ &= ~inside
        elif op == "Intersect":
            occ &= inside
    return float(occ.sum()) * h**3


def random_box(rng: np.random.Generator, cell: float = 1 / 32):
    """A random box on a 1/32 world grid that straddles one base plane; returns (axis, lo, hi)."""
    axis = int(rng.integers(3))
    lo, hi = np.zeros(3), np.zeros(3)
    for i in range(3):
        if i == axis:
            lo[i] = -cell * rng.integers(0, 20)
            hi[i] = cell * rng.integers(1, 26)
        else:
            lo[i] = cell * rng.integers(-28, 12)
            hi[i] = min(lo[i] + cell * rng.integers(6, 30), 1.0)
    return axis, lo, hi


def random_box_program(rng: np.random.Generator, max_steps: int = 3):
    """Program of up to ``max_steps`` axis-aligned box booleans plus its voxel-oracle description."""
    o, L = WORLD
    n = int(rng.integers(1, max_steps + 1))
    steps, boxes = [], []
    for k in range(n):
        axis, lo, hi = random_box(rng)
        op = "New" if k == 0 else str(rng.choice(["Join", "Cut", "Intersect", "New"], p=[0.35, 0.35, 0.2, 0.1]))
        steps.append(box_part(tuple(lo), tuple(hi), axis, op, o, L))
        boxes.append((op, lo, hi))
    return Program(tuple(steps), o, L), boxes

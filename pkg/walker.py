"""
Smart kinetic walk generation on the square lattice.

The walk starts at the origin, never revisits a site and never steps onto a trapping
site (one from which no path of unvisited in-domain sites reaches the exterior).
Neighbours outside the domain are always steppable: stepping there ends the walk.

`step` is the readable reference stepper. `run_walk` drives the same rules through
an integer occupancy grid compiled with numba when it is installed; both consume
the deviate stream identically, so they produce the same exit for the same stream.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from geometry import (
    DiskDomain,
    Domain,
    ExitRecord,
    LatticeEmbedding,
    contains,
    contains_many,
    exit_record,
    is_admissible_spacing,
    origin_clearance,
    project_many,
    sample_rotation,
)
from transition import TABLE_FIELDS, CaseKind, RelativeDirection, TransitionTable, classify_step, sample_step

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

logger = logging.getLogger(__name__)

if HAVE_NUMBA:
    _jit = nb.njit(nogil=True, cache=False)
else:
    logger.debug("numba not installed; lattice kernel runs as plain Python")

    def _jit(func):
        return func

Site = tuple[int, int]

# east, north, west, south
DIRECTIONS: tuple[Site, ...] = ((1, 0), (0, 1), (-1, 0), (0, -1))
RING_OFFSETS: tuple[Site, ...] = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))

_MOVE_INDEX = {RelativeDirection.FRONT: 0, RelativeDirection.LEFT: 1, RelativeDirection.RIGHT: 2}

_STEP_X = np.array([d[0] for d in DIRECTIONS], dtype=np.int64)
_STEP_Y = np.array([d[1] for d in DIRECTIONS], dtype=np.int64)


class LatticeConfigurationError(ValueError):
    """Raised when the lattice spacing is too coarse for the domain."""


class WalkInvariantError(RuntimeError):
    """Raised when a walk reaches a state the SKW rules make impossible."""


class SiteStatus(Enum):
    OCCUPIED = "occupied"
    TRAPPING = "trapping"
    ALLOWABLE = "allowable"


@dataclass
class WalkState:
    occupancy: set[Site] = field(default_factory=lambda: {(0, 0)})
    path: list[Site] = field(default_factory=lambda: [(0, 0)])
    current: Site = (0, 0)
    heading: Site | None = None


class DeviateStream:
    """Uniform deviates drawn from a numpy Generator in blocks, consumed one at a time."""

    def __init__(self, generator: np.random.Generator, block_size: int = 512) -> None:
        self._generator = generator
        self._block_size = block_size
        self._buffer = np.empty(0)
        self._position = 0

    def random(self) -> float:
        if self._position >= self._buffer.size:
            self._refill()
        value = float(self._buffer[self._position])
        self._position += 1
        return value

    def block(self) -> tuple[np.ndarray, int]:
        """The current buffer and read position, refilled first when exhausted."""
        if self._position >= self._buffer.size:
            self._refill()
        return self._buffer, self._position

    def seek(self, position: int) -> None:
        """Mark the buffer consumed up to `position` (after a caller read it directly)."""
        self._position = int(position)

    def _refill(self) -> None:
        self._buffer = self._generator.random(self._block_size)
        self._position = 0


def turn_left(heading: Site) -> Site:
    return (-heading[1], heading[0])


def turn_right(heading: Site) -> Site:
    return (heading[1], -heading[0])


def _inside(site: Site, embedding: LatticeEmbedding, domain: Domain) -> bool:
    return contains(domain, embedding.to_plane(site[0], site[1]))


def _reaches_exterior(start: Site, occupancy: set[Site], embedding: LatticeEmbedding, domain: Domain) -> bool:
    """Breadth-first search over unvisited in-domain sites, stopping at the first exterior site."""
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in DIRECTIONS:
            neighbor = (x + dx, y + dy)
            if neighbor in seen or neighbor in occupancy:
                continue
            if not _inside(neighbor, embedding, domain):
                return True
            seen.add(neighbor)
            queue.append(neighbor)
    return False


def site_status(site: Site, state: WalkState, embedding: LatticeEmbedding, domain: Domain) -> SiteStatus:
    """
    Status of a neighbour of the current site.

    Exterior neighbours come back ALLOWABLE: they are exits, not blocks.
    """

    if site in state.occupancy:
        return SiteStatus.OCCUPIED
    if not _inside(site, embedding, domain):
        return SiteStatus.ALLOWABLE
    if _reaches_exterior(site, state.occupancy, embedding, domain):
        return SiteStatus.ALLOWABLE
    return SiteStatus.TRAPPING


def _needs_trap_check(state: WalkState, embedding: LatticeEmbedding, domain: Domain) -> bool:
    """
    True unless the free in-domain candidates all lie on one unbroken arc of the ring
    of eight sites around the current site, with no candidate outside the domain.

    Consecutive ring sites are lattice neighbours, so candidates on one free arc are
    joined. The current site was allowable when entered and its escape path leaves
    through a candidate, so with no exit among the candidates one of them, and with it
    the whole arc, still reaches the exterior.
    """

    cx, cy = state.current
    hx, hy = state.heading
    candidates = {(hx, hy), (-hy, hx), (hy, -hx)}
    blocked = []
    for dx, dy in RING_OFFSETS:
        site = (cx + dx, cy + dy)
        if not _inside(site, embedding, domain):
            if (dx, dy) in candidates:
                return True
            blocked.append(True)
        else:
            blocked.append(site in state.occupancy)

    # the predecessor is occupied, so the ring always has a break to start from
    start = RING_OFFSETS.index((-hx, -hy))
    arc = 0
    candidate_arc = None
    for offset in range(1, len(RING_OFFSETS) + 1):
        index = (start + offset) % len(RING_OFFSETS)
        if blocked[index]:
            arc += 1
        elif RING_OFFSETS[index] in candidates:
            if candidate_arc is None:
                candidate_arc = arc
            elif candidate_arc != arc:
                return True
    return False


def _trapped_candidates(
    seeds: list[Site],
    occupancy: set[Site],
    embedding: LatticeEmbedding,
    domain: Domain,
    exit_available: bool,
) -> set[Site]:
    """
    Decide which in-domain candidates are trapping.

    One breadth-first search per candidate runs in lockstep, a node at a time. Searches
    that touch are merged; a search that reaches the exterior is free, one that runs out
    of sites is a closed pocket. When no candidate is itself an exit and only one search
    is left open with none free, that one must be free, so the cost of a decision is
    bounded by the pocket sizes.
    """

    count = len(seeds)
    parent = list(range(count))

    def find(index: int) -> int:
        while parent[index] != index:
            parent[index] = parent[parent[index]]
            index = parent[index]
        return index

    owner = {site: index for index, site in enumerate(seeds)}
    frontiers = [deque([site]) for site in seeds]
    free = [False] * count
    closed = [False] * count

    while True:
        roots = {find(index) for index in range(count)}
        open_roots = [root for root in roots if not free[root] and not closed[root]]
        if not open_roots:
            break
        if len(open_roots) == 1 and not exit_available and not any(free[root] for root in roots):
            free[open_roots[0]] = True
            break

        for root in open_roots:
            if find(root) != root or free[root]:
                continue
            queue = frontiers[root]
            if not queue:
                closed[root] = True
                continue
            x, y = queue.popleft()
            for dx, dy in DIRECTIONS:
                neighbor = (x + dx, y + dy)
                if neighbor in occupancy:
                    continue
                if not _inside(neighbor, embedding, domain):
                    free[root] = True
                    break
                claimed = owner.get(neighbor)
                if claimed is None:
                    owner[neighbor] = root
                    queue.append(neighbor)
                    continue
                other = find(claimed)
                if other != root:
                    parent[other] = root
                    queue.extend(frontiers[other])
                    frontiers[other] = deque()
                    if free[other]:
                        free[root] = True
                        break

    return {seeds[index] for index in range(count) if not free[find(index)]}


def validate_walk_state(state: WalkState, embedding: LatticeEmbedding, domain: Domain) -> None:
    """Self-avoidance and containment checks used by the debug harness."""
    if len(state.occupancy) != len(state.path):
        raise WalkInvariantError(
            f"occupancy has {len(state.occupancy)} sites but the path has {len(state.path)}"
        )
    if state.path[-1] != state.current:
        raise WalkInvariantError("current site is not the end of the path")
    for site in state.path:
        if not _inside(site, embedding, domain):
            raise WalkInvariantError(f"path site {site} lies outside the domain")


def first_step(
    state: WalkState,
    embedding: LatticeEmbedding,
    domain: Domain,
    rng: DeviateStream | np.random.Generator,
) -> WalkState:
    """Move from the origin to one of its four neighbours, each with probability 1/4."""

    if state.path != [(0, 0)]:
        raise WalkInvariantError("first_step expects a walk sitting at the origin")

    neighbors = [(dx, dy) for dx, dy in DIRECTIONS]
    if not all(_inside(site, embedding, domain) for site in neighbors):
        raise LatticeConfigurationError(
            f"spacing {embedding.spacing} is too coarse: an origin neighbour falls outside {domain}"
        )

    index = min(int(rng.random() * 4), 3)
    target = neighbors[index]
    state.occupancy.add(target)
    state.path.append(target)
    state.current = target
    state.heading = DIRECTIONS[index]
    return state


def step(
    state: WalkState,
    table: TransitionTable,
    embedding: LatticeEmbedding,
    domain: Domain,
    rng: DeviateStream | np.random.Generator,
) -> WalkState | ExitRecord:
    """Advance one site, or return the exit record when the chosen site is outside."""

    if state.heading is None:
        raise WalkInvariantError("step called before first_step")

    cx, cy = state.current
    # front, left, right
    candidates = [
        (cx + dx, cy + dy) for dx, dy in (state.heading, turn_left(state.heading), turn_right(state.heading))
    ]
    occupied = [site in state.occupancy for site in candidates]
    outside = [not taken and not _inside(site, embedding, domain) for site, taken in zip(candidates, occupied)]
    seeds = [site for site, taken, out in zip(candidates, occupied, outside) if not taken and not out]

    trapped: set[Site] = set()
    if seeds and _needs_trap_check(state, embedding, domain):
        trapped = _trapped_candidates(seeds, state.occupancy, embedding, domain, any(outside))

    blocked = [taken or site in trapped for site, taken in zip(candidates, occupied)]
    case = classify_step(*blocked)
    if case.kind is CaseKind.DEAD_END:
        raise WalkInvariantError(
            f"dead end at {state.current} after {len(state.path) - 1} steps (heading {state.heading})"
        )

    move = _MOVE_INDEX[sample_step(table, case, rng.random())]
    target = candidates[move]
    if outside[move]:
        return exit_record(domain, embedding.to_plane(*target), steps=len(state.path))

    state.occupancy.add(target)
    state.path.append(target)
    state.heading = (target[0] - cx, target[1] - cy)
    state.current = target
    return state


# Kernel status codes.
_EXITED = 0
_NEED_DEVIATES = 1
_NEED_ROOM = 2
_DEAD_END = 3


@_jit
def _lattice_inside(i, j, geometry):
    """contains(domain, to_plane(i, j)) with the same float operations.

    geometry = (spacing, cos, sin, kind, p0, p1, p2); kind 0 is a disk (cx, cy, r),
    kind 1 a strip (top, bottom, unused).
    """
    x = geometry[0] * (geometry[1] * i - geometry[2] * j)
    y = geometry[0] * (geometry[2] * i + geometry[1] * j)
    if geometry[3] == 0.0:
        dx = x - geometry[4]
        dy = y - geometry[5]
        return dx * dx + dy * dy < geometry[6] * geometry[6]
    return geometry[5] < y and y < geometry[4]


@_jit
def _ring_offset(k):
    # same order as RING_OFFSETS
    if k == 0:
        return 1, 0
    if k == 1:
        return 1, 1
    if k == 2:
        return 0, 1
    if k == 3:
        return -1, 1
    if k == 4:
        return -1, 0
    if k == 5:
        return -1, -1
    if k == 6:
        return 0, -1
    return 1, -1


@_jit
def _ring_index(dx, dy):
    if dx == 1:
        return 0
    if dy == 1:
        return 2
    if dx == -1:
        return 4
    return 6


@_jit
def _step_offset(d):
    # same order as DIRECTIONS
    if d == 0:
        return 1, 0
    if d == 1:
        return 0, 1
    if d == 2:
        return -1, 0
    return 0, -1


@_jit
def _ring_needs_check(cx, cy, hx, hy, grid, origin, geometry):
    """Grid form of _needs_trap_check: 1 to check, 0 to skip, -1 when the grid is too small."""
    front = _ring_index(hx, hy)
    left = _ring_index(-hy, hx)
    right = _ring_index(hy, -hx)
    blocked = 0
    for k in range(8):
        dx, dy = _ring_offset(k)
        i = cx + dx
        j = cy + dy
        if not _lattice_inside(i, j, geometry):
            if k == front or k == left or k == right:
                return 1
            blocked |= 1 << k
            continue
        gi = i - origin[0]
        gj = j - origin[1]
        if gi < 0 or gj < 0 or gi >= grid.shape[0] or gj >= grid.shape[1]:
            return -1
        if grid[gi, gj] != 0:
            blocked |= 1 << k

    start = _ring_index(-hx, -hy)
    arc = 0
    candidate_arc = -1
    for offset in range(1, 9):
        k = (start + offset) % 8
        if (blocked >> k) & 1:
            arc += 1
        elif k == front or k == left or k == right:
            if candidate_arc < 0:
                candidate_arc = arc
            elif candidate_arc != arc:
                return 1
    return 0


@_jit
def _find_root(parent, k):
    while parent[k] != k:
        parent[k] = parent[parent[k]]
        k = parent[k]
    return k


@_jit
def _mark_trapped(cand, flags, exit_available, grid, visit, owner, queue_x, queue_y, origin, geometry, stamp):
    """
    Grid form of _trapped_candidates; sets flags[k, 2] for trapped candidates.

    flags columns are (outside, occupied, trapped). Returns False when a search walks
    off the grid, leaving the flags unusable.
    """
    parent = np.arange(3)
    active = np.zeros(3, dtype=np.bool_)
    free = np.zeros(3, dtype=np.bool_)
    closed = np.zeros(3, dtype=np.bool_)
    head = np.zeros(3, dtype=np.int64)
    tail = np.zeros(3, dtype=np.int64)

    for k in range(3):
        if flags[k, 0] != 0 or flags[k, 1] != 0:
            continue
        active[k] = True
        gi = cand[k, 0] - origin[0]
        gj = cand[k, 1] - origin[1]
        visit[gi, gj] = stamp
        owner[gi, gj] = k
        queue_x[k, 0] = cand[k, 0]
        queue_y[k, 0] = cand[k, 1]
        tail[k] = 1

    while True:
        open_count = 0
        last_open = -1
        any_free = False
        for k in range(3):
            if not active[k] or _find_root(parent, k) != k:
                continue
            if free[k]:
                any_free = True
            elif not closed[k]:
                open_count += 1
                last_open = k
        if open_count == 0:
            break
        if open_count == 1 and not exit_available and not any_free:
            free[last_open] = True
            break

        for root in range(3):
            if not active[root] or free[root] or closed[root] or _find_root(parent, root) != root:
                continue
            member = -1
            for m in range(3):
                if active[m] and head[m] < tail[m] and _find_root(parent, m) == root:
                    member = m
                    break
            if member < 0:
                closed[root] = True
                continue

            x = queue_x[member, head[member]]
            y = queue_y[member, head[member]]
            head[member] += 1
            for d in range(4):
                dx, dy = _step_offset(d)
                i = x + dx
                j = y + dy
                if not _lattice_inside(i, j, geometry):
                    free[root] = True
                    break
                gi = i - origin[0]
                gj = j - origin[1]
                if gi < 0 or gj < 0 or gi >= grid.shape[0] or gj >= grid.shape[1]:
                    return False
                if grid[gi, gj] != 0:
                    continue
                if visit[gi, gj] != stamp:
                    visit[gi, gj] = stamp
                    owner[gi, gj] = root
                    queue_x[root, tail[root]] = i
                    queue_y[root, tail[root]] = j
                    tail[root] += 1
                    continue
                other = _find_root(parent, owner[gi, gj])
                if other != root:
                    parent[other] = root
                    if free[other]:
                        free[root] = True
                        break

    for k in range(3):
        if active[k] and not free[_find_root(parent, k)]:
            flags[k, 2] = 1
    return True


@_jit
def _choose_move(probs, front_blocked, left_blocked, right_blocked, u):
    """classify_step + sample_step as indices: 0 front, 1 left, 2 right."""
    blocked_count = int(front_blocked) + int(left_blocked) + int(right_blocked)
    if blocked_count == 0:
        if u < probs[0]:
            return 0
        if u < probs[0] + probs[1]:
            return 1
        return 2
    if blocked_count == 2:
        if not front_blocked:
            return 0
        if not left_blocked:
            return 1
        return 2
    if left_blocked:
        return 0 if u < probs[3] else 2
    if right_blocked:
        return 0 if u < probs[5] else 1
    return 1 if u < probs[7] else 2


@_jit
def _advance(grid, visit, owner, queue_x, queue_y, origin, walk, geometry, probs, cand, flags, deviates, position):
    """
    Run steps until the walk exits or the caller has to act.

    walk = (x, y, heading_x, heading_y, path_sites, search_stamp), updated in place.
    Returns (status, deviate position, x, y); x, y is the exit site for _EXITED and
    the stuck site for _DEAD_END. A step is only committed once its deviate is read,
    so _NEED_ROOM and _NEED_DEVIATES can be resumed by calling again.
    """
    while True:
        if position >= deviates.shape[0]:
            return _NEED_DEVIATES, position, 0, 0
        cx = walk[0]
        cy = walk[1]
        hx = walk[2]
        hy = walk[3]
        cand[0, 0] = cx + hx
        cand[0, 1] = cy + hy
        cand[1, 0] = cx - hy
        cand[1, 1] = cy + hx
        cand[2, 0] = cx + hy
        cand[2, 1] = cy - hx

        seeds = 0
        exit_available = False
        for k in range(3):
            flags[k, 0] = 0
            flags[k, 1] = 0
            flags[k, 2] = 0
            if not _lattice_inside(cand[k, 0], cand[k, 1], geometry):
                flags[k, 0] = 1
                exit_available = True
                continue
            gi = cand[k, 0] - origin[0]
            gj = cand[k, 1] - origin[1]
            if gi < 0 or gj < 0 or gi >= grid.shape[0] or gj >= grid.shape[1]:
                return _NEED_ROOM, position, 0, 0
            if grid[gi, gj] != 0:
                flags[k, 1] = 1
            else:
                seeds += 1

        if seeds > 0:
            need = _ring_needs_check(cx, cy, hx, hy, grid, origin, geometry)
            if need < 0:
                return _NEED_ROOM, position, 0, 0
            if need > 0:
                walk[5] += 1
                if not _mark_trapped(
                    cand, flags, exit_available, grid, visit, owner, queue_x, queue_y, origin, geometry, walk[5]
                ):
                    return _NEED_ROOM, position, 0, 0

        front_blocked = flags[0, 1] != 0 or flags[0, 2] != 0
        left_blocked = flags[1, 1] != 0 or flags[1, 2] != 0
        right_blocked = flags[2, 1] != 0 or flags[2, 2] != 0
        if front_blocked and left_blocked and right_blocked:
            return _DEAD_END, position, cx, cy

        u = deviates[position]
        position += 1
        choice = _choose_move(probs, front_blocked, left_blocked, right_blocked, u)
        tx = cand[choice, 0]
        ty = cand[choice, 1]
        if flags[choice, 0] != 0:
            return _EXITED, position, tx, ty

        grid[tx - origin[0], ty - origin[1]] = 1
        walk[0] = tx
        walk[1] = ty
        walk[2] = tx - cx
        walk[3] = ty - cy
        walk[4] += 1


class _LatticeWorkspace:
    """Occupancy grid and search buffers for one walk; the grid doubles when a walk outgrows it."""

    def __init__(self, low: tuple[int, int], shape: tuple[int, int]) -> None:
        self.origin = np.array(low, dtype=np.int64)
        self.grid = np.zeros(shape, dtype=np.int8)
        self._allocate_search()

    @classmethod
    def for_domain(cls, domain: Domain, embedding: LatticeEmbedding) -> "_LatticeWorkspace":
        spacing = embedding.spacing
        if isinstance(domain, DiskDomain):
            cos_r = math.cos(embedding.rotation)
            sin_r = math.sin(embedding.rotation)
            center_i = (cos_r * domain.center_x + sin_r * domain.center_y) / spacing
            center_j = (-sin_r * domain.center_x + cos_r * domain.center_y) / spacing
            half = domain.radius / spacing + 3.0
            low = (math.floor(center_i - half), math.floor(center_j - half))
            size = math.ceil(2.0 * half) + 2
            return cls(low, (size, size))
        half = math.ceil(domain.width / spacing) + 4
        return cls((-half, -half), (2 * half + 1, 2 * half + 1))

    def _allocate_search(self) -> None:
        self.visit = np.zeros(self.grid.shape, dtype=np.int32)
        self.owner = np.zeros(self.grid.shape, dtype=np.int64)
        self.queue_x = np.empty((3, self.grid.size), dtype=np.int64)
        self.queue_y = np.empty((3, self.grid.size), dtype=np.int64)

    def occupy(self, site: Site) -> None:
        self.grid[site[0] - self.origin[0], site[1] - self.origin[1]] = 1

    def grow(self) -> None:
        rows, cols = self.grid.shape
        grid = np.zeros((2 * rows, 2 * cols), dtype=np.int8)
        grid[rows // 2 : rows // 2 + rows, cols // 2 : cols // 2 + cols] = self.grid
        self.origin = self.origin - np.array([rows // 2, cols // 2], dtype=np.int64)
        self.grid = grid
        self._allocate_search()
        logger.debug("Lattice grid grown to %s", grid.shape)


def _geometry_vector(domain: Domain, embedding: LatticeEmbedding) -> np.ndarray:
    if isinstance(domain, DiskDomain):
        kind, params = 0.0, (domain.center_x, domain.center_y, domain.radius)
    else:
        kind, params = 1.0, (domain.top, domain.bottom, 0.0)
    return np.array(
        [embedding.spacing, math.cos(embedding.rotation), math.sin(embedding.rotation), kind, *params],
        dtype=np.float64,
    )


def _walk_on_grid(
    state: WalkState,
    table: TransitionTable,
    embedding: LatticeEmbedding,
    domain: Domain,
    stream: DeviateStream,
) -> ExitRecord:
    workspace = _LatticeWorkspace.for_domain(domain, embedding)
    for site in state.path:
        workspace.occupy(site)
    walk = np.array([*state.current, *state.heading, len(state.path), 0], dtype=np.int64)
    geometry = _geometry_vector(domain, embedding)
    probs = np.array([getattr(table, name) for name in TABLE_FIELDS], dtype=np.float64)
    cand = np.zeros((3, 2), dtype=np.int64)
    flags = np.zeros((3, 3), dtype=np.int8)

    while True:
        deviates, position = stream.block()
        status, position, x, y = _advance(
            workspace.grid,
            workspace.visit,
            workspace.owner,
            workspace.queue_x,
            workspace.queue_y,
            workspace.origin,
            walk,
            geometry,
            probs,
            cand,
            flags,
            deviates,
            position,
        )
        stream.seek(position)
        if status == _EXITED:
            return exit_record(domain, embedding.to_plane(int(x), int(y)), steps=int(walk[4]))
        if status == _NEED_ROOM:
            workspace.grow()
        elif status == _DEAD_END:
            raise WalkInvariantError(f"dead end at {(int(x), int(y))} after {int(walk[4]) - 1} steps")


def run_walk(
    domain: Domain,
    table: TransitionTable,
    spacing: float,
    rng: DeviateStream | np.random.Generator,
    check_invariants: bool = False,
) -> ExitRecord:
    """
    One rotation-averaged SKW from the origin until it leaves the domain.

    With check_invariants the walk runs on the reference stepper and validates the
    state after every step.
    """

    if not is_admissible_spacing(domain, spacing):
        raise LatticeConfigurationError(
            f"spacing {spacing} must be below the origin clearance {origin_clearance(domain):.6g}"
        )

    stream = rng if isinstance(rng, DeviateStream) else DeviateStream(rng)
    embedding = LatticeEmbedding(spacing=spacing, rotation=sample_rotation(stream.random()))
    state = first_step(WalkState(), embedding, domain, stream)
    if not check_invariants:
        return _walk_on_grid(state, table, embedding, domain, stream)

    while True:
        outcome = step(state, table, embedding, domain, stream)
        if isinstance(outcome, ExitRecord):
            return outcome
        validate_walk_state(outcome, embedding, domain)


def run_simple_walks(
    domain: Domain,
    spacing: float,
    rng: np.random.Generator,
    num_walks: int,
) -> dict[str, np.ndarray]:
    """
    Ordinary nearest-neighbour random walks, advanced together as arrays.

    Each walk gets its own uniform lattice rotation and stops at its first site outside
    the domain, projected exactly as an SKW exit.
    """

    if not is_admissible_spacing(domain, spacing):
        raise LatticeConfigurationError(
            f"spacing {spacing} must be below the origin clearance {origin_clearance(domain):.6g}"
        )

    rotation = sample_rotation(rng.random(num_walks))
    cos_r = np.cos(rotation)
    sin_r = np.sin(rotation)
    i = np.zeros(num_walks, dtype=np.int64)
    j = np.zeros(num_walks, dtype=np.int64)
    steps = np.zeros(num_walks, dtype=np.int64)
    theta = np.zeros(num_walks, dtype=float)
    side = np.empty(num_walks, dtype=object)

    active = np.arange(num_walks)
    while active.size:
        moves = rng.integers(0, 4, size=active.size)
        i[active] += _STEP_X[moves]
        j[active] += _STEP_Y[moves]
        steps[active] += 1

        x = spacing * (cos_r[active] * i[active] - sin_r[active] * j[active])
        y = spacing * (sin_r[active] * i[active] + cos_r[active] * j[active])
        inside = contains_many(domain, x, y)

        left = ~inside
        if np.any(left):
            exited = active[left]
            theta[exited], side[exited] = project_many(domain, x[left], y[left])
        active = active[inside]

    return {"theta": theta, "side": side, "steps": steps}

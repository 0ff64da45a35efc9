from collections import Counter, deque

import numpy as np
import pytest

import walker
from geometry import TWO_PI, DiskDomain, ExitRecord, LatticeEmbedding, StripDomain, contains, sample_rotation
from transition import table_from_mapping, uniform_table
from walker import (
    DIRECTIONS,
    DeviateStream,
    LatticeConfigurationError,
    SiteStatus,
    WalkInvariantError,
    WalkState,
    _LatticeWorkspace,
    _needs_trap_check,
    _trapped_candidates,
    first_step,
    run_simple_walks,
    run_walk,
    site_status,
    step,
    turn_left,
    turn_right,
)

UNIT = LatticeEmbedding(spacing=1.0)


def state_with(occupied, current=(0, 0)):
    occupancy = set(occupied) | {(0, 0), current}
    return WalkState(occupancy=occupancy, path=[(0, 0), current] if current != (0, 0) else [(0, 0)], current=current)


def free_sites_oracle(occupancy, embedding, domain, box):
    """Flood inward from every in-domain site touching the exterior; whatever is reached is not trapped."""
    low, high = box
    inside = {
        (i, j)
        for i in range(low, high + 1)
        for j in range(low, high + 1)
        if (i, j) not in occupancy and contains(domain, embedding.to_plane(i, j))
    }
    free = set()
    queue = deque()
    for i, j in inside:
        if any((i + dx, j + dy) not in inside and (i + dx, j + dy) not in occupancy for dx, dy in DIRECTIONS):
            free.add((i, j))
            queue.append((i, j))
    while queue:
        i, j = queue.popleft()
        for dx, dy in DIRECTIONS:
            neighbor = (i + dx, j + dy)
            if neighbor in inside and neighbor not in free:
                free.add(neighbor)
                queue.append(neighbor)
    return free


def test_turns_rotate_the_heading():
    assert turn_left((1, 0)) == (0, 1)
    assert turn_right((1, 0)) == (0, -1)
    assert turn_left(turn_left((0, 1))) == (0, -1)


def test_site_status_reports_occupied_exterior_and_enclosed_sites():
    domain = DiskDomain(0.0, 0.0, 100.0)
    ring = [(10, 11), (10, 9), (9, 10), (11, 10)]
    state = state_with(ring)

    assert site_status((10, 11), state, UNIT, domain) is SiteStatus.OCCUPIED
    assert site_status((10, 10), state, UNIT, domain) is SiteStatus.TRAPPING
    assert site_status((200, 0), state, UNIT, domain) is SiteStatus.ALLOWABLE
    assert site_status((12, 10), state, UNIT, domain) is SiteStatus.ALLOWABLE


def test_pocket_sealed_by_the_path_is_trapping_but_one_gap_frees_it():
    domain = DiskDomain(0.0, 0.0, 100.0)
    wall = [(x, 20) for x in range(20, 25)] + [(x, 24) for x in range(20, 25)]
    wall += [(20, y) for y in range(21, 24)] + [(24, y) for y in range(21, 24)]
    state = state_with(wall)

    for site in [(x, y) for x in range(21, 24) for y in range(21, 24)]:
        assert site_status(site, state, UNIT, domain) is SiteStatus.TRAPPING

    opened = state_with([site for site in wall if site != (24, 22)])
    assert site_status((22, 22), opened, UNIT, domain) is SiteStatus.ALLOWABLE


def test_region_between_wall_and_boundary_is_not_trapping():
    strip = StripDomain(top=5.5, bottom=-5.5)
    walls = [(3, y) for y in range(-5, 6)] + [(6, y) for y in range(-5, 6)]
    state = state_with(walls)

    assert site_status((4, 0), state, UNIT, strip) is SiteStatus.ALLOWABLE
    assert site_status((5, -5), state, UNIT, strip) is SiteStatus.ALLOWABLE


def test_site_status_matches_flood_fill_oracle_on_random_configurations():
    domain = DiskDomain(5.5, 5.5, 8.0)
    rng = np.random.default_rng(2017)
    region = [(i, j) for i in range(12) for j in range(12)]
    disagreements = 0

    for _ in range(10_000):
        count = int(rng.integers(0, 41))
        picks = rng.choice(len(region), size=count, replace=False)
        occupancy = {region[index] for index in picks} | {(0, 0)}
        candidates = [site for site in region if site not in occupancy and contains(domain, UNIT.to_plane(*site))]
        site = candidates[int(rng.integers(len(candidates)))]

        state = WalkState(occupancy=occupancy, path=sorted(occupancy), current=(0, 0))
        free = free_sites_oracle(occupancy, UNIT, domain, (-3, 14))
        expected = SiteStatus.ALLOWABLE if site in free else SiteStatus.TRAPPING
        if site_status(site, state, UNIT, domain) is not expected:
            disagreements += 1

    assert disagreements == 0


@pytest.mark.parametrize("domain", [DiskDomain(0.3, -0.25, 1.0), StripDomain(0.6, -0.4)])
def test_lockstep_trap_search_agrees_with_site_status_along_walks(domain):
    table = uniform_table()
    for seed in range(25):
        stream = DeviateStream(np.random.default_rng(seed))
        embedding = LatticeEmbedding(spacing=0.08, rotation=sample_rotation(stream.random()))
        state = first_step(WalkState(), embedding, domain, stream)

        while True:
            cx, cy = state.current
            candidates = [
                (cx + hx, cy + hy) for hx, hy in (state.heading, turn_left(state.heading), turn_right(state.heading))
            ]
            seeds = [s for s in candidates if s not in state.occupancy and contains(domain, embedding.to_plane(*s))]
            exit_available = any(
                s not in state.occupancy and not contains(domain, embedding.to_plane(*s)) for s in candidates
            )
            expected = {s for s in seeds if site_status(s, state, embedding, domain) is SiteStatus.TRAPPING}

            if seeds:
                found = _trapped_candidates(seeds, state.occupancy, embedding, domain, exit_available)
                assert found == expected
            if not _needs_trap_check(state, embedding, domain):
                assert not expected

            outcome = step(state, table, embedding, domain, stream)
            if isinstance(outcome, ExitRecord):
                break


def test_first_step_rejects_too_coarse_lattice(d2):
    with pytest.raises(LatticeConfigurationError):
        first_step(WalkState(), LatticeEmbedding(spacing=0.5), d2, np.random.default_rng(0))
    with pytest.raises(LatticeConfigurationError):
        run_walk(d2, uniform_table(), 0.45, np.random.default_rng(0))


def test_first_step_moves_to_a_neighbour(d1):
    state = first_step(WalkState(), LatticeEmbedding(spacing=0.1), d1, np.random.default_rng(4))

    assert state.current in DIRECTIONS
    assert state.heading == state.current
    assert state.path == [(0, 0), state.current]


def test_step_returns_exit_record_when_the_chosen_site_is_outside(d2):
    path = [(0, y) for y in range(6)]
    state = WalkState(occupancy=set(path), path=path, current=(0, 5), heading=(0, 1))
    always_front = table_from_mapping({"a1": 1.0, "a2": 0.0, "a3": 0.0})

    outcome = step(state, always_front, LatticeEmbedding(spacing=0.1), d2, np.random.default_rng(1))

    assert isinstance(outcome, ExitRecord)
    assert outcome.side == "top"
    assert outcome.boundary_point == pytest.approx((0.0, 0.6))
    assert outcome.steps == 6


def test_dead_end_is_a_walk_invariant_violation(d1):
    state = WalkState(
        occupancy={(0, -1), (0, 0), (0, 1), (-1, 0), (1, 0)},
        path=[(0, -1), (0, 0)],
        current=(0, 0),
        heading=(0, 1),
    )

    with pytest.raises(WalkInvariantError):
        step(state, uniform_table(), LatticeEmbedding(spacing=0.05), d1, np.random.default_rng(0))


def test_walks_exit_without_dead_ends_and_stay_self_avoiding(d1, d2):
    for domain in (d1, d2):
        for seed in range(12):
            record = run_walk(domain, uniform_table(), 0.08, np.random.default_rng(seed), check_invariants=True)
            assert 0.0 <= record.theta < TWO_PI
            assert record.steps >= 1
            assert not contains(domain, record.outside_point)


def test_run_walk_is_reproducible(d1):
    first = run_walk(d1, uniform_table(), 0.05, np.random.default_rng(99))
    second = run_walk(d1, uniform_table(), 0.05, np.random.default_rng(99))

    assert first == second


def test_deviate_stream_replays_the_generator_sequence():
    stream = DeviateStream(np.random.default_rng(5), block_size=8)
    drawn = [stream.random() for _ in range(20)]

    reference = np.random.default_rng(5)
    expected = reference.random(8).tolist() + reference.random(8).tolist() + reference.random(8).tolist()[:4]
    assert drawn == expected


def test_simple_walks_exit_through_the_boundary(d2):
    result = run_simple_walks(d2, 0.1, np.random.default_rng(8), 500)

    assert result["theta"].shape == (500,)
    assert np.all((result["theta"] >= 0.0) & (result["theta"] < TWO_PI))
    assert np.all(result["steps"] >= 1)
    assert set(result["side"].tolist()) <= {"top", "bottom"}


def pocket_beside_current_site():
    """Walker at (5, 5) heading up; the left candidate (4, 5) is a sealed one-site pocket."""
    return WalkState(
        occupancy={(3, 5), (4, 6), (4, 4), (5, 4), (5, 5)},
        path=[(5, 4), (5, 5)],
        current=(5, 5),
        heading=(0, 1),
    )


def test_trapping_candidate_is_never_sampled_and_the_others_split_evenly():
    domain = DiskDomain(0.0, 0.0, 100.0)
    rng = np.random.default_rng(21)
    n = 20_000

    targets = Counter(step(pocket_beside_current_site(), uniform_table(), UNIT, domain, rng).current for _ in range(n))

    assert targets[(4, 5)] == 0
    assert set(targets) == {(5, 6), (6, 5)}
    bound = 4.0 * np.sqrt(0.25 / n)
    assert abs(targets[(5, 6)] / n - 0.5) < bound
    assert abs(targets[(6, 5)] / n - 0.5) < bound


def test_first_step_picks_each_neighbour_a_quarter_of_the_time(d1):
    rng = np.random.default_rng(17)
    embedding = LatticeEmbedding(spacing=0.1)
    n = 40_000

    targets = Counter(first_step(WalkState(), embedding, d1, rng).current for _ in range(n))

    assert set(targets) == set(DIRECTIONS)
    bound = 4.0 * np.sqrt(0.25 * 0.75 / n)
    for site in DIRECTIONS:
        assert abs(targets[site] / n - 0.25) < bound


def test_trap_check_is_skipped_after_a_turn_with_one_free_arc():
    path = [(0, 0), (1, 0), (1, 1), (2, 1)]
    state = WalkState(occupancy=set(path), path=path, current=(2, 1), heading=(1, 0))

    assert not _needs_trap_check(state, UNIT, DiskDomain(0.0, 0.0, 100.0))


def test_trap_check_runs_when_a_candidate_is_outside(d2):
    path = [(0, y) for y in range(6)]
    state = WalkState(occupancy=set(path), path=path, current=(0, 5), heading=(0, 1))

    assert _needs_trap_check(state, LatticeEmbedding(spacing=0.1), d2)


SKEWED = table_from_mapping(
    {"a1": 0.6, "a2": 0.3, "a3": 0.1, "b1": 0.2, "b2": 0.8, "c1": 0.7, "c2": 0.3, "d1": 0.35, "d2": 0.65}
)


@pytest.mark.parametrize("domain", [DiskDomain(0.3, -0.25, 1.0), StripDomain(0.6, -0.4)])
@pytest.mark.parametrize("table", [uniform_table(), SKEWED])
def test_grid_kernel_matches_the_reference_stepper(domain, table):
    for seed in range(10):
        fast = run_walk(domain, table, 0.08, np.random.default_rng(seed))
        reference = run_walk(domain, table, 0.08, np.random.default_rng(seed), check_invariants=True)
        assert fast == reference


def test_grid_kernel_grows_a_small_grid_without_changing_the_walk(monkeypatch, d1, d2):
    monkeypatch.setattr(
        walker._LatticeWorkspace,
        "for_domain",
        classmethod(lambda cls, domain, embedding: cls((-2, -2), (5, 5))),
    )

    for domain in (d1, d2):
        for seed in range(5):
            fast = run_walk(domain, SKEWED, 0.08, np.random.default_rng(seed))
            reference = run_walk(domain, SKEWED, 0.08, np.random.default_rng(seed), check_invariants=True)
            assert fast == reference


def test_workspace_grow_keeps_occupied_sites():
    workspace = _LatticeWorkspace((-2, -2), (5, 5))
    workspace.occupy((1, 2))

    workspace.grow()

    assert workspace.grid.shape == (10, 10)
    assert workspace.origin.tolist() == [-4, -4]
    assert workspace.grid[5, 6] == 1
    assert workspace.grid.sum() == 1
    assert workspace.visit.shape == (10, 10)
    assert workspace.queue_x.shape == (3, 100)


def test_grid_kernel_draws_the_same_deviates_as_the_reference_stepper(d1):
    fast_stream = DeviateStream(np.random.default_rng(3), block_size=7)
    reference_stream = DeviateStream(np.random.default_rng(3), block_size=7)

    run_walk(d1, SKEWED, 0.08, fast_stream)
    run_walk(d1, SKEWED, 0.08, reference_stream, check_invariants=True)

    assert fast_stream.random() == reference_stream.random()
